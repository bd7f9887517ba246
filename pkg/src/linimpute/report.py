"""CSV report writing with embedded run metadata.

Metadata goes in ``# key=value`` comment lines ahead of the header so the
file stays loadable with ``pandas.read_csv(path, comment="#")``. The
``timestamp`` line is the only content that varies between identical runs.
"""

import csv
import datetime
import io

TIMESTAMP_KEY = "timestamp"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_table(columns, rows, metadata, timestamp=None):
    buf = io.StringIO()
    for key, value in metadata.items():
        buf.write(f"# {key}={_cell(value)}\n")
    if timestamp is None:
        timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    buf.write(f"# {TIMESTAMP_KEY}={timestamp}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(_cell(row.get(c)) for c in columns)
    return buf.getvalue()


def write_table(path, columns, rows, metadata, timestamp=None):
    text = render_table(columns, rows, metadata, timestamp)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def strip_timestamp(text):
    """Report contents without the timestamp line, for reproducibility checks."""
    return "".join(
        line for line in text.splitlines(keepends=True)
        if not line.startswith(f"# {TIMESTAMP_KEY}=")
    )


BENCHMARK_COLUMNS = ("method", "mean_mse", "std_mse", "converged", "completed",
                     "repetitions", "note")


def benchmark_rows(report):
    return [
        {
            "method": s.label,
            "mean_mse": s.mean_mse,
            "std_mse": s.std_mse,
            "converged": s.converged,
            "completed": s.completed,
            "repetitions": s.repetitions,
            "note": "; ".join(sorted(s.notes)),
        }
        for s in report.rows
    ]


def write_benchmark(path, report, timestamp=None):
    write_table(path, BENCHMARK_COLUMNS, benchmark_rows(report), report.metadata, timestamp)
