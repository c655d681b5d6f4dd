"""Dataset ingestion from CSV and result emission (JSON lines / RFC 4180 CSV)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..core import DataError, Dataset, RaggedRowError

__all__ = [
    "RunReport",
    "emit_results",
    "load_csv",
    "report_from_dict",
    "reports_to_csv",
    "reports_to_json_lines",
]


def load_csv(path, *, label_column: bool = False) -> Dataset:
    """Load a numeric CSV file of points (one row per point, unit weights).

    A header row is auto-detected: if any cell of the first row fails to
    parse as a number the row is skipped.  With ``label_column=True`` the
    last column is dropped before parsing (class labels travel there in the
    usual UCI exports).  Errors name the offending 1-based line.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None

    rows: list[list[float]] = []
    arity: int | None = None
    for lineno, cells in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not cells or (len(cells) == 1 and not cells[0].strip()):
            continue
        if arity is None:
            arity = len(cells)
        elif len(cells) != arity:
            raise RaggedRowError(
                f"line {lineno}: expected {arity} cells, got {len(cells)}"
            )
        if label_column:
            cells = cells[:-1]
        try:
            row = [float(c) for c in cells]
        except ValueError:
            if lineno == 1 and not rows:
                continue  # header row
            raise DataError(f"line {lineno}: non-numeric cell") from None
        rows.append(row)

    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.asarray(rows, dtype=float))


# ---------------------------------------------------------------------------
# run reports


@dataclass(frozen=True)
class RunReport:
    """One experiment run's outcome: the chosen threshold, costs, declared
    outliers, and enough provenance to re-score it independently.

    ``theta`` is ``None`` (and ``theta_index`` is ``-1``) for algorithms that
    never clamp.  ``centers`` holds the flattened center coordinates;
    ``outliers`` the declared outlier indices.  The ``queries_used`` /
    ``budget`` / ``relaxed_constants`` trio only appears on oracle-model runs.
    """

    algorithm: str
    seed: int
    k: int
    z: int
    eps: float
    theta: float | None
    theta_index: int
    cost_phi_inliers: float
    cost_tau: float
    num_outliers: int
    runtime_ms: float
    distance_evals: int
    qualified: bool
    centers: tuple | None
    outliers: tuple | None
    queries_used: int | None = None
    budget: int | None = None
    relaxed_constants: bool | None = None


#: canonical column order for CSV emission (JSON objects sort their keys)
_COLUMNS = (
    "algorithm", "seed", "k", "z", "eps", "theta", "theta_index",
    "cost_phi_inliers", "cost_tau", "num_outliers", "runtime_ms",
    "distance_evals", "qualified", "queries_used", "budget",
    "relaxed_constants", "centers", "outliers",
)


def report_from_dict(d: dict) -> RunReport:
    """Rebuild a :class:`RunReport` from its JSON object form."""

    def opt(key, cast):
        v = d.get(key)
        return None if v is None else cast(v)

    return RunReport(
        algorithm=str(d["algorithm"]),
        seed=int(d["seed"]),
        k=int(d["k"]),
        z=int(d["z"]),
        eps=float(d["eps"]),
        theta=opt("theta", float),
        theta_index=int(d["theta_index"]),
        cost_phi_inliers=float(d["cost_phi_inliers"]),
        cost_tau=float(d["cost_tau"]),
        num_outliers=int(d["num_outliers"]),
        runtime_ms=float(d["runtime_ms"]),
        distance_evals=int(d["distance_evals"]),
        qualified=bool(d["qualified"]),
        centers=opt("centers", lambda v: tuple(float(x) for x in v)),
        outliers=opt("outliers", lambda v: tuple(int(x) for x in v)),
        queries_used=opt("queries_used", int),
        budget=opt("budget", int),
        relaxed_constants=opt("relaxed_constants", bool),
    )


def reports_to_json_lines(reports) -> str:
    """One sorted-key JSON object per line; floats keep shortest round-trip form."""
    return "".join(
        json.dumps(asdict(r), sort_keys=True, separators=(", ", ": ")) + "\n"
        for r in reports
    )


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return json.dumps(list(value))
    return repr(value) if isinstance(value, float) else str(value)


def reports_to_csv(reports) -> str:
    """RFC 4180 CSV with a fixed header; list-valued cells are JSON-encoded."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(_COLUMNS)
    for r in reports:
        d = asdict(r)
        writer.writerow([_csv_cell(d[c]) for c in _COLUMNS])
    return buf.getvalue()


def emit_results(reports, fmt: str, path) -> None:
    """Write reports to ``path`` as ``"json"`` (one object per line) or ``"csv"``."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to emit")
    if fmt == "json":
        text = reports_to_json_lines(reports)
    elif fmt == "csv":
        text = reports_to_csv(reports)
    else:
        raise ValueError(f"format must be 'json' or 'csv', got {fmt!r}")
    Path(path).write_text(text, newline="")
