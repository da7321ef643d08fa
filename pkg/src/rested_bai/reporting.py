"""
Result files: CSV tables of run records, policy summaries, sweeps and bounds, and
standalone SVG line plots.
"""
import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from matplotlib import rc_context
from matplotlib.figure import Figure

from rested_bai.exceptions import ExperimentIOError
from rested_bai.harness import PolicyStats, RunRecord, SweepRow
from rested_bai.theory import BoundReport

logger = logging.getLogger(__name__)

RUN_RECORD_COLUMNS = [
    "policy",
    "run_id",
    "seed",
    "i_out",
    "tau_out",
    "regret",
    "commit_round",
    "commit_reason",
]
STATS_COLUMNS = [
    "policy",
    "num_runs",
    "mean_regret",
    "std_regret",
    "q50",
    "q90",
    "q99",
    "frac_exceeding",
    "mean_tau_out",
]
SWEEP_COLUMNS = ["param", "value"] + STATS_COLUMNS
BOUND_COLUMNS = [
    "kind",
    "T",
    "K",
    "rho",
    "U",
    "alpha",
    "delta_gap",
    "C",
    "value",
    "witness",
    "regret_bound",
]

PLOT_MARGIN = 0.05
SVG_SALT = "rested-bai"

Row = Union[RunRecord, PolicyStats, SweepRow, BoundReport]
PathLike = Union[str, Path]


def format_value(value: Any) -> str:
    """CSV text of a field: shortest round-trip repr for floats, empty for None."""
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _bound_row(report: BoundReport) -> List[Any]:
    inputs = report.inputs
    values: List[Any] = [report.kind]
    for column in BOUND_COLUMNS[1:8]:
        entry = inputs.get(column)
        if column in ("T", "K") and entry is not None:
            entry = int(entry)
        values.append(entry)
    return values + [report.value, report.witness, report.regret_bound]


def _stats_row(stats: PolicyStats) -> List[Any]:
    return [getattr(stats, column) for column in STATS_COLUMNS]


def _schema_for(rows: Sequence[Row], schema: Optional[List[str]]) -> List[str]:
    if schema is not None:
        return schema
    if not rows or isinstance(rows[0], RunRecord):
        return RUN_RECORD_COLUMNS
    if isinstance(rows[0], PolicyStats):
        return STATS_COLUMNS
    if isinstance(rows[0], SweepRow):
        return SWEEP_COLUMNS
    return BOUND_COLUMNS


def _cells(row: Row) -> List[Any]:
    if isinstance(row, RunRecord):
        return [getattr(row, column) for column in RUN_RECORD_COLUMNS]
    if isinstance(row, PolicyStats):
        return _stats_row(row)
    if isinstance(row, SweepRow):
        return [row.param, row.value] + _stats_row(row.stats)
    return _bound_row(row)


def emit_csv(
    rows: Sequence[Row], path: PathLike, schema: Optional[List[str]] = None
) -> None:
    """
    Write rows of a single type with one header line.

    Args:
        rows: RunRecords, PolicyStats, SweepRows or BoundReports
        path: Destination file
        schema: Header to use for an empty table (RunRecord columns by default)

    Raises:
        OSError: If the file cannot be written
    """
    header = _schema_for(rows, schema)
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(cell) for cell in _cells(row)])
    except OSError as e:
        logger.error("Error writing %s: %s", path, e)
        raise
    logger.info("Wrote %d rows to %s", len(rows), path)


def _optional_int(text: str) -> Optional[int]:
    return int(text) if text else None


def read_run_records(path: PathLike) -> List[RunRecord]:
    """Parse a file written by emit_csv from RunRecords."""
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != RUN_RECORD_COLUMNS:
            raise ValueError(
                f"{path} is not a run record file: header {reader.fieldnames}"
            )
        return [
            RunRecord(
                policy=row["policy"],
                run_id=int(row["run_id"]),
                seed=int(row["seed"]),
                i_out=int(row["i_out"]),
                tau_out=int(row["tau_out"]),
                regret=float(row["regret"]),
                commit_round=_optional_int(row["commit_round"]),
                commit_reason=row["commit_reason"] or None,
            )
            for row in reader
        ]


def read_table(path: PathLike) -> List[Dict[str, str]]:
    """Rows of any CSV file with a header, as dictionaries of text."""
    with open(path, "r", newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


@dataclass(frozen=True)
class PlotSeries:
    """One labelled line."""

    label: str
    x: Tuple[float, ...]
    y: Tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if len(self.x) != len(self.y):
            raise ValueError(
                f"Series {self.label!r}: {len(self.x)} x values, {len(self.y)} y values"
            )
        if not self.x:
            raise ValueError(f"Series {self.label!r} is empty")


@dataclass(frozen=True)
class AxesSpec:
    x_label: str
    y_label: str
    log_x: bool = False
    log_y: bool = False
    title: Optional[str] = None


def padded_limits(values: Sequence[float], log: bool = False) -> Tuple[float, float]:
    """
    Axis range covering values with a 5% margin on each side; the margin is taken
    in decades on log axes.

    Raises:
        ValueError: If values is empty, or a log axis gets a non-positive value
    """
    if not values:
        raise ValueError("Cannot compute limits of no values")
    if log:
        if min(values) <= 0:
            raise ValueError("Log axes need positive values")
        low, high = padded_limits([math.log10(v) for v in values])
        return 10.0**low, 10.0**high
    low, high = min(values), max(values)
    span = high - low
    if span == 0:
        span = abs(low) if low != 0 else 1.0
    return low - PLOT_MARGIN * span, high + PLOT_MARGIN * span


def emit_svg_plot(series: Sequence[PlotSeries], path: PathLike, axes: AxesSpec) -> None:
    """
    Draw the series as lines into a standalone SVG file.

    Output bytes depend only on the inputs: element ids come from a fixed salt,
    text stays text and the date stamp is omitted. Line i carries the id
    "series-line-i".

    Raises:
        ValueError: If no series is given
    """
    if not series:
        raise ValueError("At least one series is required")
    with rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        figure = Figure(figsize=(6.4, 4.8))
        ax = figure.add_subplot()
        for index, entry in enumerate(series):
            (line,) = ax.plot(entry.x, entry.y, label=entry.label)
            line.set_gid(f"series-line-{index}")
        xs = [value for entry in series for value in entry.x]
        ys = [value for entry in series for value in entry.y]
        if axes.log_x:
            ax.set_xscale("log")
        if axes.log_y:
            ax.set_yscale("log")
        ax.set_xlim(*padded_limits(xs, axes.log_x))
        ax.set_ylim(*padded_limits(ys, axes.log_y))
        ax.set_xlabel(axes.x_label)
        ax.set_ylabel(axes.y_label)
        if axes.title:
            ax.set_title(axes.title)
        ax.legend()
        try:
            figure.savefig(path, format="svg", metadata={"Date": None})
        except OSError as e:
            logger.error("Error writing %s: %s", path, e)
            raise
    logger.info("Wrote plot with %d series to %s", len(series), path)


def series_from_table(
    rows: Sequence[Dict[str, str]],
    x_column: str,
    y_column: str,
    group_column: str = "policy",
) -> List[PlotSeries]:
    """
    Group CSV rows into one series per value of group_column (a single series when
    the column is absent), sorted by x.

    Raises:
        ValueError: If a requested column is missing
    """
    if not rows:
        raise ValueError("No rows to plot")
    for column in (x_column, y_column):
        if column not in rows[0]:
            raise ValueError(
                f"Column {column!r} not found; available: {sorted(rows[0])}"
            )
    groups: Dict[str, List[Tuple[float, float]]] = {}
    for row in rows:
        key = row.get(group_column, y_column) if group_column in row else y_column
        groups.setdefault(key, []).append((float(row[x_column]), float(row[y_column])))
    result = []
    for label, points in groups.items():
        points.sort()
        xs, ys = zip(*points)
        result.append(PlotSeries(label, tuple(xs), tuple(ys)))
    return result


def write_experiment(
    records: Sequence[RunRecord], stats: Sequence[PolicyStats], output_dir: PathLike
) -> Tuple[Path, Path]:
    """
    Write runs.csv and summary.csv into output_dir, creating it if needed.

    Raises:
        ExperimentIOError: If either file cannot be written; the error keeps the
            records so a caller can retry elsewhere
    """
    directory = Path(output_dir)
    runs_path = directory / "runs.csv"
    summary_path = directory / "summary.csv"
    try:
        directory.mkdir(parents=True, exist_ok=True)
        emit_csv(records, runs_path, RUN_RECORD_COLUMNS)
        emit_csv(stats, summary_path, STATS_COLUMNS)
    except OSError as e:
        raise ExperimentIOError(
            f"Cannot write results to {directory}: {e}", records=list(records)
        ) from e
    return runs_path, summary_path
