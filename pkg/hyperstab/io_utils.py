import csv
import json
import logging
import os
from pathlib import Path

import numpy as np

from hyperstab.errors import IoError
from hyperstab.solver.grid import TRACE_COLUMNS, SimulationTrace

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "HYPERSTAB_OUTPUT_DIR"

SYNTH_FILE = "synth.json"
TRACE_FILE = "trace.csv"
SWEEP_DIR = "sweep"
SUMMARY_FILE = "summary.csv"
REPORT_PREFIX = "verify_report"

SUMMARY_COLUMNS = (
    "lambda", "q", "nx", "t_opt", "gamma", "residual_linf", "decay_pass", "worst_margin"
)


def snapshot_name(t: float) -> str:
    return f"snapshot_t{t:g}.csv"


def sweep_trace_name(Lambda: float, q: float, nx: int) -> str:
    return f"trace_L{Lambda:g}_q{q:g}_nx{nx}.csv"


def resolve_output_dir(configured: str) -> Path:
    """The scenario's output directory unless HYPERSTAB_OUTPUT_DIR names a usable one."""
    override = os.getenv(OUTPUT_DIR_ENV)
    if override:
        path = Path(override)
        if path.exists() and not path.is_dir():
            logger.warning(f"{OUTPUT_DIR_ENV}={override} is not a directory. Using {configured}")
        else:
            return path
    return Path(configured)


def ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create output directory {path}: {e}") from e
    return path


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header, rows):
    ensure_dir(path.parent)
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    logger.debug(f"wrote {path}")
    return path


def write_trace(path: Path, trace: SimulationTrace):
    return write_csv(path, TRACE_COLUMNS, (row.as_tuple() for row in trace.rows))


def write_snapshot(path: Path, values: np.ndarray):
    x = np.linspace(0.0, 1.0, values.shape[1])
    header = ["x"] + [f"w{i + 1}" for i in range(values.shape[0])]
    return write_csv(path, header, zip(x, *values))


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_json(path: Path, data: dict):
    ensure_dir(path.parent)
    try:
        with open(path, "w") as f:
            json.dump(to_jsonable(data), f, indent=2)
            f.write("\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def write_text(path: Path, text: str):
    ensure_dir(path.parent)
    try:
        path.write_text(text)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], np.array(rows[1:], dtype=float)
