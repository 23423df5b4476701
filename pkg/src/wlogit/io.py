"""CSV ingestion, JSON run configs and deterministic report serialization.

Floats are written with 17 significant digits (``%.17g``) and JSON keys are
sorted, so identical reports give byte-identical files.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .core import Dataset
from .sim import SimConfig, SimReport
from .solver import FitResult, SolverConfig
from .tuning import CvReport, LoocvSummary
from .weights import WeightConfig, WeightVector

NA_TOKENS = {"", "na", "nan", "null", "none"}

SIM_CSV_COLUMNS = [
    "method",
    "p",
    "rho",
    "pattern",
    "l1_mean",
    "l1_sd",
    "pred_rms",
    "pred_mean_norm",
    "support_rate",
    "replicates_completed",
]
CV_CSV_COLUMNS = ["lambda", "mean_loss", "se_loss"]
FIT_CSV_COLUMNS = ["index", "beta", "weight"]


class InputError(ValueError):
    """Malformed input file or configuration."""


class NaPolicy(str, enum.Enum):
    ERROR = "error"
    DROP_ROW = "droprow"


class MissingValueWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CsvSpec:
    path: Union[str, Path]
    response_column: Union[int, str] = 0
    delimiter: str = ","
    has_header: bool = True
    na_policy: NaPolicy = NaPolicy.ERROR
    label_map: Optional[dict] = None

    def __post_init__(self):
        object.__setattr__(self, "na_policy", NaPolicy(self.na_policy))


def parse_label_map(text: str) -> dict:
    """``"ALL=1,AML=0"`` -> ``{"ALL": 1, "AML": 0}``."""
    out = {}
    for item in text.split(","):
        key, sep, val = item.partition("=")
        if not sep or val.strip() not in ("0", "1"):
            raise InputError(f"bad label map entry {item!r}; expected LABEL=0 or LABEL=1")
        out[key.strip()] = int(val)
    return out


def load_csv(spec: CsvSpec) -> Dataset:
    """Read a dataset; the response column is coerced to {0, 1}.

    Either the whole file parses or an ``InputError`` naming the offending
    row and column is raised.
    """
    with open(spec.path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=spec.delimiter))
    rows = [r for r in rows if r]
    header = None
    if spec.has_header:
        if not rows:
            raise InputError("empty file")
        header, rows = rows[0], rows[1:]
    if not rows:
        raise InputError("no data rows")
    width = len(rows[0])
    if isinstance(spec.response_column, str):
        if header is None or spec.response_column not in header:
            raise InputError(f"response column {spec.response_column!r} not found")
        ycol = header.index(spec.response_column)
    else:
        ycol = int(spec.response_column)
        if not 0 <= ycol < width:
            raise InputError(f"response column index {ycol} out of range")
    if width < 2:
        raise InputError("need a response column and at least one covariate")
    xs, ys, dropped = [], [], 0
    first = 2 if spec.has_header else 1
    for r_i, row in enumerate(rows):
        line = r_i + first
        if len(row) != width:
            raise InputError(f"row {line}: expected {width} fields, got {len(row)}")
        if any(c.strip().lower() in NA_TOKENS for c in row):
            if spec.na_policy is NaPolicy.DROP_ROW:
                dropped += 1
                continue
            col = next(j for j, c in enumerate(row) if c.strip().lower() in NA_TOKENS)
            raise InputError(f"row {line}, column {col + 1}: missing value")
        ys.append(_parse_label(row[ycol].strip(), spec.label_map, line, ycol))
        vals = []
        for j, c in enumerate(row):
            if j == ycol:
                continue
            try:
                v = float(c)
            except ValueError:
                raise InputError(f"row {line}, column {j + 1}: cannot parse {c!r} as a number") from None
            if not math.isfinite(v):
                raise InputError(f"row {line}, column {j + 1}: non-finite value {c!r}")
            vals.append(v)
        xs.append(vals)
    if dropped:
        warnings.warn(f"dropped {dropped} row(s) with missing values", MissingValueWarning, stacklevel=2)
    if not xs:
        raise InputError("no complete rows")
    return Dataset(np.array(xs, dtype=float), np.array(ys, dtype=float))


def _parse_label(c: str, label_map: Optional[dict], line: int, col: int) -> float:
    if label_map is not None:
        if c not in label_map:
            raise InputError(f"row {line}, column {col + 1}: label {c!r} not in label map")
        return float(label_map[c])
    try:
        v = float(c)
    except ValueError:
        v = None
    if v not in (0.0, 1.0):
        raise InputError(f"row {line}, column {col + 1}: response {c!r} is not 0/1 (pass a label map)")
    return v


def save_csv(data: Dataset, path: Union[str, Path]) -> None:
    """Write ``y, x1..xp`` with a header and full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["y"] + [f"x{j + 1}" for j in range(data.p)])
        for yi, xi in zip(data.y, data.x):
            wr.writerow([str(int(yi))] + [_fmt(v) for v in xi])


# --- deterministic JSON -----------------------------------------------------


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return "%.17g" % v


def _encode(obj: Any) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, enum.Enum):
        return json.dumps(obj.value)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {_encode(v)}" for k, v in items) + "}"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return _encode(to_jsonable(obj)) + "\n"


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, FitResult):
        return {
            "lambda": obj.lam,
            "objective": obj.objective,
            "iterations": obj.iterations,
            "kkt_max_violation": obj.kkt_max_violation,
            "converged": obj.converged,
            "beta": obj.coef.beta,
            "intercept": obj.coef.intercept,
            "weights": obj.weights.w,
            "weight_scheme": obj.weights.scheme.value,
        }
    if isinstance(obj, CvReport):
        return {
            "lambda": obj.lambda_path.values,
            "mean_loss": obj.mean_loss,
            "se_loss": obj.se_loss,
            "lambda_opt": obj.lambda_opt,
            "fold_assignment": obj.fold_assignment,
            "loss_kind": obj.loss_kind.value,
            "fold_failures": obj.fold_failures,
        }
    if isinstance(obj, SimReport):
        return {
            "config": obj.config,
            "per_method": obj.per_method,
            "per_replicate": obj.per_replicate,
            "failures": obj.failures,
        }
    if isinstance(obj, LoocvSummary):
        return {
            "model_size_mean": obj.model_size_mean,
            "model_size_sd": obj.model_size_sd,
            "misclass_mean": obj.misclass_mean,
            "misclass_sd": obj.misclass_sd,
            "n_failed": obj.n_failed,
        }
    if isinstance(obj, WeightVector):
        return {"w": obj.w, "scheme": obj.scheme.value, "normalized": obj.normalized,
                "degenerate_columns": list(obj.degenerate)}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return dataclasses.asdict(obj)
    return obj


def sim_csv_rows(report: SimReport) -> list[dict]:
    c = report.config
    rows = []
    for m, agg in report.per_method.items():
        rows.append({
            "method": m,
            "p": c["p"],
            "rho": c["rho"],
            "pattern": c["pattern"],
            "l1_mean": agg["l1_error_mean"],
            "l1_sd": agg["l1_error_sd"],
            "pred_rms": agg["pred_error_rms"],
            "pred_mean_norm": agg["pred_error_mean"],
            "support_rate": agg["support_recovery_rate"],
            "replicates_completed": agg["replicates_completed"],
        })
    return rows


def _csv_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return _fmt(float(v))
    return str(v)


def write_csv_rows(rows: list[dict], columns: list[str], path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_csv_cell(r[c]) for c in columns])


def write_report(report, path: Union[str, Path], fmt: str = "json") -> None:
    """Serialize a SimReport, CvReport, FitResult or LoocvSummary.

    CSV layouts: SimReport -> ``SIM_CSV_COLUMNS`` (one row per method);
    CvReport -> ``CV_CSV_COLUMNS`` (one row per lambda); FitResult ->
    ``FIT_CSV_COLUMNS`` (one row per coefficient).
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise InputError(f"directory {path.parent} does not exist")
    fmt = fmt.lower()
    if fmt == "json":
        path.write_text(dumps(report), encoding="utf-8")
        return
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(report, SimReport):
        write_csv_rows(sim_csv_rows(report), SIM_CSV_COLUMNS, path)
    elif isinstance(report, CvReport):
        rows = [
            {"lambda": lam, "mean_loss": m, "se_loss": s}
            for lam, m, s in zip(report.lambda_path.values, report.mean_loss, report.se_loss)
        ]
        write_csv_rows(rows, CV_CSV_COLUMNS, path)
    elif isinstance(report, FitResult):
        rows = [{"index": j + 1, "beta": b, "weight": w}
                for j, (b, w) in enumerate(zip(report.coef.beta, report.weights.w))]
        write_csv_rows(rows, FIT_CSV_COLUMNS, path)
    else:
        raise TypeError(f"no CSV layout for {type(report).__name__}")


def read_sim_csv(path: Union[str, Path]) -> list[dict]:
    """Inverse of the SimReport CSV layout."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = dict(row)
            rec["p"] = int(rec["p"])
            rec["replicates_completed"] = int(rec["replicates_completed"])
            for k in ("rho", "l1_mean", "l1_sd", "pred_rms", "pred_mean_norm", "support_rate"):
                rec[k] = float(rec[k])
            out.append(rec)
    return out


# --- run configuration --------------------------------------------------------


@dataclass(frozen=True)
class TuningConfig:
    k: int = 10
    n_lambda: int = 100
    min_ratio: float = 1e-4
    loss: str = "deviance"


@dataclass(frozen=True)
class RunConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    weights: WeightConfig = field(default_factory=WeightConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    seed: int = 0
    output: Optional[str] = None


def _build(cls, section: str, raw: Any):
    if not isinstance(raw, dict):
        raise InputError(f"{section}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise InputError(f"{section}: unknown key(s) {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{section}: {exc}") from None


def parse_run_config(doc: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON document. Unknown keys are
    rejected at every level; missing keys take the defaults."""
    if not isinstance(doc, dict):
        raise InputError("run config must be a JSON object")
    sections = {"solver": SolverConfig, "weights": WeightConfig, "sim": SimConfig, "tuning": TuningConfig}
    unknown = set(doc) - set(sections) - {"seed", "output"}
    if unknown:
        raise InputError(f"unknown top-level key(s) {sorted(unknown)}")
    kw = {name: _build(cls, name, doc[name]) for name, cls in sections.items() if name in doc}
    if "seed" in doc:
        kw["seed"] = int(doc["seed"])
    if "output" in doc:
        kw["output"] = doc["output"]
    return RunConfig(**kw)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    return parse_run_config(doc)
