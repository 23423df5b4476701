"""Monte-Carlo comparison of Lasso and the four weighted-Lasso schemes on
AR(1) Gaussian designs."""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .core import Coefficients, Dataset, SupportSet, sigmoid_prob
from .solver import SeparationError, SolverConfig, fit
from .tuning import cross_validate, default_path, threshold_coefficients
from .weights import Scheme, WeightConfig, WeightVector, compute_weights, normalize

log = logging.getLogger(__name__)

METHODS = ("lasso", "type1", "type2", "type3", "type4")
_SCHEME = {
    "lasso": Scheme.UNIFORM,
    "type1": Scheme.TYPE1,
    "type2": Scheme.TYPE2,
    "type3": Scheme.TYPE3,
    "type4": Scheme.TYPE4,
}


class Pattern(str, enum.Enum):
    PATTERN1 = "1"
    PATTERN2 = "2"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, v) -> "Pattern":
        return v if isinstance(v, cls) else cls(str(v))


def gen_ar1_gaussian(n: int, p: int, rho: float, seed=None) -> NDArray:
    """Rows i.i.d. N(0, S) with S_kl = rho^|k-l|, via the AR(1) recursion."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, p))
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    c = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + c * z[:, j]
    return x


def beta_star(pattern: Pattern | str, p: int, custom: Optional[Sequence[float]] = None) -> Coefficients:
    pattern = Pattern.parse(pattern)
    if pattern is Pattern.CUSTOM:
        if custom is None or len(custom) != p:
            raise ValueError("custom pattern needs a coefficient vector of length p")
        return Coefficients(np.asarray(custom, dtype=float))
    if p < 9:
        raise ValueError("built-in patterns need p >= 9")
    b = np.zeros(p)
    if pattern is Pattern.PATTERN1:
        b[:9] = 10.0
    else:
        b[:3], b[3:6], b[6:9] = 17.0, -5.0, 7.0
    return Coefficients(b)


def gen_responses(x: NDArray, beta: Coefficients, seed=None) -> NDArray:
    if x.shape[1] != beta.p:
        raise ValueError("dimension mismatch between x and beta")
    rng = np.random.default_rng(seed)
    prob = np.atleast_1d(sigmoid_prob(x @ beta.beta))
    return (rng.random(x.shape[0]) < prob).astype(float)


def prediction_error(x_test: NDArray, beta_star: Coefficients, beta_hat: Coefficients) -> float:
    """``||X_test beta* - X_test beta_hat||_2`` for one replicate."""
    return float(np.linalg.norm(x_test @ (beta_star.beta - beta_hat.beta)))


@dataclass(frozen=True)
class Recovery:
    contains_true: bool
    exact: bool
    size: int


def support_recovery(beta_hat: Coefficients, beta_star: Coefficients, limit: float = 0.0) -> Recovery:
    _, est = threshold_coefficients(beta_hat, limit)
    true = SupportSet.from_beta(beta_star.beta)
    return Recovery(true.issubset(est), est.indices == true.indices, len(est))


@dataclass(frozen=True)
class SimConfig:
    n_train: int = 100
    n_test: int = 200
    p: int = 50
    rho: float = 0.3
    pattern: Pattern = Pattern.PATTERN1
    n_replicates: int = 100
    seed: int = 0
    methods: tuple = METHODS
    custom_beta: Optional[tuple] = None
    cv_folds: int = 10
    n_lambda: int = 100
    min_ratio: float = 1e-4
    support_limit: float = 1e-4
    r: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "pattern", Pattern.parse(self.pattern))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pattern"] = self.pattern.value
        d["methods"] = list(self.methods)
        d["custom_beta"] = None if self.custom_beta is None else list(self.custom_beta)
        return d


@dataclass
class SimReport:
    config: dict
    per_method: dict
    per_replicate: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)


def replicate_seed(seed: int, r: int) -> np.random.SeedSequence:
    """Independent stream for replicate ``r``, independent of run order."""
    return np.random.SeedSequence(seed, spawn_key=(r,))


def _fit_methods(train, lam, methods, wcfg, cfg, weight_override=None):
    """Fit every method at the shared ``lam``; returns {method: FitResult or None}."""
    out = {}
    uniform = WeightVector.uniform(train.p)
    lasso = None
    if "lasso" in methods or "type4" in methods:
        lasso = _guarded_fit("lasso", train, uniform, lam, cfg)
    for m in methods:
        if m == "lasso":
            out[m] = lasso
            continue
        if weight_override is not None and m in weight_override:
            w = weight_override[m]
        elif m == "type4" and lasso is None:
            # no pilot estimate to build the weights from
            out[m] = None
            continue
        else:
            w = normalize(compute_weights(_SCHEME[m], train, wcfg, pilot=lasso.coef if lasso else None))
        out[m] = _guarded_fit(m, train, w, lam, cfg)
    return out


def _guarded_fit(method, train, w, lam, cfg):
    try:
        return fit(train, w, lam, cfg)
    except SeparationError as exc:
        log.warning("%s: %s", method, exc)
        return None


def run_replicate(cfg: SimConfig, r: int, solver_cfg: SolverConfig = SolverConfig(), weight_override=None) -> dict:
    """One replicate: data, CV-selected lambda under uniform weights, all
    methods fitted at that lambda. Returns one row per method."""
    s_x, s_y, s_test, s_cv = replicate_seed(cfg.seed, r).spawn(4)
    bstar = beta_star(cfg.pattern, cfg.p, cfg.custom_beta)
    x = gen_ar1_gaussian(cfg.n_train, cfg.p, cfg.rho, s_x)
    y = gen_responses(x, bstar, s_y)
    x_test = gen_ar1_gaussian(cfg.n_test, cfg.p, cfg.rho, s_test)
    train = Dataset(x, y)
    uniform = WeightVector.uniform(cfg.p)
    path = default_path(train, uniform, cfg.n_lambda, cfg.min_ratio)
    cv = cross_validate(train, uniform, path, k=min(cfg.cv_folds, cfg.n_train), seed=s_cv, cfg=solver_cfg)
    lam = cv.lambda_opt
    fits = _fit_methods(train, lam, cfg.methods, WeightConfig(r=cfg.r), solver_cfg, weight_override)
    rows = []
    for m in cfg.methods:
        res = fits[m]
        row = {"replicate": r, "method": m, "lambda": lam}
        if res is None:
            row.update(failed=True)
        else:
            rec = support_recovery(res.coef, bstar, cfg.support_limit)
            row.update(
                failed=False,
                converged=bool(res.converged),
                l1_error=float(np.sum(np.abs(res.beta - bstar.beta))),
                pred_error=prediction_error(x_test, bstar, res.coef),
                contains_true=rec.contains_true,
                exact=rec.exact,
                size=rec.size,
            )
        rows.append(row)
    return {"replicate": r, "rows": rows}


def _task(args):
    cfg, r, solver_cfg = args
    return run_replicate(cfg, r, solver_cfg)


def aggregate(rows: list, methods: Sequence[str]) -> tuple[dict, dict]:
    per_method, failures = {}, {}
    for m in methods:
        mine = [row for row in rows if row["method"] == m]
        ok = [row for row in mine if not row["failed"]]
        failures[m] = len(mine) - len(ok)
        l1 = np.array([row["l1_error"] for row in ok])
        pe = np.array([row["pred_error"] for row in ok])
        nan = float("nan")
        per_method[m] = {
            "l1_error_mean": float(l1.mean()) if ok else nan,
            "l1_error_sd": float(l1.std(ddof=1)) if len(ok) > 1 else nan,
            "pred_error_rms": float(np.sqrt(np.mean(pe**2))) if ok else nan,
            "pred_error_mean": float(pe.mean()) if ok else nan,
            "pred_error_sd": float(pe.std(ddof=1)) if len(ok) > 1 else nan,
            "support_recovery_rate": float(np.mean([row["contains_true"] for row in ok])) if ok else nan,
            "exact_recovery_rate": float(np.mean([row["exact"] for row in ok])) if ok else nan,
            "mean_model_size": float(np.mean([row["size"] for row in ok])) if ok else nan,
            "replicates_completed": len(ok),
            "not_converged": int(sum(not row["converged"] for row in ok)),
        }
    return per_method, failures


def run_simulation(cfg: SimConfig, solver_cfg: SolverConfig = SolverConfig(), jobs: int = 1) -> SimReport:
    """Run all replicates (optionally on a process pool) and aggregate.

    Results are gathered by replicate index, so the report does not depend
    on ``jobs``. Methods whose fit diverged in a replicate are excluded from
    that method's aggregates and counted in ``failures``.
    """
    tasks = [(cfg, r, solver_cfg) for r in range(cfg.n_replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            reps = list(ex.map(_task, tasks))
    else:
        reps = [_task(t) for t in tasks]
    rows = [row for rep in sorted(reps, key=lambda d: d["replicate"]) for row in rep["rows"]]
    per_method, failures = aggregate(rows, cfg.methods)
    return SimReport(cfg.to_dict(), per_method, rows, failures)


STUDY_GRID = [
    (pattern, p, rho)
    for pattern in (Pattern.PATTERN1, Pattern.PATTERN2)
    for p in (50, 100, 150, 200)
    for rho in (0.3, 0.5, 0.8)
]
