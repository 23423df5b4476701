"""Penalty paths, cross-validation, LOOCV model-size reporting and the
theoretical lower bound on the tuning parameter."""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .core import Coefficients, Dataset, SupportSet, linear_predictor, log1pexp, score
from .solver import FitResult, SeparationError, SolverConfig, fit
from .weights import WeightVector

log = logging.getLogger(__name__)


class LossKind(str, enum.Enum):
    DEVIANCE = "deviance"
    MISCLASSIFICATION = "misclassification"


@dataclass(frozen=True)
class LambdaPath:
    values: NDArray[np.float64]
    n_lambda: int = 100
    min_ratio: float = 1e-4

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 1 or np.any(v <= 0) or np.any(np.diff(v) >= 0):
            raise ValueError("path values must be positive and strictly decreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_max(cls, lam_max: float, n_lambda: int = 100, min_ratio: float = 1e-4) -> "LambdaPath":
        if n_lambda == 1:
            return cls(np.array([lam_max]), 1, min_ratio)
        v = lam_max * np.exp(np.linspace(0.0, math.log(min_ratio), n_lambda))
        v[0], v[-1] = lam_max, lam_max * min_ratio
        return cls(v, n_lambda, min_ratio)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class CvReport:
    lambda_path: LambdaPath
    mean_loss: NDArray[np.float64]
    se_loss: NDArray[np.float64]
    lambda_opt: float
    fold_assignment: NDArray[np.int64]
    loss_kind: LossKind
    fold_failures: int = 0

    @property
    def index_opt(self) -> int:
        return int(np.flatnonzero(self.lambda_path.values == self.lambda_opt)[0])


def lambda_max(data: Dataset, w: WeightVector, fit_intercept: bool = False) -> float:
    """Smallest penalty level at which beta = 0 is optimal."""
    if fit_intercept:
        if data.obs_weights is None:
            ybar = float(np.mean(data.y))
        else:
            ybar = float(np.sum(data.obs_weights * data.y) / np.sum(data.obs_weights))
        if ybar in (0.0, 1.0):
            raise ValueError("only one class present; null model is degenerate")
        b0 = math.log(ybar / (1 - ybar))
        coef = Coefficients(np.zeros(data.p), b0)
    else:
        coef = Coefficients(np.zeros(data.p))
    lm = float(np.max(np.abs(score(data, coef)) / w.w))
    if not lm > 0:
        raise ValueError("lambda_max is zero: the score at beta = 0 vanishes in every column")
    return lm


def default_path(data: Dataset, w: WeightVector, n_lambda: int = 100, min_ratio: float = 1e-4,
                 fit_intercept: bool = False) -> LambdaPath:
    return LambdaPath.from_max(lambda_max(data, w, fit_intercept), n_lambda, min_ratio)


def stratified_folds(y: NDArray, k: int, seed) -> NDArray[np.int64]:
    """Fold ids in ``0..k-1``, balanced within each class."""
    n = y.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    offset = 0
    for cls in (0.0, 1.0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (offset + np.arange(idx.size)) % k
        offset += idx.size
    return folds


def heldout_losses(eta: NDArray, y: NDArray, kind: LossKind) -> NDArray:
    if kind is LossKind.DEVIANCE:
        return 2.0 * (log1pexp(eta) - y * eta)
    # pi >= 1/2 <=> eta >= 0
    return ((eta >= 0).astype(float) != y).astype(float)


def fit_path(data: Dataset, w: WeightVector, path: LambdaPath, cfg: SolverConfig = SolverConfig(),
             init: Optional[Coefficients] = None) -> list[FitResult]:
    """Warm-started fits along ``path``. Stops early (shorter list) if the
    iterates diverge."""
    out = []
    for lam in path.values:
        try:
            res = fit(data, w, lam, cfg, init)
        except SeparationError:
            log.warning("path stopped at lambda=%.3g: iterates diverge", lam)
            break
        out.append(res)
        init = res.coef
    return out


def _fold_task(args):
    data, w, path, cfg, folds, f, kind = args
    train = data.subset(folds != f)
    test_idx = np.flatnonzero(folds == f)
    test = data.subset(test_idx)
    fits = fit_path(train, w, path, cfg)
    losses = np.empty((len(path), test_idx.size))
    for j in range(len(path)):
        res = fits[min(j, len(fits) - 1)] if fits else None
        coef = res.coef if res is not None else Coefficients.zeros(data.p, cfg.fit_intercept)
        losses[j] = heldout_losses(linear_predictor(test.x, coef), test.y, kind)
    if test.obs_weights is not None:
        losses = losses * (test.obs_weights * data.n)
    return losses, len(fits) < len(path)


def cross_validate(
    data: Dataset,
    w: WeightVector,
    path: LambdaPath,
    k: int = 10,
    loss_kind: LossKind | str = LossKind.DEVIANCE,
    seed=0,
    cfg: SolverConfig = SolverConfig(),
    folds: Optional[Sequence[int]] = None,
    jobs: int = 1,
) -> CvReport:
    """k-fold cross-validation over ``path``.

    ``mean_loss`` averages held-out losses over all observations; ``se_loss``
    is the standard error of the per-fold means. Ties in mean loss resolve to
    the larger lambda.
    """
    kind = LossKind(loss_kind)
    if folds is None:
        folds = stratified_folds(data.y, k, seed)
    else:
        folds = np.asarray(folds, dtype=np.int64)
        if folds.shape[0] != data.n:
            raise ValueError("fold assignment must have length n")
        k = int(folds.max()) + 1
    if k > data.n:
        raise ValueError("k cannot exceed n")
    tasks = [(data, w, path, cfg, folds, f, kind) for f in range(k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_fold_task, tasks))
    else:
        results = [_fold_task(t) for t in tasks]
    per_obs = np.empty((len(path), data.n))
    fold_means = np.empty((len(path), k))
    failures = 0
    for f, (losses, failed) in enumerate(results):
        idx = np.flatnonzero(folds == f)
        per_obs[:, idx] = losses
        fold_means[:, f] = losses.mean(axis=1) if idx.size else np.nan
        failures += int(failed)
    mean_loss = per_obs.mean(axis=1)
    se = np.nanstd(fold_means, axis=1, ddof=1) / math.sqrt(k) if k > 1 else np.zeros(len(path))
    # first minimum along a decreasing path = largest lambda among ties
    j = int(np.argmin(mean_loss))
    return CvReport(path, mean_loss, se, float(path.values[j]), folds, kind, failures)


@dataclass(frozen=True)
class LoocvSummary:
    model_size_mean: float
    model_size_sd: float
    misclass_mean: float
    misclass_sd: float
    n_failed: int = 0
    sizes: tuple = field(default=(), repr=False)
    errors: tuple = field(default=(), repr=False)


def threshold_coefficients(coef: Coefficients, limit: float) -> tuple[Coefficients, SupportSet]:
    """Zero out entries with ``|beta_j| < limit``."""
    if limit < 0:
        raise ValueError("limit must be >= 0")
    b = np.where(np.abs(coef.beta) < limit, 0.0, coef.beta)
    return Coefficients(b, coef.intercept), SupportSet.from_beta(b)


def _loocv_task(args):
    data, w, lam, limit, cfg, i, inner_k, seed = args
    keep = np.ones(data.n, dtype=bool)
    keep[i] = False
    train = data.subset(keep)
    if lam is None:
        path = default_path(train, w, fit_intercept=cfg.fit_intercept)
        lam_i = cross_validate(train, w, path, min(inner_k, train.n), seed=seed, cfg=cfg).lambda_opt
    else:
        lam_i = lam
    res = fit(train, w, lam_i, cfg)
    if not res.converged:
        return None
    thr, supp = threshold_coefficients(res.coef, limit)
    eta = linear_predictor(data.x[i : i + 1], thr)
    return len(supp), float((eta[0] >= 0) != bool(data.y[i]))


def _sd(v):
    return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def loocv(
    data: Dataset,
    w: WeightVector,
    lam: Optional[float],
    limit: float,
    cfg: SolverConfig = SolverConfig(),
    inner_k: int = 10,
    seed=0,
    jobs: int = 1,
) -> LoocvSummary:
    """Leave-one-out model size and misclassification.

    With ``lam=None`` each held-out fit chooses its own lambda by inner
    ``inner_k``-fold CV. Non-converged fits are excluded and counted.
    Standard deviations use ``ddof=1``.
    """
    if data.n < 2:
        raise ValueError("loocv needs n >= 2")
    seeds = np.random.SeedSequence(seed).spawn(data.n)
    tasks = [(data, w, lam, limit, cfg, i, inner_k, seeds[i]) for i in range(data.n)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_loocv_task, tasks))
    else:
        out = [_loocv_task(t) for t in tasks]
    ok = [o for o in out if o is not None]
    failed = len(out) - len(ok)
    if not ok:
        nan = float("nan")
        return LoocvSummary(nan, nan, nan, nan, failed)
    sizes = [o[0] for o in ok]
    errs = [o[1] for o in ok]
    return LoocvSummary(
        float(np.mean(sizes)), _sd(sizes), float(np.mean(errs)), _sd(errs), failed, tuple(sizes), tuple(errs)
    )


def theoretical_lambda_floor(L: float, A: float, w_min: float, n: int, p: int) -> float:
    """(20 L A / w_min) * sqrt(2 log(2p) / n)."""
    if not (L > 0 and A >= 1 and w_min > 0 and n >= 1 and p >= 1):
        raise ValueError("need L > 0, A >= 1, w_min > 0, n >= 1, p >= 1")
    return 20.0 * L * A / w_min * math.sqrt(2.0 * math.log(2 * p) / n)
