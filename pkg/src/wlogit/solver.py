"""Weighted-Lasso logistic regression solver.

Minimizes ``nll(beta) + lam * sum_j w_j |beta_j|`` with FISTA (backtracking
line search, adaptive step growth, function-value restart) and certifies the
result with the subgradient optimality conditions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from numba import njit

from .core import Coefficients, Dataset, DimensionError, score
from .weights import WeightVector


SEPARATION_LIMIT = 1e6
# per-iteration step growth tried before backtracking
_STEP_GROWTH = 1.25


class SeparationError(RuntimeError):
    """The iterates diverge: the data are (quasi-)separable and the penalty
    does not bound the solution."""


class Algorithm(str, enum.Enum):
    FISTA = "fista"
    TRANSFORM = "transform"


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 10000
    tol_obj: float = 1e-9
    tol_kkt: float = 1e-6
    algorithm: Algorithm = Algorithm.FISTA
    backtracking_shrink: float = 0.5
    fit_intercept: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (self.tol_obj > 0 and self.tol_kkt > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.backtracking_shrink < 1:
            raise ValueError("backtracking_shrink must lie in (0, 1)")
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))


@dataclass(frozen=True)
class FitResult:
    coef: Coefficients
    lam: float
    weights: WeightVector
    objective: float
    iterations: int
    kkt_max_violation: float
    converged: bool
    history: tuple = field(default=(), repr=False, compare=False)

    @property
    def beta(self) -> NDArray:
        return self.coef.beta


def penalized_objective(data: Dataset, coef: Coefficients, w: WeightVector, lam: float) -> float:
    from .core import neg_log_likelihood

    return neg_log_likelihood(data, coef) + lam * float(np.sum(w.w * np.abs(coef.beta)))


def prox_step(beta, grad, step: float, w: WeightVector | NDArray, lam: float) -> NDArray:
    """Gradient step followed by weighted soft-thresholding."""
    if not step > 0:
        raise ValueError("step must be positive")
    ww = w.w if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    z = np.asarray(beta, dtype=float) - step * np.asarray(grad, dtype=float)
    return _soft(z, step * lam * ww)


def _soft(z: NDArray, t: NDArray | float) -> NDArray:
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _violations(sc: NDArray, beta: NDArray, pen: NDArray) -> NDArray:
    nz = beta != 0
    return np.where(nz, np.abs(sc - pen * np.sign(beta)), np.maximum(0.0, np.abs(sc) - pen))


def kkt_residuals(data: Dataset, result: FitResult) -> NDArray:
    """Per-coordinate violation of the optimality conditions.

    Active coordinates must satisfy ``score_j = lam w_j sign(beta_j)``;
    inactive ones ``|score_j| <= lam w_j``, where ``score`` is
    ``(1/n) X^T (y - pi)``.
    """
    if result.coef.p != data.p or result.weights.p != data.p:
        raise DimensionError("result and data dimensions disagree")
    sc = score(data, result.coef)
    return _violations(sc, result.coef.beta, result.lam * result.weights.w)


class _Problem:
    """Array-level view of one penalized problem, with the intercept (if any)
    stored as an extra unpenalized last coordinate."""

    def __init__(self, data: Dataset, pen: NDArray, fit_intercept: bool):
        x = data.x
        if fit_intercept:
            x = np.hstack([x, np.ones((data.n, 1))])
            pen = np.append(pen, 0.0)
        self.x = x
        self.y = data.y
        self.n = data.n
        self.pen = pen
        self.rf = None if data.obs_weights is None else data.n * data.obs_weights
        self.fit_intercept = fit_intercept

    def initial_step(self) -> float:
        fro2 = float(np.sum(self.x**2))
        scale = 1.0 if self.rf is None else float(self.rf.max())
        return 4.0 * self.n / max(fro2 * scale, 1e-300)


@njit(cache=True)
def _log1pexp(e):
    if e > 0:
        return e + math.log1p(math.exp(-e))
    return math.log1p(math.exp(e))


@njit(cache=True)
def _expit(e):
    if e >= 0:
        return 1.0 / (1.0 + math.exp(-e))
    t = math.exp(e)
    return t / (1.0 + t)


@njit(cache=True)
def _loss(eta, y, rf):
    s = 0.0
    for i in range(eta.shape[0]):
        s += rf[i] * (_log1pexp(eta[i]) - y[i] * eta[i])
    return s / eta.shape[0]


@njit(cache=True)
def _grad(x, eta, y, rf, out):
    n, p = x.shape
    r = np.empty(n)
    for i in range(n):
        r[i] = rf[i] * (_expit(eta[i]) - y[i])
    for j in range(p):
        out[j] = 0.0
    for i in range(n):
        ri = r[i] / n
        if ri != 0.0:
            for j in range(p):
                out[j] += x[i, j] * ri


@njit(cache=True)
def _matvec(x, b, out):
    n, p = x.shape
    for i in range(n):
        s = 0.0
        for j in range(p):
            if b[j] != 0.0:
                s += x[i, j] * b[j]
        out[i] = s


@njit(cache=True)
def _max_violation(b, g, pen):
    m = 0.0
    for j in range(b.shape[0]):
        sc = -g[j]
        if b[j] > 0:
            v = abs(sc - pen[j])
        elif b[j] < 0:
            v = abs(sc + pen[j])
        else:
            v = abs(sc) - pen[j]
        if v > m:
            m = v
    return m


_POLISH_PATIENCE = 200


@njit(cache=True)
def _polish(x, y, rf, pen, xb, eta_x, g, budget, tol_kkt):
    """Plain proximal gradient at the safe 1/L step, judged by KKT only.

    Updates ``xb`` and ``eta_x`` in place; returns (iterations, kkt).
    """
    n, p = x.shape
    xc = np.ascontiguousarray(x)
    gram = np.dot(xc.T, xc) if p <= n else np.dot(xc, xc.T)
    lip = rf.max() * np.linalg.eigvalsh(gram).max() / (4.0 * n)
    if lip <= 0.0:
        lip = 1.0
    step = 1.0 / lip
    _grad(x, eta_x, y, rf, g)
    kkt = _max_violation(xb, g, pen)
    best = kkt
    since = 0
    used = 0
    while used < budget and kkt > tol_kkt and since < _POLISH_PATIENCE:
        used += 1
        for j in range(p):
            v = xb[j] - step * g[j]
            th = step * pen[j]
            if v > th:
                xb[j] = v - th
            elif v < -th:
                xb[j] = v + th
            else:
                xb[j] = 0.0
        _matvec(x, xb, eta_x)
        _grad(x, eta_x, y, rf, g)
        kkt = _max_violation(xb, g, pen)
        if kkt < best:
            best = kkt
            since = 0
        else:
            since += 1
    return used, kkt


@njit(cache=True)
def _fista_kernel(x, y, rf, pen, b0, step, shrink, growth, max_iter, tol_obj, tol_kkt, sep_limit):
    """Returns (beta, objective, iterations, kkt, status, history, n_hist).

    status: 0 converged, 1 iteration limit, 2 stalled at precision floor,
    3 diverged past ``sep_limit``.
    """
    n, p = x.shape
    xb = b0.copy()
    eta_x = np.empty(n)
    _matvec(x, xb, eta_x)
    F_x = _loss(eta_x, y, rf)
    for j in range(p):
        F_x += pen[j] * abs(xb[j])
    x_prev = xb.copy()
    eta_prev = eta_x.copy()
    yb = xb.copy()
    eta_y = eta_x.copy()
    z = np.empty(p)
    eta_z = np.empty(n)
    g = np.empty(p)
    hist = np.empty(max_iter + 1)
    hist[0] = F_x
    nh = 1
    t = 1.0
    at_x = True
    kkt = np.inf
    status = 1
    it = 0
    while it < max_iter:
        it += 1
        f_y = _loss(eta_y, y, rf)
        _grad(x, eta_y, y, rf, g)
        step *= growth
        while True:
            lin = 0.0
            dd = 0.0
            for j in range(p):
                v = yb[j] - step * g[j]
                th = step * pen[j]
                if v > th:
                    z[j] = v - th
                elif v < -th:
                    z[j] = v + th
                else:
                    z[j] = 0.0
                d = z[j] - yb[j]
                lin += g[j] * d
                dd += d * d
            _matvec(x, z, eta_z)
            f_z = _loss(eta_z, y, rf)
            if f_z <= f_y + lin + dd / (2.0 * step) + 1e-12 * abs(f_y) or step < 1e-300:
                break
            step *= shrink
        F_z = f_z
        for j in range(p):
            F_z += pen[j] * abs(z[j])
        if F_z > F_x:
            if not at_x:
                # function-value restart: drop momentum and retry from x
                t = 1.0
                yb[:] = xb
                eta_y[:] = eta_x
                at_x = True
                continue
            # a plain proximal step from x cannot descend: the objective has hit
            # its precision floor, so finish on the KKT residual alone
            used, kkt = _polish(x, y, rf, pen, xb, eta_x, g, max_iter - it, tol_kkt)
            it += used
            F_x = _loss(eta_x, y, rf)
            for j in range(p):
                F_x += pen[j] * abs(xb[j])
            status = 0 if kkt <= tol_kkt else 2
            break
        x_prev[:] = xb
        eta_prev[:] = eta_x
        xb[:] = z
        eta_x[:] = eta_z
        big = 0.0
        for j in range(p):
            if abs(xb[j]) > big:
                big = abs(xb[j])
        if big > sep_limit:
            status = 3
            break
        rel = abs(F_x - F_z) / max(1.0, abs(F_z))
        F_x = F_z
        hist[nh] = F_x
        nh += 1
        if rel <= tol_obj:
            _grad(x, eta_x, y, rf, g)
            kkt = _max_violation(xb, g, pen)
            if kkt <= tol_kkt:
                status = 0
                break
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        for j in range(p):
            yb[j] = xb[j] + mom * (xb[j] - x_prev[j])
        for i in range(n):
            eta_y[i] = eta_x[i] + mom * (eta_x[i] - eta_prev[i])
        t = t_new
        at_x = mom == 0.0
    if status == 1:
        _grad(x, eta_x, y, rf, g)
        kkt = _max_violation(xb, g, pen)
    return xb, F_x, it, kkt, status, hist, nh


def _fista(prob: _Problem, b0: NDArray, cfg: SolverConfig):
    rf = np.ones(prob.n) if prob.rf is None else prob.rf
    b, F, it, kkt, status, hist, nh = _fista_kernel(
        np.ascontiguousarray(prob.x),
        prob.y,
        rf,
        np.ascontiguousarray(prob.pen, dtype=float),
        np.ascontiguousarray(b0, dtype=float),
        prob.initial_step(),
        cfg.backtracking_shrink,
        _STEP_GROWTH,
        cfg.max_iter,
        cfg.tol_obj,
        cfg.tol_kkt,
        SEPARATION_LIMIT,
    )
    if status == 3:
        raise SeparationError(
            f"|beta|_inf exceeded {SEPARATION_LIMIT:g} after {it} iterations; "
            "data look separable at this penalty level"
        )
    return b, F, it, kkt, status == 0, hist[:nh]


def fit(
    data: Dataset,
    w: WeightVector,
    lam: float,
    cfg: SolverConfig = SolverConfig(),
    init: Optional[Coefficients] = None,
) -> FitResult:
    """Solve the weighted-Lasso problem at penalty level ``lam``.

    Starts from zero unless ``init`` is given (warm start). A non-converged
    solve returns the last iterate with ``converged=False``; diverging
    iterates raise ``SeparationError``.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if w.p != data.p:
        raise DimensionError(f"{w.p} weights for {data.p} columns")
    if cfg.algorithm is Algorithm.TRANSFORM:
        return fit_by_transform(data, w, lam, replace(cfg, algorithm=Algorithm.FISTA), init)
    prob = _Problem(data, lam * w.w, cfg.fit_intercept)
    b0 = np.zeros(prob.x.shape[1])
    if init is not None:
        if init.p != data.p:
            raise DimensionError("warm start has the wrong length")
        b0[: data.p] = init.beta
        if cfg.fit_intercept and init.intercept is not None:
            b0[-1] = init.intercept
    b, F, iters, kkt, conv, hist = _fista(prob, b0, cfg)
    if cfg.fit_intercept:
        coef = Coefficients(b[:-1], b[-1])
    else:
        coef = Coefficients(b)
    return FitResult(coef, float(lam), w, F, iters, kkt, conv, tuple(hist))


def fit_by_transform(
    data: Dataset,
    w: WeightVector,
    lam: float,
    cfg: SolverConfig = SolverConfig(),
    init: Optional[Coefficients] = None,
) -> FitResult:
    """Solve via the column-rescaling identity.

    With ``X~_j = X_j / w_j`` the weighted problem becomes a uniform-penalty
    problem in ``beta~ = W beta``; the answer is mapped back as
    ``beta_j = beta~_j / w_j`` and re-certified on the original problem.
    """
    from .weights import WeightConfig

    floor = WeightConfig().zero_floor
    if np.any(w.w < floor):
        raise ValueError(f"weights below {floor:g} make the column transform ill-conditioned")
    if w.p != data.p:
        raise DimensionError(f"{w.p} weights for {data.p} columns")
    xt = Dataset(data.x / w.w, data.y, data.obs_weights)
    # violations on the original scale are w_j times those on the transformed scale
    inner = replace(cfg, algorithm=Algorithm.FISTA, tol_kkt=cfg.tol_kkt / max(1.0, w.w_max))
    init_t = None
    if init is not None:
        init_t = Coefficients(init.beta * w.w, init.intercept)
    res = fit(xt, WeightVector.uniform(data.p), lam, inner, init_t)
    coef = Coefficients(res.coef.beta / w.w, res.coef.intercept)
    out = FitResult(
        coef,
        float(lam),
        w,
        penalized_objective(data, coef, w, lam),
        res.iterations,
        0.0,
        False,
        res.history,
    )
    viol = kkt_residuals(data, out)
    kkt = float(viol.max())
    if cfg.fit_intercept:
        kkt = max(kkt, _intercept_violation(data, coef))
    return replace(out, kkt_max_violation=kkt, converged=res.converged and kkt <= cfg.tol_kkt)


def _intercept_violation(data: Dataset, coef: Coefficients) -> float:
    from .core import residuals

    return abs(float(np.mean(residuals(data, coef))))
