"""Oracle-inequality calculators and empirical restricted-eigenvalue probes.

Conventions: ``k`` is the cone multiplier in
``||W_{H^c} b_{H^c}||_1 <= k ||W_H b_H||_1 + eps`` and also the curvature
constant that divides the error bounds; ``s`` is the logistic curvature
constant ``e^{LB} / (2 (1 + e^{LB})^2)``. The measurement-error level
``eps_n`` defaults to 0.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .core import Coefficients, Dataset, SupportSet, score
from .tuning import theoretical_lambda_floor
from .weights import WeightVector


class LambdaBelowFloorWarning(UserWarning):
    pass


class EmptyConeWarning(UserWarning):
    pass


def s_constant(L: float, B: float) -> float:
    if not (L > 0 and B > 0):
        raise ValueError("L and B must be positive")
    t = math.exp(-L * B)  # e^{LB}/(1+e^{LB})^2 == t/(1+t)^2, no overflow
    # the true value never exceeds 1/8; clip the rounding excess near LB = 0
    return min(t / (2.0 * (1.0 + t) ** 2), 0.125)


def quartic_s_constant(L: float, B: float) -> float:
    """The competing curvature constant 1 / (1 + e^{LB})^4."""
    return math.exp(-4.0 * math.log1p(math.exp(L * B))) if L * B < 700 else 0.0


def failure_probability(p: int, A: float) -> float:
    """(2p)^{-A^2}: the probability that the oracle bounds fail."""
    return float((2.0 * p) ** (-(A * A)))


@dataclass(frozen=True)
class BoundInputs:
    L: float
    B: float
    A: float
    lam: float
    d_star: int
    k: float
    eps_n: float = 0.0
    w_min: float = 1.0
    w_max: float = 1.0
    wh_sq: Optional[float] = None
    n: Optional[int] = None
    p: Optional[int] = None

    def __post_init__(self):
        if not (self.L > 0 and self.B > 0 and self.A >= 1 and self.lam > 0):
            raise ValueError("need L > 0, B > 0, A >= 1, lam > 0")
        if self.d_star < 0 or self.eps_n < 0 or not self.w_min > 0 or self.w_max < self.w_min:
            raise ValueError("need d_star >= 0, eps_n >= 0, 0 < w_min <= w_max")
        if self.wh_sq is None:
            # unit weights on the support
            object.__setattr__(self, "wh_sq", float(self.d_star))
        if self.n is not None and self.p is not None:
            floor = self.lambda_floor
            if self.lam < floor:
                warnings.warn(
                    f"lambda={self.lam:g} is below the theoretical floor {floor:g}",
                    LambdaBelowFloorWarning,
                    stacklevel=3,
                )

    @classmethod
    def from_weights(cls, w: WeightVector, H: SupportSet, **kw) -> "BoundInputs":
        idx = list(H.indices)
        return cls(
            d_star=len(idx),
            w_min=w.w_min,
            w_max=w.w_max,
            wh_sq=float(np.sum(w.w[idx] ** 2)),
            p=kw.pop("p", w.p),
            **kw,
        )

    @property
    def s(self) -> float:
        return s_constant(self.L, self.B)

    @property
    def lambda_floor(self) -> float:
        if self.n is None or self.p is None:
            raise ValueError("lambda floor needs n and p")
        return theoretical_lambda_floor(self.L, self.A, self.w_min, self.n, self.p)


def _check(inp: BoundInputs) -> float:
    s = inp.s
    if not inp.k > 0 or not s > 0:
        raise ValueError("k and s must be positive")
    return s


def l1_error_bounds(inp: BoundInputs) -> dict:
    s = _check(inp)
    slack = (inp.lam + 2 * s) / (inp.lam * inp.w_min) * inp.eps_n
    denom = s * inp.k * inp.w_min
    return {
        "weighted_stabil_bound": 2 * inp.lam * inp.d_star / denom + slack,
        "stabil_bound": 2 * inp.lam * inp.wh_sq / denom + slack,
    }


def prediction_error_bounds(inp: BoundInputs, B_star: Optional[float] = None) -> dict:
    """Squared prediction-error bounds. ``weight_condition`` reports whether
    ``B (4 w_max + w_min) / w_min + eps_n / w_min <= B_star`` (None when no
    ``B_star`` is supplied)."""
    s = _check(inp)
    slack = (2 * inp.lam / s + 3) * inp.eps_n
    lhs = inp.B * (4 * inp.w_max + inp.w_min) / inp.w_min + inp.eps_n / inp.w_min
    return {
        "weighted_stabil_bound": 3 * inp.lam**2 * inp.d_star / (s**2 * inp.k) + slack,
        "stabil_bound": 3 * inp.lam**2 * inp.wh_sq / (s**2 * inp.k) + slack,
        "weight_condition_lhs": lhs,
        "weight_condition": None if B_star is None else bool(lhs <= B_star),
    }


def p_for_delta(delta: float, A: float) -> float:
    """Dimension at which the selection guarantee reaches confidence 1 - delta."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 0.5 * math.exp(math.log(1.0 / delta) / (A * A))


def beta_min_threshold(inp: BoundInputs, delta: Optional[float] = None) -> dict:
    s = _check(inp)
    b0 = 4 * inp.lam * inp.d_star / (2 * s * inp.k) + (inp.lam + 2 * s) / inp.lam * inp.eps_n
    return {"B0": b0, "p_delta": None if delta is None else p_for_delta(delta, inp.A)}


_BATCH = 8192


def _cone_batch(rng, m, p, H, w, k, eps, boundary):
    Hc = np.setdiff1d(np.arange(p), H)
    b = np.zeros((m, p))
    bH = rng.standard_normal((m, len(H)))
    b[:, H] = bH
    budget = k * np.abs(bH * w[H]).sum(axis=1) + eps
    u = np.ones(m) if boundary else rng.random(m)
    if Hc.size:
        g = rng.standard_normal((m, Hc.size))
        mass = np.abs(g * w[Hc]).sum(axis=1)
        b[:, Hc] = g * (u * budget / mass)[:, None]
    return b


def sample_weighted_cone(
    p: int,
    H: SupportSet,
    w: WeightVector,
    k: float,
    eps: float,
    n_samples: int,
    seed=0,
    boundary: bool = False,
) -> NDArray:
    """Random members of the weighted cone, one per row.

    ``b_H`` is standard Gaussian; ``b_{H^c}`` is a Gaussian direction scaled
    so its weighted l1 mass is ``u * (k ||W_H b_H||_1 + eps)`` with ``u``
    uniform on [0, 1] (``u = 1`` when ``boundary``). Draws come in fixed-size
    batches with spawned seeds, so a smaller ``n_samples`` returns a prefix of
    a larger one.
    """
    if not k >= 0 or not eps >= 0:
        raise ValueError("need k >= 0 and eps >= 0")
    H_idx = np.asarray(H.indices, dtype=np.int64)
    if H_idx.size == 0 and eps == 0:
        warnings.warn("empty support with eps = 0: the cone is {0}", EmptyConeWarning, stacklevel=2)
    ww = w.w
    n_batches = -(-n_samples // _BATCH)
    seqs = np.random.SeedSequence(seed).spawn(n_batches)
    out = [_cone_batch(np.random.default_rng(sq), _BATCH, p, H_idx, ww, k, eps, boundary) for sq in seqs]
    if not out:
        return np.zeros((0, p))
    return np.vstack(out)[:n_samples]


def cone_slack(b: NDArray, H: SupportSet, w: WeightVector, k: float, eps: float) -> NDArray:
    """``k ||W_H b_H||_1 + eps - ||W_{H^c} b_{H^c}||_1`` per row (>= 0 inside)."""
    b = np.atleast_2d(b)
    mask = np.zeros(b.shape[1], dtype=bool)
    mask[list(H.indices)] = True
    wb = np.abs(b * w.w)
    return k * wb[:, mask].sum(axis=1) + eps - wb[:, ~mask].sum(axis=1)


@dataclass(frozen=True)
class ConeSampleReport:
    n_samples: int
    c1_hat: float
    c2_hat: float
    violations: int


def estimate_stabil_constants(
    sigma: NDArray, H: SupportSet, w: WeightVector, k: float, eps: float, n_samples: int, seed=0
) -> ConeSampleReport:
    """Sampled upper estimates of the Stabil and Weighted-Stabil constants.

    ``c1_hat = min (b' S b + eps) / ||b_H||^2`` and
    ``c2_hat = min (b' S b + eps) / ||W_H b_H||^2`` over cone samples. These
    overestimate the true infimum; more samples can only lower them.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("sigma must be square")
    if np.max(np.abs(sigma - sigma.T)) > 1e-8:
        raise ValueError("sigma is not symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    lo = float(np.linalg.eigvalsh(sigma)[0])
    if lo < -1e-8 * max(1.0, float(np.abs(sigma).max())):
        raise ValueError(f"sigma is not positive semidefinite (min eigenvalue {lo:g})")
    p = sigma.shape[0]
    b = sample_weighted_cone(p, H, w, k, eps, n_samples, seed)
    idx = list(H.indices)
    quad = np.einsum("ij,jk,ik->i", b, sigma, b) + eps
    nh = np.sum(b[:, idx] ** 2, axis=1)
    nwh = np.sum((b[:, idx] * w.w[idx]) ** 2, axis=1)
    ok = nh >= 1e-24
    if not np.any(ok):
        return ConeSampleReport(n_samples, math.inf, math.inf, 0)
    q1 = quad[ok] / nh[ok]
    q2 = quad[ok] / nwh[ok]
    return ConeSampleReport(n_samples, float(q1.min()), float(q2.min()), int(np.sum(q1 < 0)))


def ar1_covariance(p: int, rho: float) -> NDArray:
    i = np.arange(p)
    return rho ** np.abs(i[:, None] - i[None, :]).astype(float)


def score_sup_norm(data: Dataset, beta_star: Coefficients) -> float:
    """``||(1/n) X^T (y - pi_{beta*})||_inf``: the empirical first-order
    condition at the true parameter, which shrinks like n^{-1/2}."""
    return float(np.max(np.abs(score(data, beta_star))))
