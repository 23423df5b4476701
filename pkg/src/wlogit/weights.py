"""Data-dependent penalty weights.

Types I and II come from a bounded-difference concentration argument: the
per-coordinate penalty ``lambda * w_j`` is chosen so that the KKT event at the
true parameter fails with probability at most ``p**-r``. Type III is the
reciprocal column variance and Type IV the adaptive-Lasso reciprocal of a
pilot fit. Raw weights carry proportionality constant 1; use ``normalize``
before fitting.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .core import Coefficients, Dataset, DimensionError


class Scheme(str, enum.Enum):
    UNIFORM = "uniform"
    TYPE1 = "type1"
    TYPE2 = "type2"
    TYPE3 = "type3"
    TYPE4 = "type4"


class DegenerateColumnWarning(UserWarning):
    pass


@dataclass(frozen=True)
class WeightConfig:
    r: float = 1.0
    lasso_pilot_lambda: Optional[float] = None
    zero_floor: float = 1e-8

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not self.zero_floor > 0:
            raise ValueError("zero_floor must be positive")


@dataclass(frozen=True)
class WeightVector:
    w: NDArray[np.float64]
    scheme: Scheme = Scheme.UNIFORM
    normalized: bool = False
    degenerate: tuple = field(default_factory=tuple)

    def __post_init__(self):
        w = np.array(self.w, dtype=float).ravel()
        if w.size == 0 or not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def p(self) -> int:
        return self.w.shape[0]

    @property
    def w_min(self) -> float:
        return float(self.w.min())

    @property
    def w_max(self) -> float:
        return float(self.w.max())

    @classmethod
    def uniform(cls, p: int) -> "WeightVector":
        return cls(np.ones(p), Scheme.UNIFORM, normalized=True)


def concentration_factor(n: int, p: int, r: float = 1.0) -> float:
    """sqrt((2/n) * (r log p + log 2))."""
    return math.sqrt(2.0 / n * (r * math.log(p) + math.log(2.0)))


def _floor_small(scale: NDArray, floor: float, label: str) -> tuple[NDArray, tuple]:
    bad = np.flatnonzero(~(scale > floor))
    if bad.size:
        warnings.warn(
            f"{label}: columns {bad.tolist()} are all-zero; weight floored at {floor:g}",
            DegenerateColumnWarning,
            stacklevel=3,
        )
        scale = scale.copy()
        scale[bad] = floor
    return scale, tuple(int(j) for j in bad)


def type1_weights(data: Dataset, cfg: WeightConfig = WeightConfig()) -> WeightVector:
    col_max = np.max(np.abs(data.x), axis=0)
    w = col_max * concentration_factor(data.n, data.p, cfg.r)
    w, bad = _floor_small(w, cfg.zero_floor, "type1")
    return WeightVector(w, Scheme.TYPE1, False, bad)


def type2_weights(data: Dataset, cfg: WeightConfig = WeightConfig()) -> WeightVector:
    rms = np.sqrt(np.mean(data.x**2, axis=0))
    w = rms * concentration_factor(data.n, data.p, cfg.r)
    w, bad = _floor_small(w, cfg.zero_floor, "type2")
    return WeightVector(w, Scheme.TYPE2, False, bad)


def type3_weights(data: Dataset, cfg: WeightConfig = WeightConfig()) -> WeightVector:
    # reciprocal of the (biased) column variance, not of the standard deviation
    var = np.var(data.x, axis=0)
    bad = np.flatnonzero(~(var > cfg.zero_floor))
    w = np.empty_like(var)
    ok = var > cfg.zero_floor
    w[ok] = 1.0 / var[ok]
    if bad.size:
        warnings.warn(
            f"type3: columns {bad.tolist()} are constant; weight capped at {1 / cfg.zero_floor:g}",
            DegenerateColumnWarning,
            stacklevel=2,
        )
        w[bad] = 1.0 / cfg.zero_floor
    return WeightVector(w, Scheme.TYPE3, False, tuple(int(j) for j in bad))


def type4_weights(data: Dataset, cfg: WeightConfig, pilot: Coefficients) -> WeightVector:
    if pilot.p != data.p:
        raise DimensionError(f"pilot has {pilot.p} coefficients, data has {data.p} columns")
    mag = np.maximum(np.abs(pilot.beta), cfg.zero_floor)
    bad = tuple(int(j) for j in np.flatnonzero(np.abs(pilot.beta) < cfg.zero_floor))
    return WeightVector(1.0 / mag, Scheme.TYPE4, False, bad)


def normalize(w: WeightVector) -> WeightVector:
    """Rescale so the weights sum to p; ratios are preserved."""
    v = w.w * (w.p / np.sum(w.w))
    return WeightVector(v, w.scheme, True, w.degenerate)


def mcdiarmid_tail_bound(n: int, p: int, lambda_w: float, col_max: float) -> float:
    """Bounded-difference tail bound 2 exp(-n (lambda w_j)^2 / (2 max_k |X_kj|^2)).

    ``p`` is accepted for interface symmetry with the weight formulas; the
    bound itself does not depend on it.
    """
    if n < 1 or not lambda_w > 0 or not col_max > 0:
        raise ValueError("need n >= 1, lambda_w > 0, col_max > 0")
    return min(1.0, 2.0 * math.exp(-n * lambda_w**2 / (2.0 * col_max**2)))


def compute_weights(
    scheme: Scheme | str,
    data: Dataset,
    cfg: WeightConfig = WeightConfig(),
    pilot: Optional[Coefficients] = None,
) -> WeightVector:
    """Raw (unnormalized) weights for ``scheme``; Type IV needs ``pilot``."""
    scheme = Scheme(scheme)
    if scheme is Scheme.UNIFORM:
        return WeightVector(np.ones(data.p), Scheme.UNIFORM, False)
    if scheme is Scheme.TYPE1:
        return type1_weights(data, cfg)
    if scheme is Scheme.TYPE2:
        return type2_weights(data, cfg)
    if scheme is Scheme.TYPE3:
        return type3_weights(data, cfg)
    if pilot is None:
        raise ValueError("type4 weights require a pilot fit")
    return type4_weights(data, cfg, pilot)
