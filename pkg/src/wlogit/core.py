"""Data containers and the logistic-loss kernel.

All arrays are float64. The loss is the *averaged* negative log-likelihood

    -(1/n) * sum_i [ y_i * eta_i - log(1 + exp(eta_i)) ],   eta_i = x_i @ beta (+ b0)

and ``gradient`` returns its gradient (the negated score).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray


class DimensionError(ValueError):
    """Raised when coefficient and design dimensions disagree."""


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``x`` (n x p), binary responses ``y`` and optional
    per-observation weights (the R_i of the robust likelihood)."""

    x: NDArray[np.float64]
    y: NDArray[np.float64]
    obs_weights: Optional[NDArray[np.float64]] = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"x must be a non-empty 2-d array, got shape {x.shape}")
        if y.shape[0] != x.shape[0]:
            raise DimensionError(f"y has length {y.shape[0]} but x has {x.shape[0]} rows")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("y must contain only 0 or 1")
        if not np.all(np.isfinite(x)):
            raise ValueError("x contains non-finite entries")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.obs_weights is not None:
            r = np.array(self.obs_weights, dtype=float).ravel()
            if r.shape[0] != x.shape[0]:
                raise DimensionError("obs_weights must have length n")
            if np.any(r < 0) or not np.any(r > 0):
                raise ValueError("obs_weights must be >= 0 with at least one positive entry")
            r.setflags(write=False)
            object.__setattr__(self, "obs_weights", r)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows: ArrayLike) -> "Dataset":
        rows = np.asarray(rows)
        r = None if self.obs_weights is None else self.obs_weights[rows]
        return Dataset(self.x[rows], self.y[rows], r)


@dataclass(frozen=True)
class Coefficients:
    beta: NDArray[np.float64]
    intercept: Optional[float] = None

    def __post_init__(self):
        b = np.array(self.beta, dtype=float).ravel()
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)
        if self.intercept is not None:
            object.__setattr__(self, "intercept", float(self.intercept))

    @classmethod
    def zeros(cls, p: int, intercept: bool = False) -> "Coefficients":
        return cls(np.zeros(p), 0.0 if intercept else None)

    @property
    def p(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class SupportSet:
    """Sorted 0-based column indices with a nonzero coefficient."""

    indices: tuple = field(default_factory=tuple)

    @classmethod
    def from_beta(cls, beta: ArrayLike, limit: float = 0.0) -> "SupportSet":
        b = np.abs(np.asarray(beta, dtype=float))
        keep = b >= limit if limit > 0 else b > 0
        return cls(tuple(int(j) for j in np.flatnonzero(keep)))

    def __len__(self):
        return len(self.indices)

    def __contains__(self, j):
        return j in self.indices

    def issubset(self, other: "SupportSet") -> bool:
        return set(self.indices) <= set(other.indices)


def sigmoid_prob(eta):
    """Overflow-safe logistic function, elementwise."""
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    neg = eta < 0
    e = np.exp(eta[neg])
    out[neg] = e / (1.0 + e)
    out[~neg] = 1.0 / (1.0 + np.exp(-eta[~neg]))
    if out.ndim == 0:
        return float(out)
    return out


def log1pexp(eta):
    """log(1 + exp(eta)) without overflow."""
    eta = np.asarray(eta, dtype=float)
    return np.where(eta > 0, eta + np.log1p(np.exp(-np.abs(eta))), np.log1p(np.exp(-np.abs(eta))))


def linear_predictor(x: NDArray, coef: Coefficients) -> NDArray:
    if x.shape[1] != coef.p:
        raise DimensionError(f"coefficients have length {coef.p} but x has {x.shape[1]} columns")
    eta = x @ coef.beta
    if coef.intercept is not None:
        eta = eta + coef.intercept
    return eta


def _row_factors(data: Dataset) -> NDArray:
    # n * R_i, so that uniform R_i = 1/n gives all ones
    if data.obs_weights is None:
        return np.ones(data.n)
    return data.n * data.obs_weights


def loss_from_eta(eta: NDArray, y: NDArray, row_factors: Optional[NDArray] = None) -> float:
    terms = log1pexp(eta) - y * eta
    if row_factors is not None:
        terms = terms * row_factors
    return float(np.mean(terms))


def neg_log_likelihood(data: Dataset, coef: Coefficients) -> float:
    eta = linear_predictor(data.x, coef)
    rf = None if data.obs_weights is None else _row_factors(data)
    return loss_from_eta(eta, data.y, rf)


def residuals(data: Dataset, coef: Coefficients) -> NDArray:
    """Weighted working residuals ``f_i * (y_i - pi_i)``."""
    r = data.y - sigmoid_prob(linear_predictor(data.x, coef))
    if data.obs_weights is not None:
        r = r * _row_factors(data)
    return r


def score(data: Dataset, coef: Coefficients) -> NDArray:
    """(1/n) X^T (y - pi): the gradient of the log-likelihood."""
    return data.x.T @ residuals(data, coef) / data.n


def gradient(data: Dataset, coef: Coefficients) -> NDArray:
    """Gradient of ``neg_log_likelihood`` with respect to beta."""
    return -score(data, coef)


def predict_class(data: Dataset, coef: Coefficients, cutoff: float = 0.5) -> NDArray:
    if not 0.0 < cutoff < 1.0:
        raise ValueError("cutoff must lie in (0, 1)")
    prob = sigmoid_prob(linear_predictor(data.x, coef))
    return (np.atleast_1d(prob) >= cutoff).astype(int)
