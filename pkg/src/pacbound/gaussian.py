"""Isotropic Gaussian measures over predictors and Monte-Carlo helpers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .core import summarize
from .errors import DimensionError, EvaluationError, InvalidInputError


@dataclass(frozen=True)
class IsotropicGaussian:
    """``N(mean, variance * I_d)``."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1 or not np.all(np.isfinite(mean)):
            raise InvalidInputError("mean must be a finite vector")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise InvalidInputError(f"variance must be positive, got {self.variance}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", float(self.variance))

    @classmethod
    def centered(cls, d: int, variance: float) -> "IsotropicGaussian":
        return cls(np.zeros(d), variance)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n: int
    seed: Optional[int] = None

    @classmethod
    def from_samples(cls, values, seed=None) -> "McEstimate":
        values = np.asarray(values, dtype=float)
        value, se = summarize(values)
        return cls(value, se, int(values.size), seed)

    @classmethod
    def exact(cls, value: float) -> "McEstimate":
        return cls(float(value), 0.0, 0, None)


def seed_of(rng) -> Optional[int]:
    return int(rng) if isinstance(rng, (int, np.integer)) else None


def kl_isotropic(q: IsotropicGaussian, p: IsotropicGaussian) -> float:
    """``KL(q || p)`` in nats."""
    if q.d != p.d:
        raise DimensionError(f"dimension mismatch: {q.d} vs {p.d}")
    ratio = q.variance / p.variance
    shift = float(np.sum((q.mean - p.mean) ** 2))
    var_term = 0.5 * q.d * (ratio - 1.0 - np.log(ratio))
    # the variance term is >= 0 analytically; clip rounding noise near ratio == 1
    return float(max(var_term, 0.0) + shift / (2.0 * p.variance))


def sample(g: IsotropicGaussian, n: int, rng) -> np.ndarray:
    """``n`` iid draws as an ``(n, d)`` array."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(rng)
    return g.mean + g.std * rng.standard_normal((n, g.d))


def sample_truncated(std: float, half_side: float, d: int, rng, size: Optional[int] = None):
    """Draw from ``N(0, std^2 I_d)`` conditioned on the hypercube ``[-half_side, half_side]^d``.

    Each coordinate is rejection-sampled independently. Returns shape ``(d,)``
    or ``(size, d)``.
    """
    if not (std > 0 and half_side > 0):
        raise InvalidInputError("std and half_side must be positive")
    rng = np.random.default_rng(rng)
    total = d if size is None else size * d
    out = np.empty(total)
    filled = 0
    while filled < total:
        need = total - filled
        # oversample by the acceptance rate so one round usually suffices
        draw = std * rng.standard_normal(int(need * 1.1) + 16)
        keep = draw[np.abs(draw) <= half_side][:need]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out if size is None else out.reshape(size, d)


def mc_expect(g: IsotropicGaussian, fn: Callable, n: int, rng, batched: bool = False) -> McEstimate:
    """Estimate ``E_{h ~ g}[fn(h)]`` from ``n`` draws.

    With ``batched=True`` ``fn`` receives the whole ``(n, d)`` draw array and
    must return ``n`` values.
    """
    if n < 2:
        raise InvalidInputError(f"need n >= 2 draws, got {n}")
    seed = seed_of(rng)
    draws = sample(g, n, rng)
    if batched:
        values = np.asarray(fn(draws), dtype=float).reshape(n)
    else:
        values = np.array([float(fn(h)) for h in draws])
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise EvaluationError(f"integrand is not finite at draw {bad[0]}", index=int(bad[0]))
    return McEstimate.from_samples(values, seed)


def log_mean_exp(exponents) -> tuple[float, float]:
    """``log`` of the sample mean of ``exp(a_i)`` and ``log`` of its standard error.

    Works entirely in log space, so integrands far beyond double range are fine.
    The second value is ``-inf`` when all exponents are equal.
    """
    a = np.asarray(exponents, dtype=float)
    n = a.size
    if n < 2:
        raise InvalidInputError("need at least two samples")
    log_mean = float(logsumexp(a) - np.log(n))
    if np.all(a == a[0]):
        return float(a[0]), float("-inf")
    top = a.max()
    w = np.exp(a - top)
    se = w.std(ddof=1) / np.sqrt(n)
    log_se = float(top + np.log(se)) if se > 0 else float("-inf")
    return log_mean, log_se
