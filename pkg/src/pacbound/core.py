"""Losses, risks, the hypothesis-dependent loss envelope and the self-bounding witness.

Predictors are plain 1-D float arrays. Most functions also accept a stack of
predictors with shape ``(n, d)`` and then return one value per row, which is
what the Monte-Carlo code relies on.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator

import numpy as np

from .errors import DegenerateEnvelopeError, DimensionError, InvalidInputError


class LossKind(str, enum.Enum):
    ABSOLUTE_LINEAR = "absolute_linear"
    ZERO_ONE_LOGISTIC = "zero_one_logistic"


@dataclass(frozen=True)
class LossSpec:
    """A loss together with the parameters of its envelope ``sup_z l(h, z) <= K(h)``.

    For ``ABSOLUTE_LINEAR`` the loss is ``|<h, x> - y|`` with envelope
    ``K(h) = B * ||h|| + C``. For ``ZERO_ONE_LOGISTIC`` the loss is the 0-1
    loss of the sigmoid-threshold classifier and the envelope is the
    constant ``C`` (normally 1).
    """

    kind: LossKind
    B: float = 0.0
    C: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if not (np.isfinite(self.B) and self.B >= 0):
            raise InvalidInputError(f"B must be a nonnegative real, got {self.B}")
        if not (np.isfinite(self.C) and self.C >= 0):
            raise InvalidInputError(f"C must be a nonnegative real, got {self.C}")
        if self.kind is LossKind.ZERO_ONE_LOGISTIC and self.C < 1:
            raise InvalidInputError("the 0-1 loss needs an envelope C >= 1")

    @classmethod
    def absolute_linear(cls, B: float, C: float) -> "LossSpec":
        return cls(LossKind.ABSOLUTE_LINEAR, float(B), float(C))

    @classmethod
    def zero_one(cls, C: float = 1.0) -> "LossSpec":
        return cls(LossKind.ZERO_ONE_LOGISTIC, 0.0, float(C))

    @property
    def constant_envelope(self) -> bool:
        return self.kind is LossKind.ZERO_ONE_LOGISTIC or self.B == 0.0


@dataclass(frozen=True)
class Dataset:
    """An ordered sample ``S = (z_1, ..., z_m)`` stored column-wise."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DimensionError(
                f"inconsistent shapes X{np.shape(self.X)} and y{np.shape(self.y)}")
        if X.shape[0] < 1:
            raise InvalidInputError("a dataset needs at least one point")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_points(cls, points) -> "Dataset":
        points = list(points)
        if not points:
            raise InvalidInputError("a dataset needs at least one point")
        xs = [np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in points]
        if len({x.shape for x in xs}) != 1:
            raise DimensionError("data points have inconsistent dimensions")
        return cls(np.stack(xs), np.array([float(y) for _, y in points]))

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.m

    def __iter__(self) -> Iterator[tuple[np.ndarray, float]]:
        for i in range(self.m):
            yield self.X[i], float(self.y[i])

    def split(self, k: int) -> tuple["Dataset", "Dataset"]:
        """Return ``(S_{<=k}, S_{>k})``; both halves keep the original order."""
        if not 1 <= k < self.m:
            raise InvalidInputError(f"split index must lie in [1, m-1], got {k} for m={self.m}")
        return Dataset(self.X[:k], self.y[:k]), Dataset(self.X[k:], self.y[k:])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])


def _as_predictors(h, d: int) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != d or h.ndim > 2:
        raise DimensionError(f"predictor of shape {h.shape} does not match data dimension {d}")
    return h


def losses(spec: LossSpec, h, X, y) -> np.ndarray:
    """Vectorised loss: ``h`` of shape (d,) gives (m,), shape (n, d) gives (n, m)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    h = _as_predictors(h, X.shape[1])
    scores = h @ X.T
    if spec.kind is LossKind.ABSOLUTE_LINEAR:
        return np.abs(scores - y)
    # phi(s) > 1/2 iff s > 0; the boundary s == 0 predicts class 0
    return np.abs((scores > 0).astype(float) - y)


def loss(spec: LossSpec, h, z) -> float:
    x, y = z
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.shape != x.shape:
        raise DimensionError(f"predictor dimension {h.shape} != data dimension {x.shape}")
    return float(losses(spec, h, x[None, :], np.array([y]))[0])


def envelope(spec: LossSpec, h):
    """``K(h)``; vectorised over a leading axis of predictors."""
    h = np.asarray(h, dtype=float)
    if spec.kind is LossKind.ZERO_ONE_LOGISTIC:
        k = np.full(h.shape[:-1], spec.C) if h.ndim > 1 else spec.C
    else:
        k = spec.B * np.linalg.norm(h, axis=-1) + spec.C
    return float(k) if np.ndim(k) == 0 else k


def empirical_risk(spec: LossSpec, h, s: Dataset):
    """``R_m(h) = (1/m) sum_i l(h, z_i)``; one value per predictor row."""
    if s.m < 1:
        raise InvalidInputError("empirical risk of an empty dataset")
    r = losses(spec, h, s.X, s.y).mean(axis=-1)
    return float(r) if np.ndim(r) == 0 else r


def summarize(values) -> tuple[float, float]:
    """Sample mean and its standard error. Constant samples are returned exactly."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise InvalidInputError("need at least two samples for a standard error")
    if np.all(values == values.flat[0]):
        return float(values.flat[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n))


def true_risk_mc(spec: LossSpec, h, sampler: Callable[[int, np.random.Generator], Dataset],
                 n: int, rng) -> tuple[float, float]:
    """Monte-Carlo estimate of ``R(h) = E_mu[l(h, Z)]`` from ``n`` fresh draws.

    ``sampler(n, rng)`` must return a :class:`Dataset` of ``n`` iid points.
    """
    if n < 2:
        raise InvalidInputError(f"need n >= 2 fresh points, got {n}")
    rng = np.random.default_rng(rng)
    fresh = sampler(n, rng)
    return summarize(losses(spec, h, fresh.X, fresh.y))


@dataclass(frozen=True)
class SelfBoundingWitness:
    """Evidence that ``f(S) = (1/K) sum_i (K - l(h, z_i))`` is
    ``(beta, (1 - beta) m)``-self-bounding on one concrete sample.

    The float fields are for reporting; :meth:`violations` re-checks every
    condition in exact rational arithmetic on the same terms.
    """

    beta: float
    f_value: float
    per_index_gaps: np.ndarray
    gap_sum: float
    _terms: tuple = field(repr=False, default=())

    @property
    def m(self) -> int:
        return len(self.per_index_gaps)

    @property
    def a(self) -> float:
        return self.beta

    @property
    def b(self) -> float:
        return (1.0 - self.beta) * self.m

    def violations(self) -> list[str]:
        terms = self._terms
        m = len(terms)
        beta = Fraction(self.beta)
        f = sum(terms, Fraction(0))
        out = []
        if not 0 <= f <= m:
            out.append(f"f_value {float(f)} outside [0, {m}]")
        gap_sum = Fraction(0)
        for i, t in enumerate(terms):
            f_i = f - t
            gap = f - f_i
            if not 0 <= gap <= 1:
                out.append(f"gap {i} = {float(gap)} outside [0, 1]")
            gap_sum += gap
        if not gap_sum <= beta * f + (1 - beta) * m:
            out.append(f"gap sum {float(gap_sum)} exceeds a*f + b")
        return out

    @property
    def holds(self) -> bool:
        return not self.violations()


def self_bounding_witness(spec: LossSpec, h, s: Dataset, beta: float) -> SelfBoundingWitness:
    if not 0.0 <= beta <= 1.0:
        raise InvalidInputError(f"beta must lie in [0, 1], got {beta}")
    K = envelope(spec, h)
    if K <= 0:
        raise DegenerateEnvelopeError(f"envelope K(h) = {K} must be positive")
    ell = losses(spec, h, s.X, s.y)
    terms = tuple(Fraction(float(t)) for t in (K - ell) / K)
    f = sum(terms, Fraction(0))
    # f - f_i where f_i drops the i-th summand
    gaps = [f - (f - t) for t in terms]
    return SelfBoundingWitness(
        beta=float(beta),
        f_value=float(f),
        per_index_gaps=np.array([float(g) for g in gaps]),
        gap_sum=float(sum(gaps, Fraction(0))),
        _terms=terms,
    )
