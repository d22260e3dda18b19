"""Exhaustive grid minimisation of bounds over (alpha, sigma^2, t)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .bounds import BoundReport
from .errors import InvalidInputError, NoFeasiblePointError, PacBoundError


def alpha_grid(step: int) -> tuple:
    """``{i / step : 0 <= i <= step}``."""
    if step < 1:
        raise InvalidInputError(f"step must be a positive integer, got {step}")
    return tuple(i / step for i in range(step + 1))


def halving_grid(start: float, count: int) -> tuple:
    """``(start, start/2, ..., start/2^(count-1))``."""
    if not start > 0:
        raise InvalidInputError(f"grid start must be positive, got {start}")
    return tuple(start / 2.0 ** j for j in range(count))


def num_halvings(m: int) -> int:
    """``J = floor(log2 m)``, at least 1."""
    return max(1, int(math.floor(math.log2(m))))


Sigma2Spec = Union[Sequence[float], Callable[[float], Sequence[float]]]


@dataclass(frozen=True)
class GridSpec:
    """Candidate hyperparameters.

    ``sigma2`` is either a fixed sequence or a function of alpha returning the
    candidates for that alpha (the linear-regression grid rescales with alpha).
    ``ts`` defaults to a single ``None`` entry meaning "t is not a free knob".
    """

    alphas: tuple
    sigma2: Sigma2Spec
    ts: tuple = (None,)

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "ts", tuple(self.ts))
        if not self.alphas:
            raise InvalidInputError("alpha grid is empty")
        if any(not 0.0 <= a <= 1.0 for a in self.alphas):
            raise InvalidInputError("alpha candidates must lie in [0, 1]")
        if any(t is not None and not 0.0 < t < 1.0 for t in self.ts):
            raise InvalidInputError("t candidates must lie in (0, 1)")

    @classmethod
    def halving(cls, step: int, m: int, sigma0_sq, ts=(None,)) -> "GridSpec":
        """``alpha in {i/step}``, ``sigma^2 in {sigma0^2 / 2^j : 1 <= j <= J}``.

        ``sigma0_sq`` may be a number or a function of alpha.
        """
        J = num_halvings(m)
        if callable(sigma0_sq):
            def sigma2(alpha, _s0=sigma0_sq):
                return halving_grid(_s0(alpha) / 2.0, J)
        else:
            sigma2 = halving_grid(float(sigma0_sq) / 2.0, J)
        return cls(alpha_grid(step), sigma2, ts)

    def sigma2_for(self, alpha: float) -> tuple:
        values = tuple(self.sigma2(alpha)) if callable(self.sigma2) else tuple(self.sigma2)
        if not values or any(not v > 0 for v in values):
            raise InvalidInputError("sigma^2 candidates must be positive and nonempty")
        return values

    def points(self) -> list:
        out = []
        for alpha in self.alphas:
            for s2 in self.sigma2_for(alpha):
                for t in self.ts:
                    p = {"alpha": alpha, "sigma2": float(s2)}
                    if t is not None:
                        p["t"] = float(t)
                    out.append(p)
        return out


@dataclass
class OptimResult:
    best_report: BoundReport
    best_params: dict
    full_table: list
    excluded: list = field(default_factory=list)
    stage1: Optional["OptimResult"] = None


def _tie_key(params: dict, total: float) -> tuple:
    # smaller total, then smaller alpha, then smaller sigma^2, then smaller t
    return (total, params.get("alpha", 0.0), params.get("sigma2", 0.0), params.get("t") or 0.0)


def _evaluate(bound_fn, points):
    table, excluded, reports = [], [], []
    for params in points:
        try:
            report = bound_fn(dict(params))
        except (PacBoundError, ArithmeticError) as exc:
            excluded.append((dict(params), f"{type(exc).__name__}: {exc}"))
            continue
        if not np.isfinite(report.total):
            excluded.append((dict(params), f"non-finite total {report.total}"))
            continue
        table.append((dict(params), report.total))
        reports.append(report)
    return table, excluded, reports


def _pick(table, reports, excluded) -> OptimResult:
    if not table:
        raise NoFeasiblePointError(f"all {len(excluded)} grid points failed")
    best = min(range(len(table)), key=lambda i: _tie_key(*table[i]))
    return OptimResult(reports[best], dict(table[best][0]), table, excluded)


def minimize_bound(bound_fn: Callable[[dict], BoundReport], grid: GridSpec) -> OptimResult:
    """Evaluate ``bound_fn`` on every grid point and keep the smallest total.

    Points whose evaluation raises a pacbound error (e.g. an inadmissible prior
    variance) are dropped and listed in ``excluded``.
    """
    points = grid.points()
    if not points:
        raise InvalidInputError("empty grid")
    table, excluded, reports = _evaluate(bound_fn, points)
    return _pick(table, reports, excluded)


def two_stage_optimize(bound_fn: Callable[[dict], BoundReport], sigma2_grid: Sequence[float],
                       alpha_fn: Callable[[BoundReport], dict],
                       stage1_alpha: Optional[dict] = None) -> OptimResult:
    """Pick the posterior variance at ``alpha = 1/2``, then re-tune alpha.

    ``alpha_fn`` maps the stage-1 report to the alpha parameters of stage 2,
    typically through :func:`pacbound.bounds.optimal_alpha`. ``stage1_alpha``
    overrides the stage-1 alpha parameters (default ``{"alpha": 0.5}``).
    The returned table holds every stage-1 point followed by the stage-2 point.
    """
    stage1_alpha = stage1_alpha or {"alpha": 0.5}
    points = [{**stage1_alpha, "sigma2": float(s2)} for s2 in sigma2_grid]
    table, excluded, reports = _evaluate(bound_fn, points)
    stage1 = _pick(table, reports, excluded)
    params2 = {**stage1.best_params, **alpha_fn(stage1.best_report)}
    t2, ex2, r2 = _evaluate(bound_fn, [params2])
    if not t2:
        raise NoFeasiblePointError(f"stage-2 point {params2} failed: {ex2[0][1]}")
    return OptimResult(r2[0], dict(t2[0][0]), table + t2, excluded, stage1=stage1)
