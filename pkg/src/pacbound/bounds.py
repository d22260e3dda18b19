"""PAC-Bayes bounds for losses with a hypothesis-dependent envelope, each returned
as an itemised report.

All logarithms are natural, KL divergences are in nats. Every bound's
``total`` is the exact floating sum of its ``terms``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import Dataset, LossKind, LossSpec, envelope, losses
from .errors import (
    DimensionError,
    DivergentMomentError,
    InvalidInputError,
    SaturationError,
    SingularInputError,
)
from .gaussian import IsotropicGaussian, McEstimate, seed_of, kl_isotropic, log_mean_exp, sample


@dataclass(frozen=True)
class BoundInputs:
    m: int
    alpha: float
    delta: float
    kl: float = 0.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise InvalidInputError(f"m must be a positive integer, got {self.m}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")
        if not (np.isfinite(self.kl) and self.kl >= 0):
            raise InvalidInputError(f"KL must be a nonnegative real, got {self.kl}")
        if not np.isfinite(self.alpha):
            raise InvalidInputError(f"alpha must be finite, got {self.alpha}")
        object.__setattr__(self, "m", int(self.m))

    @classmethod
    def for_measures(cls, m, alpha, delta, posterior: IsotropicGaussian,
                     prior: IsotropicGaussian) -> "BoundInputs":
        return cls(m, alpha, delta, kl_isotropic(posterior, prior))

    @property
    def rate(self) -> float:
        """``m ** alpha``, the divisor of the complexity terms."""
        return float(self.m) ** self.alpha


@dataclass
class BoundReport:
    """A bound value with every additive term and hyperparameter itemised."""

    terms: dict
    hyperparams: dict = field(default_factory=dict)
    std_errors: dict = field(default_factory=dict)
    name: str = ""
    total: float = field(init=False)

    def __post_init__(self):
        self.terms = {k: float(v) for k, v in self.terms.items()}
        self.total = math.fsum(self.terms.values())

    @property
    def std_error(self) -> float:
        """Combined Monte-Carlo standard error of the estimated terms."""
        return math.sqrt(math.fsum(se * se for se in self.std_errors.values()))

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "total": self.total,
            "terms": dict(self.terms),
            "hyperparams": dict(self.hyperparams),
            "std_errors": dict(self.std_errors),
        }


class SofteningFn(str, enum.Enum):
    """Members are callable: ``SofteningFn.CLIP(x)``."""

    CLIP = "clip"
    SQRT_TAIL = "sqrt_tail"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self is SofteningFn.CLIP:
            out = np.minimum(x, 1.0)
        else:
            out = np.where(x <= 1.0, x, 2.0 * np.sqrt(np.maximum(x, 1.0)) - 1.0)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GaussianPriorConfig:
    """Prior ``N(0, sigma2 I)`` with ``sigma2 = t m^(1 - 2 alpha) / B^2``."""

    t: float
    alpha: float
    B: float
    m: int

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise InvalidInputError(f"t must lie in (0, 1), got {self.t}")
        if not self.B > 0:
            raise InvalidInputError(f"B must be positive, got {self.B}")
        if self.m < 1:
            raise InvalidInputError(f"m must be positive, got {self.m}")

    @property
    def scale(self) -> float:
        """``m^(1 - 2 alpha)``."""
        return float(self.m) ** (1.0 - 2.0 * self.alpha)

    @property
    def sigma2(self) -> float:
        return self.t * self.scale / self.B ** 2

    @property
    def f_t(self) -> float:
        return (1.0 - self.t) / self.t

    def prior(self, d: int) -> IsotropicGaussian:
        return IsotropicGaussian.centered(d, self.sigma2)


@dataclass(frozen=True)
class StrongMomentConfig:
    """Caller-supplied ``M_{3,s}`` (a sup over all posteriors) and threshold ``s``."""

    m3s: float
    s: float

    def __post_init__(self):
        if not self.m3s >= 0:
            raise InvalidInputError(f"m3s must be nonnegative, got {self.m3s}")
        if not self.s > 0:
            raise InvalidInputError(f"s must be positive, got {self.s}")


# --------------------------------------------------------------------------
# Bounded (constant-envelope) case
# --------------------------------------------------------------------------

def _complexity(inp: BoundInputs, log_term: float) -> float:
    return (inp.kl + log_term) / inp.rate


def bounded_case_bound(inp: BoundInputs, C: float, emp_risk: float) -> BoundReport:
    if not C > 0:
        raise InvalidInputError(f"C must be positive, got {C}")
    return BoundReport(
        terms={
            "empirical": emp_risk,
            "kl": _complexity(inp, math.log(1.0 / inp.delta)),
            "moment": C ** 2 / (2.0 * float(inp.m) ** (1.0 - inp.alpha)),
        },
        hyperparams={"alpha": inp.alpha, "kl": inp.kl, "delta": inp.delta, "m": inp.m, "C": C},
        name="bounded",
    )


def alpha_objective(alpha, K1: float, C: float, m: int):
    """``K1 / m^alpha + C^2 / (2 m^(1 - alpha))``: the alpha-dependent part of
    the bounded-case bound, with ``K1 = KL + ln(1/delta)``."""
    alpha = np.asarray(alpha, dtype=float)
    out = K1 / float(m) ** alpha + C ** 2 / (2.0 * float(m) ** (1.0 - alpha))
    return float(out) if out.ndim == 0 else out


def optimal_alpha(K1: float, C: float, m: int) -> float:
    """Closed-form minimiser of :func:`alpha_objective`."""
    if m < 2:
        raise InvalidInputError(f"m must be >= 2 (log m vanishes at m = 1), got {m}")
    if not (K1 > 0 and C > 0):
        raise InvalidInputError("K1 and C must be positive")
    return 0.5 + math.log(2.0 * K1 / C ** 2) / (2.0 * math.log(m))


def split_prior_bound(in1: BoundInputs, in2: BoundInputs, C: float,
                      emp_risk_full: float) -> BoundReport:
    """Two data-dependent priors, one per half of the sample.

    ``in1`` and ``in2`` carry the full sample size ``m`` and the overall
    ``delta``; each half is charged size ``m/2`` and confidence ``delta/2``.
    ``in1.kl`` is ``KL(Q || P_1)`` with ``P_1`` built from the second half,
    ``in2.kl`` is ``KL(Q || P_2)`` with ``P_2`` built from the first half.
    """
    if in1.m != in2.m or in1.delta != in2.delta:
        raise InvalidInputError("both halves must share m and delta")
    if in1.m % 2:
        raise InvalidInputError(f"m must be even, got {in1.m}")
    if not C > 0:
        raise InvalidInputError(f"C must be positive, got {C}")
    half = in1.m / 2.0
    log_term = math.log(2.0 / in1.delta)
    kl_part = moment_part = 0.0
    for inp in (in1, in2):
        kl_part += 0.5 * (inp.kl + log_term) / half ** inp.alpha
        moment_part += 0.5 * C ** 2 / (2.0 * half ** (1.0 - inp.alpha))
    return BoundReport(
        terms={"empirical": emp_risk_full, "kl": kl_part, "moment": moment_part},
        hyperparams={"alpha1": in1.alpha, "alpha2": in2.alpha, "kl1": in1.kl,
                     "kl2": in2.kl, "delta": in1.delta, "m": in1.m, "C": C},
        name="split_prior",
    )


def subgamma_baseline_bound(inp: BoundInputs, s2: float, c: float, emp_risk: float) -> BoundReport:
    """Baseline bound for sub-gamma losses with variance ``s2`` and scale ``c``."""
    if not c < 1:
        raise InvalidInputError(f"scale c must be < 1, got {c}")
    if not s2 >= 0:
        raise InvalidInputError(f"s2 must be nonnegative, got {s2}")
    return BoundReport(
        terms={
            "empirical": emp_risk,
            "kl": (inp.kl + math.log(1.0 / inp.delta)) / float(inp.m),
            "moment": s2 / (2.0 * (1.0 - c)),
        },
        hyperparams={"s2": s2, "c": c, "kl": inp.kl, "delta": inp.delta, "m": inp.m},
        name="subgamma",
    )


# --------------------------------------------------------------------------
# Exponential moments
# --------------------------------------------------------------------------

def hype_exp_moment_bound(K_h: float, m: int, alpha: float) -> float:
    """Upper bound ``exp(K^2 / (2 m^(1 - 2 alpha)))`` on ``E_S[exp(m^alpha Delta(h))]``."""
    if not K_h > 0:
        raise InvalidInputError(f"K_h must be positive, got {K_h}")
    exponent = K_h ** 2 / (2.0 * float(m) ** (1.0 - 2.0 * alpha))
    try:
        return math.exp(exponent)
    except OverflowError:
        raise SaturationError(f"exp({exponent}) overflows", exponent=exponent) from None


class NaiveTailBound(NamedTuple):
    value: float
    vacuous: bool


def naive_tail_bound(K_h: float, m: int, alpha: float) -> NaiveTailBound:
    """Tail-integral bound on ``E_S[exp(m^alpha Delta(h)^2)]`` (no self-bounding).

    A negative denominator makes the bound vacuous; the value is returned
    anyway with ``vacuous=True``.
    """
    if not K_h > 0:
        raise InvalidInputError(f"K_h must be positive, got {K_h}")
    denom = 1.0 - float(m) ** (1.0 - alpha) / (2.0 * K_h ** 2)
    if denom == 0.0:
        raise SingularInputError("m^(1-alpha) == 2 K^2 makes the bound singular")
    exponent = float(m) ** alpha * K_h ** 2 - m / 2.0
    try:
        bracket = math.expm1(exponent)
    except OverflowError:
        bracket = math.inf
    return NaiveTailBound(1.0 + 2.0 / denom * bracket, denom < 0)


def _admissible_variance(spec: LossSpec, m: int, alpha: float) -> float:
    """Largest prior variance for which the prior exponential moment is finite."""
    if spec.kind is LossKind.ABSOLUTE_LINEAR and spec.B > 0:
        return float(m) ** (1.0 - 2.0 * alpha) / spec.B ** 2
    return math.inf


def _log_moment(exponents) -> tuple[float, float]:
    log_mean, log_se = log_mean_exp(exponents)
    if not np.isfinite(log_mean):
        raise DivergentMomentError("prior exponential moment overflowed during estimation")
    return log_mean, (math.exp(log_se - log_mean) if np.isfinite(log_se) else 0.0)


def prior_moment_term(inp: BoundInputs, prior: IsotropicGaussian, spec: LossSpec,
                      n_mc: int, rng) -> tuple[float, float]:
    """``(1/m^alpha) ln E_P[exp(K^2 / (2 m^(1-2alpha)))]`` and its MC standard error."""
    scale = float(inp.m) ** (1.0 - 2.0 * inp.alpha)
    if spec.constant_envelope:
        return spec.C ** 2 / (2.0 * float(inp.m) ** (1.0 - inp.alpha)), 0.0
    limit = _admissible_variance(spec, inp.m, inp.alpha)
    if not prior.variance < limit:
        raise DivergentMomentError(
            f"prior variance {prior.variance:g} outside the admissible window (0, {limit:g})")
    draws = sample(prior, n_mc, rng)
    log_mean, rel_se = _log_moment(envelope(spec, draws) ** 2 / (2.0 * scale))
    return log_mean / inp.rate, rel_se / inp.rate


def self_bounding_pac_bayes_bound(inp: BoundInputs, prior: IsotropicGaussian, spec: LossSpec,
                                  emp_term: McEstimate, n_mc: int, rng) -> BoundReport:
    """General envelope bound with the prior exponential moment estimated by Monte Carlo."""
    moment, moment_se = prior_moment_term(inp, prior, spec, n_mc, rng)
    return BoundReport(
        terms={
            "empirical": emp_term.value,
            "kl": _complexity(inp, math.log(1.0 / inp.delta)),
            "moment": moment,
        },
        hyperparams={"alpha": inp.alpha, "sigma2_prior": prior.variance, "kl": inp.kl,
                     "delta": inp.delta, "m": inp.m},
        std_errors={"empirical": emp_term.std_error, "moment": moment_se},
        name="self_bounding",
    )


# --------------------------------------------------------------------------
# Softened losses
# --------------------------------------------------------------------------

def psi_apply(psi: SofteningFn, x):
    if np.any(np.asarray(x) < 0):
        raise InvalidInputError("softening functions are defined on [0, inf)")
    return SofteningFn(psi)(x)


def psi_empirical_risk(spec: LossSpec, psi: SofteningFn, s: float, h, data: Dataset):
    """``(s/m) sum_i psi(l(h, z_i) / s)``; vectorised over predictor rows."""
    if not s > 0:
        raise InvalidInputError(f"threshold s must be positive, got {s}")
    soft = s * SofteningFn(psi)(losses(spec, h, data.X, data.y) / s)
    r = np.mean(soft, axis=-1)
    return float(r) if np.ndim(r) == 0 else r


def truncation_gap_mc(q: IsotropicGaussian, spec: LossSpec, s: float, n: int, rng) -> McEstimate:
    """Estimate ``E_{h~Q}[K(h) 1{K(h) >= s}]``; ``s = 0`` gives ``E_Q[K]``."""
    if not s >= 0:
        raise InvalidInputError(f"threshold s must be nonnegative, got {s}")
    if spec.constant_envelope:
        return McEstimate.exact(spec.C if spec.C >= s else 0.0)
    k = envelope(spec, sample(q, n, rng))
    return McEstimate.from_samples(k * (k >= s), seed_of(rng))


def posterior_tail_third_moment(q: IsotropicGaussian, spec: LossSpec, s: float, n: int,
                                rng) -> McEstimate:
    """``E_Q[K^3 1{K >= s}]`` for one posterior: a lower estimate of ``M_{3,s}``."""
    if spec.constant_envelope:
        return McEstimate.exact(spec.C ** 3 if spec.C >= s else 0.0)
    k = envelope(spec, sample(q, n, rng))
    return McEstimate.from_samples(k ** 3 * (k >= s))


def _softened_moment(inp: BoundInputs, prior: IsotropicGaussian, spec: LossSpec,
                     psi: SofteningFn, s: float, n_mc: int, rng) -> tuple[float, float]:
    scale = float(inp.m) ** (1.0 - 2.0 * inp.alpha)
    coef = s ** 2 / (2.0 * scale)
    if spec.constant_envelope:
        return coef * psi(spec.C / s) ** 2 / inp.rate, 0.0
    k = envelope(spec, sample(prior, n_mc, rng))
    log_mean, rel_se = _log_moment(coef * psi(k / s) ** 2)
    return log_mean / inp.rate, rel_se / inp.rate


def _posterior_psi_risk(posterior, spec, psi, s, data, n_mc, rng) -> McEstimate:
    draws = sample(posterior, n_mc, rng)
    return McEstimate.from_samples(psi_empirical_risk(spec, psi, s, draws, data))


def softened_bound(inp: BoundInputs, prior: IsotropicGaussian, posterior: IsotropicGaussian,
                   spec: LossSpec, psi: SofteningFn, s: float, data: Dataset,
                   n_mc: int, rng) -> BoundReport:
    """Bound on ``E_Q[R]`` through the empirical psi-risk and the truncation gap."""
    if not s > 0:
        raise InvalidInputError(f"threshold s must be positive, got {s}")
    psi = SofteningFn(psi)
    rng = np.random.default_rng(rng)
    emp = _posterior_psi_risk(posterior, spec, psi, s, data, n_mc, rng)
    gap = truncation_gap_mc(posterior, spec, s, n_mc, rng)
    moment, moment_se = _softened_moment(inp, prior, spec, psi, s, n_mc, rng)
    return BoundReport(
        terms={
            "empirical": emp.value,
            "truncation": gap.value,
            "kl": _complexity(inp, math.log(1.0 / inp.delta)),
            "moment": moment,
        },
        hyperparams={"alpha": inp.alpha, "s": s, "psi": psi.value, "kl": inp.kl,
                     "delta": inp.delta, "m": inp.m},
        std_errors={"empirical": emp.std_error, "truncation": gap.std_error,
                    "moment": moment_se},
        name="softened",
    )


def strong_softened_bound(inp: BoundInputs, cfg: StrongMomentConfig, prior: IsotropicGaussian,
                          posterior: IsotropicGaussian, spec: LossSpec, psi: SofteningFn,
                          data: Dataset, n_mc: int, rng) -> BoundReport:
    """Softened bound with the truncation gap replaced by ``M_{3,s} / s^2``."""
    psi = SofteningFn(psi)
    rng = np.random.default_rng(rng)
    s = cfg.s
    emp = _posterior_psi_risk(posterior, spec, psi, s, data, n_mc, rng)
    moment, moment_se = _softened_moment(inp, prior, spec, psi, s, n_mc, rng)
    return BoundReport(
        terms={
            "empirical": emp.value,
            "truncation": cfg.m3s / s ** 2,
            "kl": _complexity(inp, math.log(1.0 / inp.delta)),
            "moment": moment,
        },
        hyperparams={"alpha": inp.alpha, "s": s, "m3s": cfg.m3s, "psi": psi.value,
                     "kl": inp.kl, "delta": inp.delta, "m": inp.m},
        std_errors={"empirical": emp.std_error, "moment": moment_se},
        name="strong_softened",
    )


# --------------------------------------------------------------------------
# Gaussian prior, affine envelope
# --------------------------------------------------------------------------

def _check_gaussian_case(cfg: GaussianPriorConfig, C: float, N: int):
    if N < 6:
        raise DimensionError(f"the Gaussian-prior bound needs N >= 6, got N = {N}")
    if not C >= 0:
        raise InvalidInputError(f"C must be nonnegative, got {C}")


def _envelope_ratio(cfg: GaussianPriorConfig, C: float) -> float:
    """``C / sqrt(2 f(t) m^(1 - 2 alpha))``."""
    return C / math.sqrt(2.0 * cfg.f_t * cfg.scale)


def log_xi_closed_form_bound(cfg: GaussianPriorConfig, C: float, N: int) -> float:
    """Natural log of :func:`xi_closed_form_bound`; finite even when the bound is not."""
    _check_gaussian_case(cfg, C, N)
    f = cfg.f_t
    return (math.log(2.0)
            + C ** 2 * (1.0 + f) / (2.0 * cfg.scale * f)
            - 0.5 * N * math.log1p(-cfg.t)
            + (N - 1) * math.log1p(_envelope_ratio(cfg, C)))


def xi_closed_form_bound(cfg: GaussianPriorConfig, C: float, N: int) -> float:
    """Closed-form upper bound on ``xi = E_P[exp(K(h)^2 / (2 m^(1 - 2 alpha)))]``
    for ``K(h) = B ||h|| + C`` and the prior described by ``cfg``."""
    log_value = log_xi_closed_form_bound(cfg, C, N)
    try:
        return math.exp(log_value)
    except OverflowError:
        raise SaturationError(f"xi bound exp({log_value}) overflows", exponent=log_value) from None


def gaussian_regression_bound(inp: BoundInputs, cfg: GaussianPriorConfig, C: float, N: int,
                              emp_term: McEstimate) -> BoundReport:
    """Closed-form bound for ``K(h) = B ||h|| + C`` under a centred Gaussian prior."""
    _check_gaussian_case(cfg, C, N)
    if cfg.m != inp.m or not math.isclose(cfg.alpha, inp.alpha, rel_tol=0, abs_tol=1e-15):
        raise InvalidInputError("prior config and bound inputs disagree on m or alpha")
    f = cfg.f_t
    return BoundReport(
        terms={
            "empirical": emp_term.value,
            "kl": _complexity(inp, math.log(2.0 / inp.delta)),
            "c2": C ** 2 / (2.0 * float(inp.m) ** (1.0 - inp.alpha)) * (1.0 + 1.0 / f),
            "envelope": N / inp.rate * (math.log1p(_envelope_ratio(cfg, C))
                                        - 0.5 * math.log1p(-cfg.t)),
        },
        hyperparams={"alpha": inp.alpha, "t": cfg.t, "sigma2_prior": cfg.sigma2, "kl": inp.kl,
                     "delta": inp.delta, "m": inp.m, "B": cfg.B, "C": C, "N": N},
        std_errors={"empirical": emp_term.std_error},
        name="gaussian_regression",
    )
