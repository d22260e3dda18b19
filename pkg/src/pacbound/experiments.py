"""Synthetic data, predictor fitting and the linear/logistic bound pipelines.

Every random stream is derived from ``(seed, m, stream)`` or
``(seed, trial, stream)`` through :func:`derive_rng`, so results do not
depend on evaluation order.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit

from .bounds import (
    BoundInputs,
    BoundReport,
    GaussianPriorConfig,
    bounded_case_bound,
    gaussian_regression_bound,
    optimal_alpha,
    split_prior_bound,
)
from .core import Dataset, LossSpec, losses
from .errors import ConvergenceError, DimensionError, InvalidInputError
from .gaussian import IsotropicGaussian, McEstimate, sample, sample_truncated
from .optimize import GridSpec, OptimResult, halving_grid, minimize_bound, num_halvings, two_stage_optimize

PI_DIGITS = "31415926535897932384626433832795028841971693993751"

# stream tags for derive_rng
DATA, POSTERIOR_MC, TRUE_RISK = 0, 1, 2


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys)))


# --------------------------------------------------------------------------
# Configurations and results
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LinRegConfig:
    d: int = 10
    m: int = 100
    c: float = 10.0
    e: float = 10.0
    gen_std: float = 5.0
    delta: float = 0.05
    step: int = 8
    t0: float = 0.5
    seed: int = 0
    n_mc: int = 10_000
    n_post: int = 200
    n_data: int = 5000

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise InvalidInputError("d and m must be positive")
        if not 0 < self.t0 < 1:
            raise InvalidInputError(f"t0 must lie in (0, 1), got {self.t0}")

    @property
    def B(self) -> float:
        return self.e * math.sqrt(self.d)

    @property
    def C(self) -> float:
        return math.sqrt(self.c * self.d * self.e)

    @property
    def loss(self) -> LossSpec:
        return LossSpec.absolute_linear(self.B, self.C)

    def sigma0_sq(self, alpha: float, m: Optional[int] = None) -> float:
        m = self.m if m is None else m
        return self.t0 * float(m) ** (1.0 - 2.0 * alpha) / self.B ** 2


@dataclass(frozen=True)
class LogRegConfig:
    d: int = 10
    lam: float = 0.01
    delta: float = 0.05
    sigma0_sq: float = 0.5
    m: int = 100
    seed: int = 0
    n_mc: int = 10_000
    n_post: int = 1000
    normalize: Optional[bool] = None   # None: on for the alpha comparison, off for informed priors
    informed_priors: bool = False

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidInputError(f"lambda must be positive, got {self.lam}")
        if not 1 <= self.d <= len(PI_DIGITS):
            raise InvalidInputError(f"d must lie in [1, {len(PI_DIGITS)}], got {self.d}")

    @property
    def loss(self) -> LossSpec:
        return LossSpec.zero_one()

    def resolved_normalize(self, mode: "LogisticMode") -> bool:
        if self.normalize is not None:
            return self.normalize
        return LogisticMode(mode) is LogisticMode.ALPHA_COMPARISON


class LogisticMode(str, enum.Enum):
    ALPHA_COMPARISON = "alpha"
    INFORMED_PRIOR = "informed"


@dataclass
class CurvePoint:
    m: int
    bound_total: float
    bound_terms: dict
    chosen_alpha: float
    chosen_sigma2: float
    emp_risk_mc: McEstimate
    true_risk_mc: McEstimate
    hyperparams: dict = field(default_factory=dict)
    bound_std_error: float = 0.0

    def as_row(self) -> dict:
        row = asdict(self)
        row["emp_risk_mc"] = asdict(self.emp_risk_mc)
        row["true_risk_mc"] = asdict(self.true_risk_mc)
        return row


@dataclass(frozen=True)
class CoverageTrial:
    bound: float
    bound_std_error: float
    risk: McEstimate

    def violated(self, n_se: float = 3.0) -> bool:
        combined = math.hypot(self.risk.std_error, self.bound_std_error)
        return self.risk.value - self.bound > n_se * combined


# --------------------------------------------------------------------------
# Data and fitting
# --------------------------------------------------------------------------

def linreg_targets(h_star, X) -> np.ndarray:
    """``y = sqrt(max(<h*, x>, 0))``."""
    return np.sqrt(np.maximum(np.atleast_2d(X) @ np.asarray(h_star, dtype=float), 0.0))


def linreg_sampler(cfg: LinRegConfig, h_star) -> Callable[[int, np.random.Generator], Dataset]:
    def draw(n, rng):
        X = sample_truncated(cfg.gen_std, cfg.e, cfg.d, rng, size=n)
        return Dataset(X, linreg_targets(h_star, X))
    return draw


def gen_linreg_data(cfg: LinRegConfig, rng, m: Optional[int] = None) -> tuple[Dataset, np.ndarray]:
    rng = np.random.default_rng(rng)
    m = cfg.m if m is None else m
    h_star = sample_truncated(cfg.gen_std, cfg.c, cfg.d, rng)
    data = linreg_sampler(cfg, h_star)(m, rng)
    # the envelope derivation needs ||x|| <= B and |y| <= C
    if np.linalg.norm(data.X, axis=1).max() > cfg.B * (1 + 1e-12) or data.y.max() > cfg.C * (1 + 1e-12):
        raise AssertionError("generated data violates the loss envelope")
    return data, h_star


def fit_linreg(data: Dataset, jitter: float = 1e-8) -> np.ndarray:
    """Least squares via the normal equations with a tiny ridge for stability."""
    X, y = data.X, data.y
    gram = X.T @ X + jitter * np.eye(data.d)
    return linalg.solve(gram, X.T @ y, assume_a="pos")


def pi_digits(d: int) -> np.ndarray:
    if not 1 <= d <= len(PI_DIGITS):
        raise InvalidInputError(f"only {len(PI_DIGITS)} digits of pi are tabulated")
    return np.array([float(c) for c in PI_DIGITS[:d]])


def gen_logistic_data(cfg: LogRegConfig, rng, m: Optional[int] = None) -> tuple[Dataset, np.ndarray]:
    rng = np.random.default_rng(rng)
    m = cfg.m if m is None else m
    h_star = pi_digits(cfg.d)
    X = rng.standard_normal((m, cfg.d))
    return Dataset(X, (X @ h_star > 0).astype(float)), h_star


def logistic_objective(h, data: Dataset, lam: float) -> float:
    s = data.X @ h
    # -[y log phi(s) + (1-y) log(1 - phi(s))] == log(1 + e^s) - y s
    return float(0.5 * lam * h @ h + np.mean(np.logaddexp(0.0, s) - data.y * s))


def logistic_gradient(h, data: Dataset, lam: float) -> np.ndarray:
    return lam * h + data.X.T @ (expit(data.X @ h) - data.y) / data.m


def fit_logistic(data: Dataset, lam: float, tol: float = 1e-6, max_iter: int = 10_000) -> np.ndarray:
    """Regularised logistic regression by gradient descent with Armijo backtracking."""
    if not lam > 0:
        raise InvalidInputError(f"lambda must be positive, got {lam}")
    h = np.zeros(data.d)
    f = logistic_objective(h, data, lam)
    for _ in range(max_iter):
        g = logistic_gradient(h, data, lam)
        gg = float(g @ g)
        if math.sqrt(gg) <= tol:
            return h
        step = 1.0
        while True:
            h_new = h - step * g
            f_new = logistic_objective(h_new, data, lam)
            if f_new <= f - 1e-4 * step * gg or step < 1e-12:
                break
            step *= 0.5
        h, f = h_new, f_new
    g_norm = float(np.linalg.norm(logistic_gradient(h, data, lam)))
    if g_norm <= tol:
        return h
    raise ConvergenceError(f"gradient norm {g_norm:.3g} after {max_iter} iterations", grad_norm=g_norm)


def normalize_trick(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    norm = np.linalg.norm(h)
    if norm == 0:
        raise InvalidInputError("cannot normalise the zero predictor")
    return h / norm


# --------------------------------------------------------------------------
# Posterior risk estimates
# --------------------------------------------------------------------------

def posterior_risk_table(spec: LossSpec, data: Dataset, mean, variances: Sequence[float],
                         n_mc: int, rng, chunk: int = 2000) -> dict:
    """``E_{h ~ N(mean, v I)}[R_m(h)]`` for every ``v`` from one set of draws.

    Draws are shared across variances (common random numbers), so differences
    between grid points are not swamped by Monte-Carlo noise.
    """
    rng = np.random.default_rng(rng)
    variances = sorted(set(float(v) for v in variances))
    base = data.X @ np.asarray(mean, dtype=float)
    per_draw = {v: np.empty(n_mc) for v in variances}
    for start in range(0, n_mc, chunk):
        eps = rng.standard_normal((min(chunk, n_mc - start), data.d))
        noise = eps @ data.X.T
        for v in variances:
            scores = base + math.sqrt(v) * noise
            per_draw[v][start:start + len(eps)] = _loss_from_scores(spec, scores, data.y).mean(axis=1)
    return {v: McEstimate.from_samples(r) for v, r in per_draw.items()}


def _loss_from_scores(spec: LossSpec, scores, y):
    if spec.constant_envelope:
        return np.abs((scores > 0).astype(float) - y)
    return np.abs(scores - y)


def crossed_mean(L) -> McEstimate:
    """Grand mean of a (draws x fresh points) loss matrix with a two-way standard error."""
    L = np.asarray(L, dtype=float)
    n_h, n_z = L.shape
    rows, cols = L.mean(axis=1), L.mean(axis=0)
    var = rows.var(ddof=1) / n_h + cols.var(ddof=1) / n_z
    return McEstimate(float(L.mean()), float(math.sqrt(var)), L.size)


def posterior_true_risk(spec: LossSpec, posterior: IsotropicGaussian,
                        sampler: Callable[[int, np.random.Generator], Dataset],
                        n_post: int, n_data: int, rng) -> McEstimate:
    """``E_{h~Q}[R(h)]`` from posterior draws crossed with fresh data."""
    rng = np.random.default_rng(rng)
    H = sample(posterior, n_post, rng)
    fresh = sampler(n_data, rng)
    return crossed_mean(losses(spec, H, fresh.X, fresh.y))


def logistic_true_risk(posterior: IsotropicGaussian, h_star, n_post: int, rng) -> McEstimate:
    """For ``x ~ N(0, I)`` the 0-1 risk of ``h`` is ``angle(h, h*) / pi``."""
    H = sample(posterior, n_post, rng)
    h_star = np.asarray(h_star, dtype=float)
    cos = (H @ h_star) / (np.linalg.norm(H, axis=1) * np.linalg.norm(h_star))
    return McEstimate.from_samples(np.arccos(np.clip(cos, -1.0, 1.0)) / np.pi)


# --------------------------------------------------------------------------
# Linear regression pipeline
# --------------------------------------------------------------------------

def linreg_optimize(cfg: LinRegConfig, data: Dataset, h_hat, rng) -> OptimResult:
    """Minimise the Gaussian-prior regression bound over the (alpha, sigma^2) grid."""
    if cfg.d < 6:
        raise DimensionError(f"the regression bound needs d >= 6, got d = {cfg.d}")
    m = data.m
    grid = GridSpec.halving(cfg.step, m, lambda a: cfg.sigma0_sq(a, m))
    sigmas = [p["sigma2"] for p in grid.points()]
    emp = posterior_risk_table(cfg.loss, data, h_hat, sigmas, cfg.n_mc, rng)

    def bound_fn(params):
        prior_cfg = GaussianPriorConfig(cfg.t0, params["alpha"], cfg.B, m)
        posterior = IsotropicGaussian(h_hat, params["sigma2"])
        inp = BoundInputs.for_measures(m, params["alpha"], cfg.delta, posterior, prior_cfg.prior(cfg.d))
        return gaussian_regression_bound(inp, prior_cfg, cfg.C, cfg.d, emp[params["sigma2"]])

    return minimize_bound(bound_fn, grid)


def _linreg_point(cfg: LinRegConfig, m: int, rng_data, rng_mc, rng_true) -> tuple[CurvePoint, OptimResult, np.ndarray]:
    data, h_star = gen_linreg_data(cfg, rng_data, m)
    h_hat = fit_linreg(data)
    res = linreg_optimize(cfg, data, h_hat, rng_mc)
    posterior = IsotropicGaussian(h_hat, res.best_params["sigma2"])
    true = posterior_true_risk(cfg.loss, posterior, linreg_sampler(cfg, h_star),
                               cfg.n_post, cfg.n_data, rng_true)
    half = min(total for p, total in res.full_table if p["alpha"] == 0.5) \
        if any(p["alpha"] == 0.5 for p, _ in res.full_table) else float("nan")
    rep = res.best_report
    point = CurvePoint(
        m=m,
        bound_total=rep.total,
        bound_terms=dict(rep.terms),
        chosen_alpha=res.best_params["alpha"],
        chosen_sigma2=res.best_params["sigma2"],
        emp_risk_mc=McEstimate(rep.terms["empirical"], rep.std_errors["empirical"], cfg.n_mc),
        true_risk_mc=true,
        hyperparams={**rep.hyperparams, "half_alpha_total": half},
        bound_std_error=rep.std_error,
    )
    return point, res, h_star


def run_linreg_experiment(cfg: LinRegConfig, m_values: Sequence[int]) -> list[CurvePoint]:
    if cfg.d < 6:
        raise DimensionError(f"the regression bound needs d >= 6, got d = {cfg.d}")
    out = []
    for m in m_values:
        point, _, _ = _linreg_point(cfg, int(m), derive_rng(cfg.seed, m, DATA),
                                    derive_rng(cfg.seed, m, POSTERIOR_MC),
                                    derive_rng(cfg.seed, m, TRUE_RISK))
        out.append(point)
    return out


def linreg_coverage_builder(cfg: LinRegConfig, offset: float = 0.0):
    """Coverage trial for the optimised regression bound at sample size ``cfg.m``.

    ``offset`` is subtracted from the bound; a large offset gives a negative
    control that the harness must flag.
    """
    def build(rng) -> CoverageTrial:
        seeds = np.random.default_rng(rng).integers(0, 2 ** 63, size=3)
        point, res, _ = _linreg_point(cfg, cfg.m, *(np.random.default_rng(s) for s in seeds))
        return CoverageTrial(point.bound_total - offset, point.bound_std_error, point.true_risk_mc)
    return build


# --------------------------------------------------------------------------
# Logistic (bounded loss) pipeline
# --------------------------------------------------------------------------

def _with_se(report: BoundReport, emp: McEstimate) -> BoundReport:
    report.std_errors["empirical"] = emp.std_error
    return report


def _logistic_point(m: int, res: OptimResult, emp: dict, true: McEstimate) -> CurvePoint:
    rep, params = res.best_report, res.best_params
    alpha = params.get("alpha", params.get("alpha1"))
    e = emp[params["sigma2"]]
    return CurvePoint(m=m, bound_total=rep.total, bound_terms=dict(rep.terms), chosen_alpha=alpha,
                      chosen_sigma2=params["sigma2"], emp_risk_mc=e, true_risk_mc=true,
                      hyperparams=dict(rep.hyperparams), bound_std_error=rep.std_error)


def run_logistic_experiment(cfg: LogRegConfig, m_values: Sequence[int],
                            mode=None) -> tuple[list[CurvePoint], list[CurvePoint]]:
    """Bounded-loss experiments on sigmoid-threshold classification.

    ``ALPHA_COMPARISON`` returns (alpha = 1/2 curve, optimised-alpha curve).
    ``INFORMED_PRIOR`` returns (naive prior curve, informed split-prior curve),
    both with optimised alpha.
    """
    if mode is None:
        mode = LogisticMode.INFORMED_PRIOR if cfg.informed_priors else LogisticMode.ALPHA_COMPARISON
    mode = LogisticMode(mode)
    normalize = cfg.resolved_normalize(mode)
    spec, C = cfg.loss, cfg.loss.C
    prior0 = IsotropicGaussian.centered(cfg.d, cfg.sigma0_sq)
    first, second = [], []
    for m in m_values:
        m = int(m)
        data, h_star = gen_logistic_data(cfg, derive_rng(cfg.seed, m, DATA), m)
        h_hat = fit_logistic(data, cfg.lam)
        mean = normalize_trick(h_hat) if normalize else h_hat
        grid = halving_grid(0.5, num_halvings(m))
        emp = posterior_risk_table(spec, data, mean, grid, cfg.n_mc, derive_rng(cfg.seed, m, POSTERIOR_MC))

        def naive_fn(params):
            q = IsotropicGaussian(mean, params["sigma2"])
            inp = BoundInputs.for_measures(m, params["alpha"], cfg.delta, q, prior0)
            e = emp[params["sigma2"]]
            return _with_se(bounded_case_bound(inp, C, e.value), e)

        def naive_alpha(report):
            k1 = report.hyperparams["kl"] + math.log(1.0 / cfg.delta)
            return {"alpha": optimal_alpha(k1, C, m)}

        naive = two_stage_optimize(naive_fn, grid, naive_alpha)

        def truth(res):
            q = IsotropicGaussian(mean, res.best_params["sigma2"])
            return logistic_true_risk(q, h_star, cfg.n_post, derive_rng(cfg.seed, m, TRUE_RISK))

        if mode is LogisticMode.ALPHA_COMPARISON:
            first.append(_logistic_point(m, naive.stage1, emp, truth(naive.stage1)))
            second.append(_logistic_point(m, naive, emp, truth(naive)))
            continue

        if m % 2:
            raise InvalidInputError(f"informed priors need an even m, got {m}")
        s_low, s_high = data.split(m // 2)
        h1, h2 = fit_logistic(s_high, cfg.lam), fit_logistic(s_low, cfg.lam)
        if normalize:
            h1, h2 = normalize_trick(h1), normalize_trick(h2)
        p1 = IsotropicGaussian(h1, cfg.sigma0_sq)
        p2 = IsotropicGaussian(h2, cfg.sigma0_sq)

        def split_fn(params):
            q = IsotropicGaussian(mean, params["sigma2"])
            in1 = BoundInputs.for_measures(m, params["alpha1"], cfg.delta, q, p1)
            in2 = BoundInputs.for_measures(m, params["alpha2"], cfg.delta, q, p2)
            e = emp[params["sigma2"]]
            return _with_se(split_prior_bound(in1, in2, C, e.value), e)

        def split_alpha(report):
            log_term = math.log(2.0 / cfg.delta)
            hp = report.hyperparams
            return {"alpha1": optimal_alpha(hp["kl1"] + log_term, C, m // 2),
                    "alpha2": optimal_alpha(hp["kl2"] + log_term, C, m // 2)}

        informed = two_stage_optimize(split_fn, grid, split_alpha,
                                      stage1_alpha={"alpha1": 0.5, "alpha2": 0.5})
        first.append(_logistic_point(m, naive, emp, truth(naive)))
        second.append(_logistic_point(m, informed, emp, truth(informed)))
    return first, second


# --------------------------------------------------------------------------
# Coverage
# --------------------------------------------------------------------------

def coverage_trials(bound_builder: Callable[[np.random.Generator], CoverageTrial],
                    trials: int, seed: int) -> list[CoverageTrial]:
    return [bound_builder(derive_rng(seed, i)) for i in range(trials)]


def verify_bound_coverage(bound_builder: Callable[[np.random.Generator], CoverageTrial],
                          trials: int, rng: int) -> float:
    """Fraction of resampled datasets where the estimated ``E_Q[R]`` exceeds
    the bound by more than three combined standard errors."""
    if trials < 50:
        raise InvalidInputError(f"coverage needs at least 50 trials, got {trials}")
    outcomes = coverage_trials(bound_builder, trials, rng)
    return sum(o.violated() for o in outcomes) / trials
