"""Property suites run by ``pacbound verify``.

Each suite returns a :class:`SuiteResult` holding the pass flag and the
measured quantities that decided it.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .bounds import (
    GaussianPriorConfig,
    SofteningFn,
    alpha_objective,
    log_xi_closed_form_bound,
    optimal_alpha,
)
from .core import Dataset, LossSpec, envelope, losses, self_bounding_witness
from .experiments import (
    LinRegConfig,
    crossed_mean,
    derive_rng,
    fit_linreg,
    gen_linreg_data,
    linreg_coverage_builder,
    linreg_sampler,
    verify_bound_coverage,
)
from .gaussian import IsotropicGaussian, kl_isotropic, log_mean_exp, sample


@dataclass
class SuiteResult:
    name: str
    passed: bool
    measures: dict = field(default_factory=dict)
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "measures": self.measures,
                "seconds": self.seconds}


def _timed(name, fn, *args, **kw) -> SuiteResult:
    t0 = time.perf_counter()
    passed, measures = fn(*args, **kw)
    return SuiteResult(name, bool(passed), measures, time.perf_counter() - t0)


# ---------------------------------------------------------------- kl

def kl_by_quadrature(q: IsotropicGaussian, p: IsotropicGaussian) -> float:
    """Coordinate-wise numerical integration of ``q log(q/p)``."""
    total = 0.0
    for mq, mp in zip(q.mean, p.mean):
        sq, sp = q.std, p.std

        def integrand(x):
            zq, zp = (x - mq) / sq, (x - mp) / sp
            log_ratio = math.log(sp / sq) - 0.5 * zq * zq + 0.5 * zp * zp
            return math.exp(-0.5 * zq * zq) / (sq * math.sqrt(2 * math.pi)) * log_ratio

        val, _ = integrate.quad(integrand, mq - 12 * sq, mq + 12 * sq, epsabs=1e-12, epsrel=1e-10, limit=200)
        total += val
    return total


def random_gaussian_pair(rng, d_max: int = 4):
    d = int(rng.integers(1, d_max + 1))
    q = IsotropicGaussian(rng.normal(0, 1, d), float(rng.uniform(0.2, 3.0)))
    p = IsotropicGaussian(rng.normal(0, 1, d), float(rng.uniform(0.2, 3.0)))
    return q, p


def _kl(seed, cases=20, tol=1e-6):
    rng = derive_rng(seed, 101)
    worst = 0.0
    for _ in range(cases):
        q, p = random_gaussian_pair(rng)
        worst = max(worst, abs(kl_isotropic(q, p) - kl_by_quadrature(q, p)))
    return worst <= tol, {"cases": cases, "max_abs_error": worst, "tolerance": tol}


# ---------------------------------------------------------------- self-bounding

def random_linear_instance(rng, d=None, m=None, B=None, C=None):
    """Random predictor plus a dataset respecting ``||x|| <= B`` and ``|y| <= C``."""
    d = d or int(rng.integers(1, 6))
    m = m or int(rng.integers(1, 30))
    B = float(rng.uniform(0.5, 5.0)) if B is None else B
    C = float(rng.uniform(0.0, 5.0)) if C is None else C
    X = rng.normal(size=(m, d))
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    X = X / np.maximum(norms, 1e-300) * B * rng.uniform(0, 1, (m, 1))
    y = rng.uniform(-C, C, m)
    h = rng.normal(0, 2, d)
    return LossSpec.absolute_linear(B, C), h, Dataset(X, y)


def _self_bounding(seed, cases=1000):
    rng = derive_rng(seed, 102)
    betas = (0.0, 1 / 3, 0.5, 1.0)
    failures = []
    for i in range(cases):
        spec, h, data = random_linear_instance(rng)
        if envelope(spec, h) == 0:
            continue
        w = self_bounding_witness(spec, h, data, betas[i % len(betas)])
        if not w.holds:
            failures.append({"case": i, "violations": w.violations()})
    return not failures, {"cases": cases, "failures": failures[:5]}


# ---------------------------------------------------------------- softening

def softening_axioms(psi: SofteningFn, grid) -> dict:
    grid = np.asarray(grid, dtype=float)
    vals = psi(grid)
    low = grid <= 1.0
    return {
        "identity_on_unit": bool(np.all(vals[low] == grid[low])),
        "nondecreasing": bool(np.all(np.diff(vals) >= 0)),
        "below_identity": bool(np.all(vals[~low] <= grid[~low])),
    }


def _softening(seed, points=1000):
    grid = np.linspace(0.0, 50.0, points)
    out = {psi.value: softening_axioms(psi, grid) for psi in SofteningFn}
    return all(all(v.values()) for v in out.values()), out


# ---------------------------------------------------------------- exponential moment

def finite_population(rng, n_atoms=40):
    spec, h, pop = random_linear_instance(rng, m=n_atoms)
    return spec, h, pop


def exp_moment_check(spec, h, pop: Dataset, m: int, alpha: float, resamples: int, rng):
    """Log of the MC moment, its log standard error and the log bound."""
    atom_losses = losses(spec, h, pop.X, pop.y)
    risk = atom_losses.mean()          # exact, the data law is uniform on the atoms
    idx = rng.integers(0, pop.m, size=(resamples, m))
    gaps = risk - atom_losses[idx].mean(axis=1)
    log_mean, log_se = log_mean_exp(float(m) ** alpha * gaps)
    K = envelope(spec, h)
    log_bound = K ** 2 / (2.0 * float(m) ** (1.0 - 2.0 * alpha))
    return log_mean, log_se, log_bound


def dominated(log_bound, log_mean, log_se, n_se=4.0) -> bool:
    """``exp(log_bound) >= exp(log_mean) - n_se * exp(log_se)`` without overflow."""
    if not np.isfinite(log_se):
        return log_bound >= log_mean
    rel = n_se * math.exp(min(log_se - log_mean, 700.0))
    if rel >= 1.0:
        return True
    return log_bound >= log_mean + math.log1p(-rel)


def _exp_moment(seed, instances=20, resamples=10_000):
    rng = derive_rng(seed, 103)
    rows = []
    for i in range(instances):
        spec, h, pop = finite_population(rng)
        m = int(rng.integers(2, 51))
        for alpha in (0.25, 0.5):
            lm, ls, lb = exp_moment_check(spec, h, pop, m, alpha, resamples, rng)
            # bound + 4 se >= estimate, in log space
            ok = lm <= np.logaddexp(lb, math.log(4.0) + ls)
            rows.append({"instance": i, "m": m, "alpha": alpha, "log_mc": lm, "log_bound": lb, "ok": bool(ok)})
    return all(r["ok"] for r in rows), {"checks": len(rows), "failures": [r for r in rows if not r["ok"]][:5]}


# ---------------------------------------------------------------- xi

def xi_mc_log(cfg: GaussianPriorConfig, C: float, N: int, draws: int, rng):
    prior = IsotropicGaussian.centered(N, cfg.sigma2)
    H = sample(prior, draws, rng)
    K = cfg.B * np.linalg.norm(H, axis=1) + C
    return log_mean_exp(K ** 2 / (2.0 * cfg.scale))


def _xi(seed, draws=100_000, m=100, c=10.0, e=10.0):
    rng = derive_rng(seed, 104)
    rows = []
    for t in (0.25, 0.5, 0.75):
        for N in (6, 10, 50):
            for C in (0.0, 1.0, math.sqrt(c * N * e)):
                for alpha in (0.25, 0.5):
                    cfg = GaussianPriorConfig(t, alpha, e * math.sqrt(N), m)
                    lm, ls = xi_mc_log(cfg, C, N, draws, rng)
                    lb = log_xi_closed_form_bound(cfg, C, N)
                    rows.append({"t": t, "N": N, "C": C, "alpha": alpha, "log_mc": lm,
                                 "log_bound": lb, "ok": dominated(lb, lm, ls)})
    return all(r["ok"] for r in rows), {"checks": len(rows), "failures": [r for r in rows if not r["ok"]][:5]}


# ---------------------------------------------------------------- closed-form alpha

def _alpha_optimum(seed, cases=100, grid_points=10_000):
    rng = derive_rng(seed, 105)
    alphas = np.linspace(0.0, 1.0, grid_points)
    worst = -math.inf
    for _ in range(cases):
        K1 = float(rng.uniform(0.1, 50.0))
        C = float(rng.uniform(0.1, 5.0))
        m = int(rng.integers(2, 100_000))
        a0 = optimal_alpha(K1, C, m)
        excess = alpha_objective(a0, K1, C, m) - float(np.min(alpha_objective(alphas, K1, C, m)))
        worst = max(worst, excess / alpha_objective(a0, K1, C, m))
    return worst <= 1e-12, {"cases": cases, "max_relative_excess": worst}


# ---------------------------------------------------------------- truncation gap

def truncation_check(cfg: LinRegConfig, psi: SofteningFn, s_quantile: float, sigma2: float, rng,
                     n_post=200, n_data=5000):
    """Both sides of ``E_Q[R] <= E_Q[R_psi,s] + E_Q[K 1{K >= s}]`` and the standard error
    of their difference.

    Risks are population risks, estimated on fresh data crossed with posterior
    draws; the threshold ``s`` is the ``s_quantile`` quantile of ``K`` under the
    posterior, so the indicator fires on part of the draws only. Returns
    ``(lhs, rhs, se, s)``.
    """
    rng = np.random.default_rng(rng)
    data, h_star = gen_linreg_data(cfg, rng)
    q = IsotropicGaussian(fit_linreg(data), sigma2)
    spec = cfg.loss
    H = sample(q, n_post, rng)
    K = envelope(spec, H)
    s = float(np.quantile(K, s_quantile))
    fresh = linreg_sampler(cfg, h_star)(n_data, rng)
    L = losses(spec, H, fresh.X, fresh.y)
    soft = s * psi(L / s) + (K * (K >= s))[:, None]
    lhs, rhs = crossed_mean(L), crossed_mean(soft)
    return lhs.value, rhs.value, crossed_mean(L - soft).std_error, s


def _truncation(seed, instances=20):
    rng = derive_rng(seed, 106)
    rows = []
    for i in range(instances):
        cfg = LinRegConfig(d=int(rng.integers(6, 11)), m=int(rng.integers(30, 100)))
        psi = (SofteningFn.CLIP, SofteningFn.SQRT_TAIL)[i % 2]
        lhs, rhs, se, s = truncation_check(cfg, psi, float(rng.uniform(0.1, 0.9)),
                                           float(rng.uniform(0.01, 0.5)), rng)
        rows.append({"instance": i, "s": s, "lhs": lhs, "rhs": rhs, "se": se, "ok": lhs <= rhs + 4 * se})
    return all(r["ok"] for r in rows), {"checks": len(rows), "failures": [r for r in rows if not r["ok"]][:5]}


# ---------------------------------------------------------------- coverage

def _coverage(seed, trials=50, delta=0.05, d=6, m=50, n_mc=2000):
    cfg = LinRegConfig(d=d, m=m, delta=delta, seed=seed, n_mc=n_mc)
    frac = verify_bound_coverage(linreg_coverage_builder(cfg), trials, seed)
    limit = delta + 0.04
    return frac <= limit, {"trials": trials, "delta": delta, "violation_fraction": frac, "limit": limit}


SUITES = {
    "kl": _kl,
    "self-bounding": _self_bounding,
    "softening": _softening,
    "exp-moment": _exp_moment,
    "xi": _xi,
    "alpha-optimum": _alpha_optimum,
    "truncation": _truncation,
    "coverage": _coverage,
}


def run_suite(name: str, seed: int, **kw) -> SuiteResult:
    return _timed(name, SUITES[name], seed, **kw)
