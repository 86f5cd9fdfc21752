"""Empirical suites for the regression guarantees and the CLI self-test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ellipsoid as el
from .huber import default_schedule, huber_grad, huber_loss, kappa_for
from .noise import Noise
from .regression import HuberRegressor, RidgeRegressor
from .rng import RngStream


@dataclass
class RegressionTrialConfig:
    dim: int = 4
    horizon_T: int = 2000
    epsilon: float = 0.5
    delta: float = 0.1
    df: float = 1.8
    noise_scale: float = 1.0
    B: float = 1.0
    L: float = 1.0


def _regressor(cfg: RegressionTrialConfig) -> HuberRegressor:
    lam = cfg.dim / cfg.B ** 2
    sigma_min = 1.0 / math.sqrt(cfg.horizon_T)
    kappa = kappa_for(cfg.dim, cfg.horizon_T, cfg.L, lam, sigma_min)
    sched = default_schedule(cfg.epsilon, cfg.horizon_T, cfg.delta, 1.0, kappa, cfg.B, cfg.L,
                             sigma_min)
    return HuberRegressor(sched, lam, cfg.dim)


def concentration_trial(seed: int, cfg: RegressionTrialConfig = RegressionTrialConfig(),
                        run_index: int = 0, keep_norms: bool = False):
    """One online run; returns (event holds for every t, worst ratio, regressor, norms).

    ``norms[s]`` is the inverse-Gram norm of phi_s after the s-th update.
    """
    rng = RngStream(seed, run_index)
    noise = Noise("student_t", cfg.noise_scale, cfg.df)
    nu = noise.moment_bound(cfg.epsilon)
    theta_star = rng.unit_vectors(1, cfg.dim)[0] * cfg.B * rng.uniform()
    reg = _regressor(cfg)
    worst = 0.0
    norms = []
    for t in range(1, cfg.horizon_T + 1):
        phi = rng.unit_vectors(1, cfg.dim)[0] * cfg.L
        y = float(phi @ theta_star) + float(noise.sample(rng))
        reg.record(phi, y, nu)
        if keep_norms:
            norms.append(el.mahalanobis_inv(reg.precision, phi))
        ratio = el.mahalanobis(reg.precision, reg.theta - theta_star) / reg.confidence_radius()
        worst = max(worst, ratio)
    return worst <= 1.0, worst, reg, np.asarray(norms)


def concentration_suite(n_runs: int = 50, seed: int = 0,
                        cfg: RegressionTrialConfig = RegressionTrialConfig()) -> dict:
    held = []
    worst = []
    for i in range(n_runs):
        ok, w, _, _ = concentration_trial(seed, cfg, run_index=i)
        held.append(ok)
        worst.append(w)
    return {"runs": n_runs, "frequency": float(np.mean(held)), "worst_ratio": float(max(worst))}


def perturbation_trial(seed: int, run_index: int = 0, cfg: RegressionTrialConfig | None = None):
    """Perturb the targets within |y_hat - y| <= beta_s |phi_s|_{H_s^-1}; compare to 6 kappa max beta.

    Returns None when the underlying concentration event failed (hypothesis not met).
    """
    cfg = cfg or RegressionTrialConfig(dim=3, horizon_T=300)
    ok, _, reg, norms = concentration_trial(seed, cfg, run_index=run_index, keep_norms=True)
    if not ok:
        return None
    rng = RngStream(seed, run_index, 99)
    beta_hat = rng.uniform(0.0, 2.0) * rng.uniform(0.0, 1.0, size=reg.t)
    mode = run_index % 3
    if mode == 0:
        signs = rng.uniform(-1.0, 1.0, size=reg.t)
    elif mode == 1:
        signs = np.ones(reg.t)
    else:
        signs = np.where(rng.uniform(size=reg.t) < 0.5, -1.0, 1.0)
    y_hat = reg.buffer.y + signs * beta_hat * norms
    theta_hat = reg.solve_perturbed(y_hat)
    lhs = el.mahalanobis(reg.precision, theta_hat - reg.theta)
    rhs = 6.0 * reg.schedule.kappa * float(beta_hat.max())
    return lhs <= rhs, lhs, rhs


def perturbation_suite(n_trials: int = 50, seed: int = 0) -> dict:
    results = []
    i = 0
    while len(results) < n_trials and i < 4 * n_trials:
        out = perturbation_trial(seed, run_index=i)
        if out is not None:
            results.append(out)
        i += 1
    holds = [r[0] for r in results]
    return {"trials": len(results), "frequency": float(np.mean(holds)) if holds else 0.0,
            "max_ratio": float(max(r[1] / r[2] for r in results)) if results else math.nan}


# ---------------------------------------------------------------------------
# self-test: small example checks with closed-form answers


def _check(name, fn):
    try:
        ok, detail = fn()
    except Exception as exc:  # reported, not raised
        return name, False, f"{type(exc).__name__}: {exc}"
    return name, bool(ok), detail


def _huber_examples():
    vals = (huber_loss(0.5, 1.0), huber_loss(3.0, 1.0), huber_grad(-4.0, 2.0))
    return vals == (0.125, 2.5, -2.0), str(vals)


def _precision_example():
    st = el.new_precision(2, 1.0)
    el.rank_one_update(st, np.array([1.0, 0.0]), 1.0)
    ok = np.allclose(st.gram_inv, np.diag([0.5, 1.0])) and abs(st.log_det - math.log(2)) < 1e-12
    return ok, f"log_det={st.log_det:.12g}"


def _ridge_example():
    reg = RidgeRegressor(2, 1.0)
    reg.update(np.array([1.0, 0.0]), 2.0, 1.0)
    return np.allclose(reg.w, [1.0, 0.0]), str(reg.w)


def _noiseless_huber():
    """Noiseless stream stays in the quadratic regime, so theta_t is the weighted ridge solution."""
    cfg = RegressionTrialConfig(dim=3, horizon_T=200, epsilon=1.0)
    rng = RngStream(5)
    theta_star = np.array([0.3, -0.2, 0.5])
    reg = _regressor(cfg)
    for _ in range(200):
        phi = rng.unit_vectors(1, 3)[0]
        reg.record(phi, float(phi @ theta_star), 0.0)
    buf = reg.buffer
    wts = 1.0 / buf.sigma ** 2
    gram = reg.lam * np.eye(3) + (buf.phi * wts[:, None]).T @ buf.phi
    ridge = np.linalg.solve(gram, buf.phi.T @ (wts * buf.y))
    err = float(np.abs(reg.theta - ridge).max())
    return err <= 1e-10, f"max deviation from ridge closed form {err:.2e}"


def _dp_example():
    from .linear_mdp import brute_force_optimum, exact_dp_oracle, make_tabular_linear_mdp
    spec = make_tabular_linear_mdp(3, 2, 3, {"kind": "uniform"},
                                   {"kind": "gaussian", "scale": 0.1}, seed=3)
    V, _ = exact_dp_oracle(spec)
    bf = brute_force_optimum(spec)
    return np.allclose(V[0], bf, atol=1e-12), f"V*={np.round(V[0], 6).tolist()}"


def _bandit_choose_example():
    from .bandit import HeavyOFUL
    learner = HeavyOFUL(2, 100, 0.1, 1.0, lam=1.0)
    learner.reg.theta = np.array([1.0, 0.0])
    learner.beta = 0.5
    idx = learner.choose(np.eye(2))
    return idx == 0, f"chose {idx}"


def _rng_example():
    a = RngStream(11, 3).uniform(size=1000)
    b = RngStream(11, 3).uniform(size=1000)
    return np.array_equal(a, b), "identical draws"


SELFTEST_CHECKS = [
    ("huber loss and gradient values", _huber_examples),
    ("precision rank-one update", _precision_example),
    ("ridge single sample", _ridge_example),
    ("noiseless adaptive Huber equals ridge", _noiseless_huber),
    ("DP oracle vs policy enumeration", _dp_example),
    ("optimistic arm choice", _bandit_choose_example),
    ("rng reproducibility", _rng_example),
]


def selftest() -> list:
    return [_check(name, fn) for name, fn in SELFTEST_CHECKS]
