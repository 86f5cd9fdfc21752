"""Heavy-tailed linear bandits: environments, Heavy-OFUL and baseline learners."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ellipsoid as el
from .huber import default_schedule, kappa_for
from .noise import Noise
from .records import RunRecord
from .regression import HuberRegressor
from .rng import RngStream

# ---------------------------------------------------------------------------
# environment


@dataclass
class NoiseModel:
    """Per-round noise ``alpha_t * X`` with a per-round scale law for ``alpha_t``.

    ``scale_law`` is ``{"kind": "constant", "value": a}`` or
    ``{"kind": "log10_uniform", "low": lo, "high": hi}``.
    """

    noise: Noise
    epsilon: float
    scale_law: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})

    def __post_init__(self):
        if self.noise.kind == "student_t" and not 1 + self.epsilon < self.noise.df:
            raise ValueError(
                f"Student-t with df={self.noise.df} has no finite {1 + self.epsilon}-th moment")
        self._unit_moment = self.noise.moment_bound(self.epsilon)

    def draw_scale(self, rng: RngStream) -> float:
        kind = self.scale_law["kind"]
        if kind == "constant":
            return float(self.scale_law.get("value", 1.0))
        if kind == "log10_uniform":
            return float(10.0 ** rng.uniform(self.scale_law["low"], self.scale_law["high"]))
        raise ValueError(f"unknown scale law {kind!r}")

    def max_scale(self) -> float:
        if self.scale_law["kind"] == "constant":
            return float(self.scale_law.get("value", 1.0))
        return float(10.0 ** self.scale_law["high"])

    def central_moment_bound(self, t: int, scale: float) -> float:
        """nu_t = (E|eps_t|^(1+eps))^(1/(1+eps)) for a round with scale ``alpha_t``."""
        return scale * self._unit_moment

    def global_bound(self) -> float:
        return self.max_scale() * self._unit_moment

    def sample(self, rng: RngStream, scale: float) -> float:
        return float(self.noise.sample(rng, scale=scale * self.noise.scale))


def unit_sphere_arms(n_arms: int) -> Callable:
    def gen(t: int, rng: RngStream) -> np.ndarray:
        return rng.unit_vectors(n_arms, gen.dim)
    gen.n_arms = n_arms
    return gen


def standard_basis_arms() -> Callable:
    def gen(t: int, rng: RngStream) -> np.ndarray:
        return np.eye(gen.dim)
    return gen


def fixed_arms(arms) -> Callable:
    arms = np.asarray(arms, dtype=float)

    def gen(t: int, rng: RngStream) -> np.ndarray:
        return arms
    return gen


DECISION_SETS = {
    "unit_sphere": lambda spec: unit_sphere_arms(int(spec.get("n_arms", 20))),
    "standard_basis": lambda spec: standard_basis_arms(),
    "fixed": lambda spec: fixed_arms(spec["arms"]),
}


@dataclass
class BanditInstance:
    dim: int
    theta_star: np.ndarray
    decision_set_gen: Callable
    noise: NoiseModel
    B: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if self.theta_star.shape != (self.dim,):
            raise ValueError("theta_star has the wrong dimension")
        if np.linalg.norm(self.theta_star) > self.B + 1e-12:
            raise ValueError(f"|theta_star| exceeds B={self.B}")
        self.decision_set_gen.dim = self.dim

    def arms(self, t: int, rng: RngStream) -> np.ndarray:
        arms = np.atleast_2d(np.asarray(self.decision_set_gen(t, rng), dtype=float))
        if arms.shape[0] == 0:
            raise ValueError("empty decision set")
        if np.any(np.linalg.norm(arms, axis=1) > self.L + 1e-12):
            raise ValueError(f"decision set contains an arm with norm above L={self.L}")
        return arms


def heavy_tail_instance(dim: int = 10, epsilon: float = 0.99, n_arms: int = 20,
                        df: float = 2.0, log10_scale=(0.0, 2.0)) -> BanditInstance:
    """d=10, theta* = 1/sqrt(d), Student-t(2) noise times alpha with log10 alpha ~ U(0, 2)."""
    noise = NoiseModel(Noise("student_t", 1.0, df), epsilon,
                       {"kind": "log10_uniform", "low": log10_scale[0], "high": log10_scale[1]})
    return BanditInstance(dim, np.ones(dim) / math.sqrt(dim), unit_sphere_arms(n_arms), noise)


# ---------------------------------------------------------------------------
# learners


class BanditLearner:
    name = "learner"

    def choose(self, arms: np.ndarray) -> int:
        raise NotImplementedError

    def update(self, phi: np.ndarray, reward: float, nu_t: float) -> None:
        raise NotImplementedError

    def diagnostics(self) -> dict:
        return {}


def _argmax_first(values: np.ndarray) -> int:
    # np.argmax returns the lowest index among ties
    return int(np.argmax(values))


class HeavyOFUL(BanditLearner):
    """Optimism over the adaptive-Huber confidence ellipsoid.

    Defaults follow the regret bound: lambda = d / B^2, sigma_min = 1/sqrt(T),
    b = 1. With ``hide_nu`` the revealed moment is replaced by ``nu_bar``.
    """

    name = "heavy_oful"

    def __init__(self, dim: int, horizon_T: int, delta: float, epsilon: float, B: float = 1.0,
                 L: float = 1.0, lam: float | None = None, sigma_min: float | None = None,
                 bonus_scale: float = 1.0, hide_nu: bool = False, nu_bar: float | None = None,
                 strict: bool = False):
        self.dim = dim
        self.lam = dim / B ** 2 if lam is None else lam
        sigma_min = 1.0 / math.sqrt(horizon_T) if sigma_min is None else sigma_min
        kappa = kappa_for(dim, horizon_T, L, self.lam, sigma_min)
        self.schedule = default_schedule(epsilon, horizon_T, delta, 1.0, kappa, B, L, sigma_min)
        self.reg = HuberRegressor(self.schedule, self.lam, dim, strict=strict)
        self.bonus_scale = bonus_scale
        self.hide_nu = hide_nu
        if hide_nu and nu_bar is None:
            raise ValueError("hide_nu needs a global moment bound nu_bar")
        self.nu_bar = nu_bar
        self.beta = self.reg.confidence_radius()
        self._last = {}

    def ucb_values(self, arms: np.ndarray) -> np.ndarray:
        widths = el.mahalanobis_inv_rows(self.reg.precision, arms)
        return arms @ self.reg.theta + self.bonus_scale * self.beta * widths

    def choose(self, arms: np.ndarray) -> int:
        if len(arms) == 0:
            raise ValueError("empty decision set")
        ucb = self.ucb_values(arms)
        idx = _argmax_first(ucb)
        self._last = {"ucb": float(ucb[idx]), "beta": self.beta}
        return idx

    def update(self, phi, reward, nu_t):
        nu_hat = self.nu_bar if self.hide_nu else nu_t
        sigma, tau, w = self.reg.observe(phi, nu_hat)
        self.reg.record_weighted(phi, reward, sigma, tau)
        self.beta = self.reg.confidence_radius()
        self._last.update(sigma=sigma, tau=tau, w=w)

    def confidence_set(self):
        return self.reg.confidence_set(self.bonus_scale)

    def diagnostics(self) -> dict:
        return dict(self._last)


class OFUL(BanditLearner):
    """Ridge regression with the standard self-normalized radius.

    ``R`` plays the sub-Gaussian scale; for heavy-tailed runs the global moment
    bound is passed in its place. ``clip_level(t)`` (optional) truncates
    rewards before they enter the regression.
    """

    name = "oful"

    def __init__(self, dim: int, delta: float, B: float = 1.0, L: float = 1.0, lam: float = 1.0,
                 R: float = 1.0, bonus_scale: float = 1.0):
        self.dim = dim
        self.delta = delta
        self.B, self.L, self.lam, self.R = B, L, lam, R
        self.bonus_scale = bonus_scale
        self.precision = el.new_precision(dim, lam)
        self.moment = np.zeros(dim)
        self.theta = np.zeros(dim)
        self.t = 0
        self._last = {}

    def radius(self) -> float:
        d, t = self.dim, self.t
        inner = 2.0 * math.log(1.0 / self.delta) + d * math.log1p(t * self.L ** 2 / (self.lam * d))
        return self.R * math.sqrt(inner) + math.sqrt(self.lam) * self.B

    def predict(self, arms: np.ndarray) -> np.ndarray:
        return arms @ self.theta

    def choose(self, arms):
        if len(arms) == 0:
            raise ValueError("empty decision set")
        beta = self.radius()
        ucb = self.predict(arms) + self.bonus_scale * beta * el.mahalanobis_inv_rows(
            self.precision, arms)
        idx = _argmax_first(ucb)
        self._last = {"ucb": float(ucb[idx]), "beta": beta}
        return idx

    def transform_reward(self, reward: float) -> float:
        return reward

    def update(self, phi, reward, nu_t):
        phi = np.asarray(phi, dtype=float)
        self.t += 1
        y = self.transform_reward(reward)
        el.rank_one_update(self.precision, phi, 1.0)
        self.moment += phi * y
        self.theta = self.precision.gram_inv @ self.moment

    def diagnostics(self):
        return dict(self._last)


class TruncatedOFUL(OFUL):
    """Simplified truncation baseline (stand-in for TOFU, not its exact internals).

    Rewards are clipped to +-u_t with u_t = (t / log(2T^2/delta))^(1/(1+eps)) * nu_bar.
    """

    name = "truncation"
    label = "truncation (simplified TOFU stand-in)"

    def __init__(self, dim, horizon_T, delta, epsilon, nu_bar, threshold_scale: float = 1.0,
                 **kw):
        super().__init__(dim, delta, R=nu_bar, **kw)
        self.horizon_T = horizon_T
        self.epsilon = epsilon
        self.nu_bar = nu_bar
        self.threshold_scale = threshold_scale

    def clip_level(self, t: int) -> float:
        if math.isinf(self.threshold_scale):
            return math.inf
        log_conf = math.log(2.0 * self.horizon_T ** 2 / self.delta)
        return self.threshold_scale * (t / log_conf) ** (1 / (1 + self.epsilon)) * self.nu_bar

    def transform_reward(self, reward):
        u = self.clip_level(self.t)
        return float(np.clip(reward, -u, u))


class MedianOfMeansOFUL(OFUL):
    """Simplified median-of-means baseline (stand-in for MENU, not its exact internals).

    Round t feeds fold ``t mod k``; each fold keeps its own ridge estimate and
    the predicted value of an arm is the median over folds. The bonus uses the
    pooled Gram matrix and the OFUL radius.
    """

    name = "median_of_means"
    label = "median-of-means (simplified MENU stand-in)"

    def __init__(self, dim, horizon_T, delta, nu_bar, n_folds: int | None = None, **kw):
        super().__init__(dim, delta, R=nu_bar, **kw)
        if n_folds is None:
            n_folds = math.ceil(8 * math.log(2.0 * horizon_T ** 2 / delta))
        self.n_folds = max(1, min(int(n_folds), horizon_T))
        self.fold_inv = np.repeat(np.eye(dim)[None] / self.lam, self.n_folds, axis=0)
        self.fold_moment = np.zeros((self.n_folds, dim))
        self.fold_theta = np.zeros((self.n_folds, dim))

    def predict(self, arms):
        if self.n_folds == 1:
            return arms @ self.theta
        return np.median(self.fold_theta @ arms.T, axis=0)

    def update(self, phi, reward, nu_t):
        phi = np.asarray(phi, dtype=float)
        j = self.t % self.n_folds
        super().update(phi, reward, nu_t)
        inv = self.fold_inv[j]
        hx = inv @ phi
        inv -= np.outer(hx, hx) / (1.0 + phi @ hx)
        self.fold_moment[j] += phi * reward
        self.fold_theta[j] = inv @ self.fold_moment[j]


def make_learner(name: str, instance: BanditInstance, horizon_T: int, params: dict) -> BanditLearner:
    params = dict(params)
    delta = params.pop("delta", 0.1)
    eps = instance.noise.epsilon
    d, B, L = instance.dim, instance.B, instance.L
    nu_bar = instance.noise.global_bound()
    if name == "heavy_oful":
        if params.get("hide_nu") and "nu_bar" not in params:
            params["nu_bar"] = nu_bar
        return HeavyOFUL(d, horizon_T, delta, eps, B=B, L=L, **params)
    if name == "oful":
        return OFUL(d, delta, B=B, L=L, R=params.pop("R", nu_bar), **params)
    if name == "truncation":
        return TruncatedOFUL(d, horizon_T, delta, eps, nu_bar, B=B, L=L, **params)
    if name == "median_of_means":
        return MedianOfMeansOFUL(d, horizon_T, delta, nu_bar, B=B, L=L, **params)
    raise ValueError(f"unknown bandit algorithm {name!r}")


# ---------------------------------------------------------------------------
# runner


def run_bandit(instance: BanditInstance, learner: BanditLearner, horizon_T: int, seed: int,
               run_id: str = "", fingerprint: str = "", run_index: int = 0,
               keep_diagnostics: bool = True) -> RunRecord:
    """Pseudo-regret against the per-round best arm."""
    if horizon_T < 1:
        raise ValueError("horizon must be at least 1")
    rng = RngStream(seed, run_index)
    env_rng = rng.child(0)
    noise_rng = rng.child(1)
    rec = RunRecord(run_id or f"{learner.name}-s{seed}", fingerprint, seed)
    theta_star = instance.theta_star
    try:
        for t in range(1, horizon_T + 1):
            arms = instance.arms(t, env_rng)
            scale = instance.noise.draw_scale(env_rng)
            nu_t = instance.noise.central_moment_bound(t, scale)
            idx = learner.choose(arms)
            means = arms @ theta_star
            best = float(means.max())
            reward = float(means[idx]) + instance.noise.sample(noise_rng, scale)
            learner.update(arms[idx], reward, nu_t)
            diag = None
            if keep_diagnostics:
                diag = {"arm": idx, **{k: _round(v) for k, v in learner.diagnostics().items()}}
                diag["best"] = _round(best)
            rec.append(t, best - float(means[idx]), diag)
    except Exception as exc:  # partial record, flagged
        rec.status = "failed"
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _round(x: float) -> float:
    return float(f"{x:.12g}")
