"""Huber loss and the weight/threshold schedules of adaptive Huber regression.

All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

# floor substituted for a zero leverage w_t before dividing by it
W_FLOOR = 1e-12


def _check_tau(tau) -> None:
    if np.any(np.asarray(tau) <= 0):
        raise ValueError(f"tau must be positive, got {tau!r}")


def huber_loss(x, tau):
    """x**2/2 inside [-tau, tau], tau*|x| - tau**2/2 outside. Works elementwise."""
    _check_tau(tau)
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.where(ax <= tau, 0.5 * x * x, tau * ax - 0.5 * np.square(tau))
    return float(out) if out.ndim == 0 else out


def huber_grad(x, tau):
    """Derivative of the Huber loss, i.e. ``clip(x, -tau, tau)``."""
    _check_tau(tau)
    out = np.clip(x, -np.asarray(tau), np.asarray(tau))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class HuberScheduleConfig:
    """Constants of one adaptive Huber regression.

    ``horizon_T`` is the number of rounds (episodes for the MDP learner);
    ``b`` bounds the ratio between the true and the supplied central moment.
    """

    epsilon: float
    horizon_T: int
    delta: float
    b: float
    kappa: float
    c0: float
    c1: float
    tau0: float
    B: float
    L: float
    sigma_min: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.horizon_T) != self.horizon_T or self.horizon_T < 1:
            raise ValueError(f"horizon_T must be a positive integer, got {self.horizon_T}")
        for name in ("b", "kappa", "c0", "c1", "tau0", "B", "L", "sigma_min"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if self.c0 > 1:
            raise ValueError(f"c0 must not exceed 1 (got {self.c0}); otherwise w_t may exceed 1")

    @property
    def t_exponent(self) -> float:
        return (1 - self.epsilon) / (2 * (1 + self.epsilon))

    def to_dict(self) -> dict:
        return asdict(self)


def kappa_for(dim: int, horizon_T: int, L: float, lam: float, sigma_min: float) -> float:
    """d log(1 + T L^2 / (d lambda sigma_min^2))."""
    return dim * math.log1p(horizon_T * L * L / (dim * lam * sigma_min * sigma_min))


def schedule_constants(epsilon: float, horizon_T: int, delta: float, b: float,
                       kappa: float, log_conf: float | None = None):
    """Closed-form (c0, c1, tau0).

    ``log_conf`` defaults to log(2 T^2 / delta); the MDP learner passes
    log(2 H K^2 / delta) instead.
    """
    if log_conf is None:
        log_conf = math.log(2.0 * horizon_T * horizon_T / delta)
    log3t = math.log(3.0 * horizon_T)
    c0 = 1.0 / math.sqrt(23.0 * log_conf)
    c1 = log3t ** ((1 - epsilon) / (1 + epsilon)) / (48.0 * log_conf ** (2.0 / (1 + epsilon)))
    tau0 = (math.sqrt(2.0 * kappa) * b * log3t ** ((1 - epsilon) / (2 * (1 + epsilon)))
            / log_conf ** (1.0 / (1 + epsilon)))
    return c0, c1, tau0


def default_schedule(epsilon: float, horizon_T: int, delta: float, b: float, kappa: float,
                     B: float, L: float, sigma_min: float) -> HuberScheduleConfig:
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    if int(horizon_T) != horizon_T or horizon_T < 1:
        raise ValueError(f"horizon_T must be a positive integer, got {horizon_T}")
    c0, c1, tau0 = schedule_constants(epsilon, horizon_T, delta, b, kappa)
    return HuberScheduleConfig(epsilon, int(horizon_T), delta, b, kappa, c0, c1, tau0,
                               B, L, sigma_min)


def weight_sigma(cfg: HuberScheduleConfig, nu_hat: float, phi_norm: float) -> float:
    """max{nu_hat, sigma_min, |phi|/c0, sqrt(LB) |phi|^(1/2) / (c1 * 2 kappa b^2)^(1/4)}.

    ``phi_norm`` is the inverse-Gram norm of the feature before the update.
    """
    leverage_term = phi_norm / cfg.c0
    root_term = (math.sqrt(cfg.L * cfg.B) * math.sqrt(phi_norm)
                 / (cfg.c1 * 2.0 * cfg.kappa * cfg.b * cfg.b) ** 0.25)
    return max(nu_hat, cfg.sigma_min, leverage_term, root_term)


def robustness_tau(cfg: HuberScheduleConfig, t: int, w_t: float) -> float:
    """tau0 * sqrt(1 + w^2) / w * t^((1-eps) / (2(1+eps)))."""
    return threshold(cfg.tau0, cfg.epsilon, t, w_t)


def threshold(tau0: float, epsilon: float, t: int, w_t: float) -> float:
    if t < 1:
        raise ValueError(f"round index must be >= 1, got {t}")
    w = max(w_t, W_FLOOR)
    return tau0 * math.sqrt(1.0 + w * w) / w * t ** ((1 - epsilon) / (2 * (1 + epsilon)))
