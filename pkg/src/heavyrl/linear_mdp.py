"""Heavy-LSVI-UCB on finite linear MDPs, plus tabular instances and exact oracles.

Shapes: ``phi`` is (S, A, d); ``mu`` is (H, S, d) so that
P_h(s' | s, a) = <phi(s, a), mu[h, s']>; ``theta_star``/``psi_star`` are (H, d).
Steps are 0-indexed in code.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import ellipsoid as el
from .huber import HuberScheduleConfig, W_FLOOR, schedule_constants, threshold
from .noise import Noise
from .records import RunRecord
from .regression import HuberRegressor
from .rng import RngStream

PROB_TOL = 1e-10


# ---------------------------------------------------------------------------
# instances


@dataclass
class LinearMDPSpec:
    d: int
    H: int
    phi: np.ndarray
    mu: np.ndarray
    theta_star: np.ndarray
    psi_star: np.ndarray
    noise: list  # noise[h][s][a] -> Noise
    value_cap: float = 1.0
    B: float = 1.0
    W: float = 1.0
    epsilon: float = 1.0
    epsilon_prime: float = 1.0
    nu_R_eps: float = 0.0
    initial_state: int = 0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        self.psi_star = np.asarray(self.psi_star, dtype=float)
        S, A, d = self.phi.shape
        if d != self.d:
            raise ValueError("phi has the wrong feature dimension")
        if self.mu.shape != (self.H, S, d):
            raise ValueError(f"mu must have shape {(self.H, S, d)}, got {self.mu.shape}")
        if np.any(np.linalg.norm(self.phi, axis=2) > 1 + 1e-12):
            raise ValueError("feature norms must not exceed 1")
        P = self.transitions
        if np.any(P < -PROB_TOL) or np.any(P > 1 + PROB_TOL):
            raise ValueError("transition probabilities leave [0, 1]")
        if np.any(np.abs(P.sum(axis=3) - 1) > PROB_TOL):
            raise ValueError("transition rows do not sum to 1")
        if np.any(np.linalg.norm(self.theta_star, axis=1) > self.B + 1e-12):
            raise ValueError("|theta_star_h| exceeds B")
        if np.any(np.linalg.norm(self.psi_star, axis=1) > self.W + 1e-12):
            raise ValueError("|psi_star_h| exceeds W")
        if np.any(self.moments < -1e-12):
            raise ValueError("central moments must be non-negative")
        if not 0 <= self.initial_state < S:
            raise ValueError("initial state out of range")

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def n_actions(self) -> int:
        return self.phi.shape[1]

    @property
    def transitions(self) -> np.ndarray:
        """P[h, s, a, s']."""
        return np.einsum("sad,htd->hsat", self.phi, self.mu)

    @property
    def rewards(self) -> np.ndarray:
        """r[h, s, a]."""
        return np.einsum("sad,hd->hsa", self.phi, self.theta_star)

    @property
    def moments(self) -> np.ndarray:
        return np.einsum("sad,hd->hsa", self.phi, self.psi_star)

    def sample_step(self, h: int, s: int, a: int, rng: RngStream):
        reward = float(self.rewards[h, s, a]) + float(self.noise[h][s][a].sample(rng))
        s_next = rng.choice(self.n_states, p=_prob_row(self.transitions[h, s, a]))
        return reward, s_next


def _prob_row(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def make_tabular_linear_mdp(S: int, A: int, H: int, reward_spec: dict, noise_spec: dict,
                            seed: int, transition_spec: dict | None = None,
                            epsilon: float = 1.0, epsilon_prime: float = 1.0,
                            value_cap: float | None = None, initial_state: int = 0
                            ) -> LinearMDPSpec:
    """One-hot features (d = S*A), so every tabular MDP is exactly linear.

    reward_spec: {"kind": "uniform", "low", "high"} (high defaults to cap/H)
      or {"kind": "table", "values": [H][S][A]}.
    noise_spec: {"kind": "student_t"|"gaussian"|"deterministic", "df", "scale"}
      where scale may be a scalar or an [S][A] table.
    transition_spec: {"kind": "dirichlet", "alpha"} (default), "uniform",
      or {"kind": "table", "values": [H][S][A][S]}.
    """
    if min(S, A, H) < 1:
        raise ValueError("S, A and H must be positive")
    cap = float(value_cap if value_cap is not None else 1.0)
    d = S * A
    rng = RngStream(seed, 0, 7)
    phi = np.eye(d).reshape(S, A, d)

    transition_spec = transition_spec or {"kind": "dirichlet", "alpha": 1.0}
    kind = transition_spec["kind"]
    if kind == "dirichlet":
        P = rng.gen.dirichlet(np.full(S, float(transition_spec.get("alpha", 1.0))), size=(H, S, A))
    elif kind == "uniform":
        P = np.full((H, S, A, S), 1.0 / S)
    elif kind == "table":
        P = np.asarray(transition_spec["values"], dtype=float)
    else:
        raise ValueError(f"unknown transition kind {kind!r}")
    if P.shape != (H, S, A, S):
        raise ValueError(f"transition table must have shape {(H, S, A, S)}")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=3) - 1) > PROB_TOL):
        raise ValueError("invalid probability rows in transition table")
    # mu[h, s'] collects P_h(s' | s, a) over the one-hot coordinates
    mu = P.reshape(H, d, S).transpose(0, 2, 1).copy()

    rkind = reward_spec.get("kind", "uniform")
    if rkind == "uniform":
        lo = float(reward_spec.get("low", 0.0))
        hi = float(reward_spec.get("high", cap / H))
        r = rng.uniform(lo, hi, size=(H, S, A))
    elif rkind == "table":
        r = np.asarray(reward_spec["values"], dtype=float)
    else:
        raise ValueError(f"unknown reward kind {rkind!r}")
    if r.shape != (H, S, A):
        raise ValueError(f"reward table must have shape {(H, S, A)}")
    if np.any(r < 0) or np.any(r > cap / H + 1e-12):
        raise ValueError("mean rewards must lie in [0, cap/H]")

    scale = np.broadcast_to(np.asarray(noise_spec.get("scale", 1.0), dtype=float), (S, A))
    noise = [[[Noise(noise_spec["kind"], float(scale[s, a]), noise_spec.get("df"))
               for a in range(A)] for s in range(S)] for _ in range(H)]
    p = 1 + epsilon
    moments = np.array([[[noise[h][s][a].abs_moment(p) for a in range(A)] for s in range(S)]
                        for h in range(H)])
    if not np.all(np.isfinite(moments)):
        raise ValueError(f"noise has no finite {p}-th moment")
    nu_R_eps = max(noise[0][s][a].central_moment_of_power(p, 1 + epsilon_prime)
                   for s in range(S) for a in range(A)) ** (1 / (1 + epsilon_prime))
    if not math.isfinite(nu_R_eps):
        raise ValueError("|noise|^(1+eps) has no finite (1+eps')-th central moment")

    theta = r.reshape(H, d)
    psi = moments.reshape(H, d)
    B = max(1.0, float(np.linalg.norm(theta, axis=1).max()))
    W = max(1.0, float(np.linalg.norm(psi, axis=1).max()))
    return LinearMDPSpec(d, H, phi, mu, theta, psi, noise, cap, B, W, epsilon, epsilon_prime,
                         float(nu_R_eps), initial_state)


# ---------------------------------------------------------------------------
# exact oracles


def exact_dp_oracle(spec: LinearMDPSpec):
    """Backward induction; returns (V [H+1, S], Q [H, S, A])."""
    P, r = spec.transitions, spec.rewards
    H, S, A = r.shape
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = r[h] + P[h] @ V[h + 1]
        V[h] = Q[h].max(axis=1)
    return V, Q


def policy_value(spec: LinearMDPSpec, policy: np.ndarray) -> np.ndarray:
    """V^pi [H+1, S] for a deterministic policy given as actions[h, s]."""
    P, r = spec.transitions, spec.rewards
    H, S, _ = r.shape
    V = np.zeros((H + 1, S))
    idx = np.arange(S)
    for h in range(H - 1, -1, -1):
        a = policy[h]
        V[h] = r[h, idx, a] + P[h, idx, a] @ V[h + 1]
    return V


def brute_force_optimum(spec: LinearMDPSpec) -> np.ndarray:
    """max over all A^(S*H) deterministic Markov policies of V^pi_1 (per start state)."""
    H, S, A = spec.H, spec.n_states, spec.n_actions
    best = np.full(S, -np.inf)
    for choice in itertools.product(range(A), repeat=S * H):
        V = policy_value(spec, np.asarray(choice).reshape(H, S))
        best = np.maximum(best, V[0])
    return best


# ---------------------------------------------------------------------------
# learner configuration and radii


@dataclass
class MDPConfig:
    """Tunables of Heavy-LSVI-UCB.

    ``bonus_scale`` multiplies beta_R and beta_V in the Q-bonuses;
    ``weight_radius_scale`` multiplies the radii that enter the weights
    (W_{k,h} through beta_{R^eps} and beta_R, E and D through beta_0).
    ``variance_floor_scale`` multiplies the two dimension-dependent floors of
    sigma_{k,h}; ``leverage_scale`` multiplies the two leverage floors of
    nu_{k,h}. Both default to 1 (the theoretical weights).
    """

    K: int
    delta: float = 0.05
    bonus_scale: float = 1.0
    weight_radius_scale: float = 1.0
    variance_floor_scale: float = 1.0
    leverage_scale: float = 1.0
    nu_min: float | None = None
    sigma_min: float | None = None
    lam_R: float | None = None
    lam_V: float | None = None
    strict: bool = False

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if min(self.bonus_scale, self.weight_radius_scale, self.variance_floor_scale,
               self.leverage_scale) < 0:
            raise ValueError("scales must be non-negative")


def default_nu_min(nu_R_eps, d, H, K, eps, eps_p) -> float:
    expo = ((1 + eps) * (1 + eps_p) - 2) / (2 * (1 + eps) * (1 + eps_p))
    return (max(nu_R_eps, 1e-12) ** (1 / (1 + eps)) * d ** (1 / (1 + eps))
            * H ** ((1 - eps) / (2 * (1 + eps))) * K ** (-expo))


def default_sigma_min(d, H, K, cap) -> float:
    return math.sqrt(d ** 5 * H ** 1.5 * cap ** 2) * K ** -0.25


@dataclass
class Radii:
    """Closed-form constants; beta_R and beta_V use constant 1 in place of O(.)."""

    d: int
    H: int
    K: int
    delta: float
    eps: float
    eps_p: float
    cap: float
    B: float
    W: float
    L_feat: float
    nu_R_eps: float
    lam_R: float
    lam_V: float
    nu_min: float
    sigma_min: float
    kappa: float = 0.0
    log_conf: float = 0.0
    c0: float = 0.0
    c1: float = 0.0
    tau0: float = 0.0
    tau0_tilde: float = 0.0
    iota: float = 0.0
    iota0: float = 0.0
    iota1: float = 0.0
    beta0: float = 0.0
    beta_V: float = 0.0

    def __post_init__(self):
        d, H, K, delta = self.d, self.H, self.K, self.delta
        self.kappa = d * math.log1p(K / (d * self.lam_R * self.nu_min ** 2))
        self.log_conf = math.log(2.0 * H * K * K / delta)
        c0, c1a, self.tau0 = schedule_constants(self.eps, K, delta, 1.0, self.kappa, self.log_conf)
        _, c1b, _ = schedule_constants(self.eps_p, K, delta, 1.0, self.kappa, self.log_conf)
        self.c0, self.c1 = c0, min(c1a, c1b)
        b_tilde = self.nu_R_eps / self.nu_min
        self.tau0_tilde = schedule_constants(self.eps_p, K, delta, max(b_tilde, 1e-300),
                                             self.kappa, self.log_conf)[2]
        self.iota = max(math.log1p(K / (d * self.lam_R * self.nu_min ** 2)),
                        math.log(3 * K), self.log_conf)
        self._solve_iotas()

    def beta_R(self, i: int) -> float:
        e = (1 - self.eps) / (2 * (1 + self.eps))
        return math.sqrt(self.lam_R) * self.B + math.sqrt(self.d) * float(i) ** e * self.iota

    def beta_R_eps(self, k: int) -> float:
        e = (1 - self.eps_p) / (2 * (1 + self.eps_p))
        return (3 * math.sqrt(self.lam_R) * self.W
                + 24 * float(k) ** e * math.sqrt(2 * self.kappa) * self.nu_R_eps / self.nu_min
                * math.log(3 * self.K) ** e * self.log_conf ** (self.eps_p / (1 + self.eps_p)))

    def _iota0(self, beta_V: float) -> float:
        d, K, H = self.d, self.K, self.H
        lam_R, lam_V, sm, cap = self.lam_R, self.lam_V, self.sigma_min, self.cap
        L = cap * math.sqrt(d * K / lam_V)
        bR = self.beta_R(K)
        return max(
            math.log2(1 + K / (lam_R * self.nu_min ** 2)),
            math.log2(1 + K / (lam_V * sm ** 2)),
            math.log1p(8 * (self.B + L) * K / (lam_V * cap * math.sqrt(d) * sm ** 2)),
            math.log1p(32 * bR ** 2 * K ** 2 / (math.sqrt(d) * lam_R * lam_V ** 2 * cap ** 2 * sm ** 4)),
            math.log1p(32 * beta_V ** 2 * K ** 2 / (math.sqrt(d) * lam_V ** 3 * cap ** 2 * sm ** 4)),
        )

    def _iota1(self, iota0: float, beta_V: float) -> float:
        d, K, H = self.d, self.K, self.H
        lam_R, lam_V, sm, cap = self.lam_R, self.lam_V, self.sigma_min, self.cap
        L = cap * math.sqrt(d * K / lam_V)
        bR = self.beta_R(K)
        return max(
            iota0,
            math.log1p(K / (sm ** 2 * d * lam_V)),
            math.log(4 * H * K * K / self.delta),
            math.log1p(4 * (self.B + L) * math.sqrt(d ** 3 * H) / sm),
            math.log1p(8 * math.sqrt(d ** 7) * H * bR ** 2 / (lam_R * sm ** 2)),
            math.log1p(8 * math.sqrt(d ** 7) * H * beta_V ** 2 / (lam_V * sm ** 2)),
        )

    def _solve_iotas(self, max_iter: int = 200):
        # iota_0, iota_1 and beta_V reference each other; iterate to the fixed point
        base = math.sqrt(self.d * self.lam_V) * self.cap
        beta_V = base
        for _ in range(max_iter):
            iota0 = self._iota0(beta_V)
            iota1 = self._iota1(iota0, beta_V)
            new = base + math.sqrt(self.d) * iota1 ** 2
            if abs(new - beta_V) <= 1e-12 * new:
                beta_V = new
                break
            beta_V = new
        else:
            raise RuntimeError("radius fixed point did not converge")
        self.iota0 = self._iota0(beta_V)
        self.iota1 = self._iota1(self.iota0, beta_V)
        self.beta_V = beta_V
        self.beta0 = (2 * math.sqrt(self.d * self.lam_V) * self.cap
                      + 3 * self.cap / self.sigma_min
                      * math.sqrt(self.d ** 3 * self.H * self.iota0 ** 2 + math.log(self.H / self.delta)))

    def rare_update_bound(self) -> float:
        """d H log2[(1 + K/(lam_R nu_min^2)) (1 + K/(lam_V sigma_min^2))]."""
        return self.d * self.H * math.log2(
            (1 + self.K / (self.lam_R * self.nu_min ** 2))
            * (1 + self.K / (self.lam_V * self.sigma_min ** 2)))


def make_radii(spec: LinearMDPSpec, cfg: MDPConfig) -> Radii:
    d, H, K = spec.d, spec.H, cfg.K
    lam_R = cfg.lam_R if cfg.lam_R is not None else d / max(spec.B ** 2, spec.W ** 2)
    lam_V = cfg.lam_V if cfg.lam_V is not None else 1.0 / spec.value_cap ** 2
    nu_min = cfg.nu_min if cfg.nu_min is not None else default_nu_min(
        spec.nu_R_eps, d, H, K, spec.epsilon, spec.epsilon_prime)
    sigma_min = cfg.sigma_min if cfg.sigma_min is not None else default_sigma_min(
        d, H, K, spec.value_cap)
    return Radii(d, H, K, cfg.delta, spec.epsilon, spec.epsilon_prime, spec.value_cap,
                 spec.B, spec.W, 1.0, spec.nu_R_eps, lam_R, lam_V, nu_min, sigma_min)


# ---------------------------------------------------------------------------
# learner state


@dataclass
class ValueSnapshot:
    theta_plus_w: np.ndarray
    theta_plus_w_check: np.ndarray
    radius_R: float
    shape_R: el.PrecisionState
    radius_V: float
    shape_V: el.PrecisionState
    cap: float


@dataclass
class StepState:
    reward: HuberRegressor
    moment: HuberRegressor
    sigma_prec: el.PrecisionState
    # M = sum sigma^-2 phi e_{s'}^T, so the ridge solution for targets f is Sigma^-1 M f
    transitions: np.ndarray
    w_hat: np.ndarray
    w_check: np.ndarray
    w_tilde: np.ndarray
    logdet_last: tuple = (0.0, 0.0)


@dataclass
class MDPLearnerState:
    spec: LinearMDPSpec
    cfg: MDPConfig
    radii: Radii
    steps: list
    Q: np.ndarray
    Q_check: np.ndarray
    k: int = 0
    update_flag: bool = True
    n_updates: int = 0
    snapshots: list = field(default_factory=list)

    @property
    def V(self) -> np.ndarray:
        return np.vstack([self.Q.max(axis=2), np.zeros((1, self.spec.n_states))])

    @property
    def V_check(self) -> np.ndarray:
        return np.vstack([self.Q_check.max(axis=2), np.zeros((1, self.spec.n_states))])

    def policy(self) -> np.ndarray:
        return self.Q.argmax(axis=2)


def init_learner(spec: LinearMDPSpec, cfg: MDPConfig) -> MDPLearnerState:
    radii = make_radii(spec, cfg)
    d, S = spec.d, spec.n_states
    sched_R = HuberScheduleConfig(spec.epsilon, cfg.K, cfg.delta, 1.0, radii.kappa, radii.c0,
                                  radii.c1, radii.tau0, spec.B, 1.0, radii.nu_min)
    b_tilde = max(spec.nu_R_eps / radii.nu_min, 1e-300)
    sched_psi = HuberScheduleConfig(spec.epsilon_prime, cfg.K, cfg.delta, b_tilde, radii.kappa,
                                    radii.c0, radii.c1, radii.tau0_tilde, spec.W, 1.0,
                                    radii.nu_min)
    steps = []
    for _ in range(spec.H):
        steps.append(StepState(
            reward=HuberRegressor(sched_R, radii.lam_R, d, strict=cfg.strict),
            moment=HuberRegressor(sched_psi, radii.lam_R, d, strict=cfg.strict),
            sigma_prec=el.new_precision(d, radii.lam_V),
            transitions=np.zeros((d, S)),
            w_hat=np.zeros(d), w_check=np.zeros(d), w_tilde=np.zeros(d)))
    shape = (spec.H, S, spec.n_actions)
    return MDPLearnerState(spec, cfg, radii, steps, np.full(shape, np.inf), np.full(shape, -np.inf))


def estimate_reward_theta(state: MDPLearnerState, h: int) -> np.ndarray:
    return state.steps[h].reward.theta


def estimate_central_moment_psi(state: MDPLearnerState, h: int) -> np.ndarray:
    return state.steps[h].moment.theta


def ridge_solution(step: StepState, f: np.ndarray) -> np.ndarray:
    """Weighted ridge estimate of w_h[f] from the transitions seen so far."""
    return step.sigma_prec.gram_inv @ (step.transitions @ f)


def refresh_value_ridge(state: MDPLearnerState, h: int) -> None:
    """w_hat, w_check, w_tilde against V^k_{h+1}, V_check^k_{h+1}, (V^k_{h+1})^2."""
    step = state.steps[h]
    V, Vc = state.V[h + 1], state.V_check[h + 1]
    V = np.where(np.isfinite(V), V, state.spec.value_cap)
    Vc = np.where(np.isfinite(Vc), Vc, 0.0)
    step.w_hat = ridge_solution(step, V)
    step.w_check = ridge_solution(step, Vc)
    step.w_tilde = ridge_solution(step, V * V)


def value_iterate(state: MDPLearnerState) -> ValueSnapshot | None:
    """Backward pass of episode k = state.k + 1; rebuilds Q only when flagged."""
    spec, r = state.spec, state.radii
    S, A, d = spec.phi.shape
    feats = spec.phi.reshape(S * A, d)
    cap = spec.value_cap
    k_prev = state.k
    beta_R = state.cfg.bonus_scale * r.beta_R(k_prev)
    beta_V = state.cfg.bonus_scale * r.beta_V
    snaps = []
    for h in range(spec.H - 1, -1, -1):
        step = state.steps[h]
        refresh_value_ridge(state, h)
        if not state.update_flag:
            continue
        theta = step.reward.theta
        bonus = (beta_R * el.mahalanobis_inv_rows(step.reward.precision, feats)
                 + beta_V * el.mahalanobis_inv_rows(step.sigma_prec, feats))
        q_up = (feats @ (theta + step.w_hat) + bonus).reshape(S, A)
        q_lo = (feats @ (theta + step.w_check) - bonus).reshape(S, A)
        q_up = np.minimum(np.minimum(q_up, state.Q[h]), cap)
        q_lo = np.maximum(np.maximum(q_lo, state.Q_check[h]), 0.0)
        if np.any(q_up > state.Q[h]) or np.any(q_lo < state.Q_check[h]):
            raise AssertionError("value snapshots lost monotonicity")
        state.Q[h], state.Q_check[h] = q_up, q_lo
        snaps.append(ValueSnapshot(theta + step.w_hat, theta + step.w_check, beta_R,
                                   step.reward.precision.copy(), beta_V,
                                   step.sigma_prec.copy(), cap))
    if not state.update_flag:
        return None
    state.n_updates += 1
    for step in state.steps:
        step.logdet_last = (step.reward.precision.log_det, step.sigma_prec.log_det)
    snap = snaps[::-1]
    state.snapshots.append(snap)
    return snap


def reward_weight_nu(state: MDPLearnerState, h: int, phi: np.ndarray) -> float:
    """Weight nu_{k,h} for the next observation at step h (state.k is k-1)."""
    r, spec = state.radii, state.spec
    step = state.steps[h]
    norm = el.mahalanobis_inv(step.reward.precision, phi)
    k_prev = state.k
    W_kh = state.cfg.weight_radius_scale * (
        r.beta_R_eps(k_prev) + 6 * spec.value_cap ** spec.epsilon * r.beta_R(k_prev) * r.kappa
    ) * norm
    nu_hat = (max(float(phi @ step.moment.theta), 0.0) + W_kh) ** (1 / (1 + spec.epsilon))
    return nu_weight(nu_hat, r.nu_min, norm, r.c0, r.c1, r.kappa, max(spec.B, spec.W),
                     state.cfg.leverage_scale)


def nu_weight(nu_hat, nu_min, norm, c0, c1, kappa, BW, leverage_scale=1.0) -> float:
    root = math.sqrt(BW) / (c1 ** 0.25 * (2 * kappa) ** 0.25) * math.sqrt(norm)
    return max(nu_hat, nu_min, leverage_scale * norm / c0, leverage_scale * root)


def value_weight_sigma(state: MDPLearnerState, h: int, phi: np.ndarray) -> float:
    r, spec = state.radii, state.spec
    step = state.steps[h]
    cap, d, H = spec.value_cap, spec.d, spec.H
    norm = el.mahalanobis_inv(step.sigma_prec, phi)
    beta0 = state.cfg.weight_radius_scale * r.beta0
    gap = float(phi @ (step.w_hat - step.w_check))
    return sigma_weight(float(phi @ step.w_tilde), float(phi @ step.w_hat), gap, norm, beta0,
                        cap, d, H, r.sigma_min, state.cfg.variance_floor_scale)


def sigma_weight(second, first, gap, norm, beta0, cap, d, H, sigma_min,
                 floor_scale=1.0) -> float:
    var_hat = min(max(second, 0.0), cap ** 2) - min(max(first, 0.0), cap) ** 2
    E = max(min(4 * cap * gap + 11 * cap * beta0 * norm, cap ** 2), 0.0)
    D = max(min(2 * cap * gap + 4 * cap * beta0 * norm, cap ** 2), 0.0)
    sigma_hat = math.sqrt(max(var_hat + E, 0.0))
    return max(sigma_hat, floor_scale * math.sqrt(d ** 3 * H * D), sigma_min, norm,
               floor_scale * math.sqrt(d ** 2.5 * H * cap) * math.sqrt(norm))


def rare_switch_check(state: MDPLearnerState) -> bool:
    log2 = math.log(2.0)
    for step in state.steps:
        last_H, last_S = step.logdet_last
        if (step.reward.precision.log_det - last_H >= log2
                or step.sigma_prec.log_det - last_S >= log2):
            return True
    return False


def _tau_factor(w: float) -> float:
    w = max(w, W_FLOOR)
    return math.sqrt(1 + w * w) / w


def observe_step(state: MDPLearnerState, h: int, s: int, a: int, reward: float, s_next: int,
                 k: int) -> dict:
    """Weights, thresholds and all regression updates for one transition."""
    spec, r = state.spec, state.radii
    step = state.steps[h]
    phi = spec.phi[s, a]
    nu = reward_weight_nu(state, h, phi)
    sigma = value_weight_sigma(state, h, phi)
    w = el.mahalanobis_inv(step.reward.precision, phi) / nu
    tau = threshold(r.tau0, spec.epsilon, k, w)
    tau_tilde = threshold(r.tau0_tilde, spec.epsilon_prime, k, w)
    step.reward.record_weighted(phi, reward, nu, tau)
    resid = reward - float(phi @ step.reward.theta)
    step.moment.record_weighted(phi, abs(resid) ** (1 + spec.epsilon), nu, tau_tilde)
    el.rank_one_update(step.sigma_prec, phi, sigma)
    step.transitions[:, s_next] += phi / sigma ** 2
    return {"nu": nu, "sigma": sigma, "tau": tau, "tau_tilde": tau_tilde, "w": w}


def run_episode(spec: LinearMDPSpec, state: MDPLearnerState, k: int, rng: RngStream):
    """Plan (if flagged), act greedily for H steps, update; returns the trajectory."""
    if k != state.k + 1:
        raise ValueError(f"episode {k} out of order (last was {state.k})")
    updated = state.update_flag
    value_iterate(state)
    policy = state.policy()
    s = spec.initial_state
    traj = []
    for h in range(spec.H):
        a = int(policy[h, s])
        reward, s_next = spec.sample_step(h, s, a, rng)
        info = observe_step(state, h, s, a, reward, s_next, k)
        traj.append({"h": h, "s": s, "a": a, "reward": reward, "s_next": int(s_next), **info})
        s = int(s_next)
    state.k = k
    state.update_flag = rare_switch_check(state)
    return traj, updated


def run_mdp(spec: LinearMDPSpec, cfg: MDPConfig, seed: int, run_id: str = "",
            fingerprint: str = "", run_index: int = 0, step_diagnostics: bool = False
            ) -> RunRecord:
    """Per-episode regret V*_1(s_1) - V^{pi_k}_1(s_1), computed exactly."""
    V_star, _ = exact_dp_oracle(spec)
    s1 = spec.initial_state
    rng = RngStream(seed, run_index)
    rec = RunRecord(run_id or f"heavy_lsvi_ucb-s{seed}", fingerprint, seed)
    try:
        state = init_learner(spec, cfg)
        rec.summary["rare_update_bound"] = state.radii.rare_update_bound()
        for k in range(1, cfg.K + 1):
            traj, updated = run_episode(spec, state, k, rng)
            # the trajectory was generated by the policy planned at the start of episode k
            policy_before = state.policy()
            v_pi = policy_value(spec, policy_before)[0, s1]
            diag = {
                "return": sum(x["reward"] for x in traj),
                "updated": int(updated),
                "n_updates": state.n_updates,
                "v_up": float(state.V[0, s1]),
                "v_lo": float(state.V_check[0, s1]),
                "v_star": float(V_star[0, s1]),
            }
            if step_diagnostics:
                diag["steps"] = [{k2: x[k2] for k2 in ("s", "a", "nu", "sigma", "tau")}
                                 for x in traj]
            rec.append(k, max(float(V_star[0, s1] - v_pi), 0.0), _rounded(diag))
        rec.summary["n_updates"] = state.n_updates
        rec.summary["solver_nonconverged"] = sum(
            st.reward.nonconverged + st.moment.nonconverged for st in state.steps)
    except Exception as exc:
        rec.status = "failed"
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _rounded(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_rounded(v) for v in obj]
    return obj


def acceptance_instance(seed: int = 2024, noise_scale: float = 0.1, df: float = 5.0
                        ) -> LinearMDPSpec:
    """S=3, A=2, H=3 (d=6), rewards in [0, 1/H], Student-t(5) reward noise, eps=eps'=1."""
    return make_tabular_linear_mdp(3, 2, 3, {"kind": "uniform"},
                                   {"kind": "student_t", "df": df, "scale": noise_scale},
                                   seed, epsilon=1.0, epsilon_prime=1.0)
