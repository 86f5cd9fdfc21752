"""Experiment configuration: TOML files, validation and canonical fingerprints."""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bandit import DECISION_SETS, BanditInstance, NoiseModel, make_learner
from .linear_mdp import MDPConfig, make_tabular_linear_mdp
from .noise import Noise
from .records import fingerprint

KINDS = ("bandit", "mdp", "regression-check")
BANDIT_ALGOS = ("heavy_oful", "oful", "truncation", "median_of_means")
MDP_ALGOS = ("heavy_lsvi_ucb",)


class ConfigError(ValueError):
    """Malformed or out-of-range configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    seeds: list
    algorithms: list
    environment: dict
    horizon: int = 0
    output_dir: str = "runs"
    emit_figures: bool = True
    raw: dict = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.raw)


def _require(data: dict, key: str, prefix: str = ""):
    if key not in data:
        raise ConfigError("missing required key", prefix + key)
    return data[key]


def _positive(value, name, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", name)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", name)
    if not value > 0 or not math.isfinite(value):
        raise ConfigError(f"must be positive, got {value!r}", name)
    return int(value) if integer else float(value)


def validate_seeds(seeds, name="seeds") -> list:
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("must be a non-empty list of integers", name)
    out = []
    for s in seeds:
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            raise ConfigError(f"seeds must be non-negative integers, got {s!r}", name)
        out.append(int(s))
    if len(set(out)) != len(out):
        dupes = sorted({s for s in out if out.count(s) > 1})
        raise ConfigError(f"duplicate seeds {dupes}", name)
    return out


def from_dict(data: dict) -> ExperimentConfig:
    data = copy.deepcopy(data)
    kind = _require(data, "kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {KINDS}", "kind")
    seeds = validate_seeds(_require(data, "seeds"))
    algos = data.get("algorithms", [])
    if kind != "regression-check":
        if not isinstance(algos, list) or not algos:
            raise ConfigError("at least one [[algorithms]] table is required", "algorithms")
        allowed = BANDIT_ALGOS if kind == "bandit" else MDP_ALGOS
        for i, a in enumerate(algos):
            name = _require(a, "name", f"algorithms[{i}].")
            if name not in allowed:
                raise ConfigError(f"unknown algorithm {name!r}; expected one of {allowed}",
                                  f"algorithms[{i}].name")
            for key in ("bonus_scale", "weight_radius_scale"):
                if key in a and (not isinstance(a[key], (int, float)) or a[key] < 0):
                    raise ConfigError("must be a non-negative number", f"algorithms[{i}].{key}")
            if "bonus_grid" in a:
                grid = a["bonus_grid"]
                if not isinstance(grid, list) or not grid:
                    raise ConfigError("must be a non-empty list", f"algorithms[{i}].bonus_grid")
                for g in grid:
                    _positive(g, f"algorithms[{i}].bonus_grid")
            if "delta" in a and not 0 < a["delta"] < 1:
                raise ConfigError("must lie in (0, 1)", f"algorithms[{i}].delta")
    env = data.get("environment", {})
    if not isinstance(env, dict):
        raise ConfigError("must be a table", "environment")
    horizon = 0
    if kind == "bandit":
        horizon = _positive(_require(data, "horizon"), "horizon", integer=True)
    cfg = ExperimentConfig(kind=kind, name=str(data.get("name", kind)), seeds=seeds,
                           algorithms=algos, environment=env, horizon=horizon,
                           output_dir=str(data.get("output_dir", "runs")),
                           emit_figures=bool(data.get("emit_figures", True)), raw=data)
    # build once so range errors surface at load time
    if kind == "bandit":
        build_bandit_instance(env)
    elif kind == "mdp":
        build_mdp_spec(env)
        for i, a in enumerate(algos):
            build_mdp_config(a, f"algorithms[{i}].")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}", str(path)) from exc
    return from_dict(data)


# ---------------------------------------------------------------------------
# builders


def build_noise(spec: dict, prefix: str = "environment.noise.") -> Noise:
    try:
        return Noise.from_dict(spec)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), prefix.rstrip(".")) from exc


def build_bandit_instance(env: dict) -> BanditInstance:
    dim = _positive(_require(env, "dim", "environment."), "environment.dim", integer=True)
    B = float(env.get("B", 1.0))
    L = float(env.get("L", 1.0))
    epsilon = float(_require(env, "epsilon", "environment."))
    if not 0 < epsilon <= 1:
        raise ConfigError("must lie in (0, 1]", "environment.epsilon")
    theta = env.get("theta_star", "uniform")
    if theta == "uniform":
        theta_star = np.full(dim, B / math.sqrt(dim))
    elif isinstance(theta, list):
        theta_star = np.asarray(theta, dtype=float)
    else:
        raise ConfigError("must be 'uniform' or a list of numbers", "environment.theta_star")
    noise_spec = dict(_require(env, "noise", "environment."))
    scale_law = noise_spec.pop("scale_law", {"kind": "constant", "value": 1.0})
    noise = build_noise(noise_spec)
    if scale_law.get("kind") not in ("constant", "log10_uniform"):
        raise ConfigError("kind must be 'constant' or 'log10_uniform'",
                          "environment.noise.scale_law.kind")
    try:
        noise_model = NoiseModel(noise, epsilon, scale_law)
    except ValueError as exc:
        raise ConfigError(str(exc), "environment.noise") from exc
    ds = env.get("decision_set", {"kind": "unit_sphere", "n_arms": 20})
    if ds.get("kind") not in DECISION_SETS:
        raise ConfigError(f"unknown decision set {ds.get('kind')!r}",
                          "environment.decision_set.kind")
    try:
        return BanditInstance(dim, theta_star, DECISION_SETS[ds["kind"]](ds), noise_model, B, L)
    except ValueError as exc:
        raise ConfigError(str(exc), "environment") from exc


def build_bandit_learner(algo: dict, instance: BanditInstance, horizon: int,
                         bonus_scale: float | None = None):
    params = {k: v for k, v in algo.items() if k not in ("name", "bonus_grid", "label")}
    if bonus_scale is not None:
        params["bonus_scale"] = bonus_scale
    try:
        return make_learner(algo["name"], instance, horizon, params)
    except TypeError as exc:
        raise ConfigError(f"bad parameter: {exc}", f"algorithms.{algo['name']}") from exc


def build_mdp_spec(env: dict):
    try:
        return make_tabular_linear_mdp(
            int(_require(env, "S", "environment.")), int(_require(env, "A", "environment.")),
            int(_require(env, "H", "environment.")),
            env.get("reward", {"kind": "uniform"}),
            _require(env, "noise", "environment."),
            int(env.get("instance_seed", 0)),
            transition_spec=env.get("transitions"),
            epsilon=float(env.get("epsilon", 1.0)),
            epsilon_prime=float(env.get("epsilon_prime", 1.0)),
            value_cap=env.get("value_cap"),
            initial_state=int(env.get("initial_state", 0)))
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc), "environment") from exc


MDP_KEYS = ("K", "delta", "bonus_scale", "weight_radius_scale", "variance_floor_scale",
            "leverage_scale", "nu_min", "sigma_min", "lam_R", "lam_V", "strict")


def build_mdp_config(algo: dict, prefix: str = "", bonus_scale: float | None = None
                     ) -> MDPConfig:
    extra = set(algo) - set(MDP_KEYS) - {"name", "label"}
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", prefix.rstrip("."))
    kw = {k: algo[k] for k in MDP_KEYS if k in algo}
    if "K" not in kw:
        raise ConfigError("missing required key", prefix + "K")
    if bonus_scale is not None:
        kw["bonus_scale"] = bonus_scale
    try:
        return MDPConfig(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), prefix.rstrip(".")) from exc
