"""Experiment configuration (YAML) with validation and canonical round-trip."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .asg import sampler_from_dict
from .baselines import MaxWeightPolicy, PriorityPolicy
from .core import ContractError, MixedEnvironment, OccupancyBehavior, ProductBehavior
from .envs import make_env
from .learners import FqiConfig, QLearnConfig

CONFIG_FORMAT = "mixedrl.config/1"


def _take(cls, d: dict | None, section: str):
    d = dict(d or {})
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ContractError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cls(**d)


@dataclass
class EnvSpec:
    name: str = "crisscross"
    params: dict = field(default_factory=dict)

    def build(self) -> MixedEnvironment:
        return make_env(self.name, self.params)


@dataclass
class LearnerSpec:
    kind: str = "fqi"
    K: int = 30
    m: int = 32
    init: str = "zero"
    steps: int = 4000
    epsilon: float = 0.1
    alpha0: float = 1.0
    alpha_power: float = 0.8
    alpha: float | None = None
    episode_length: int = 1000
    eval_every: int = 1000

    def __post_init__(self):
        if self.kind not in ("fqi", "qlearn"):
            raise ContractError("learner.kind must be 'fqi' or 'qlearn'")


@dataclass
class DataSpec:
    n: int = 2000
    behavior: dict = field(default_factory=lambda: {"kind": "occupancy", "policy": "random"})

    def __post_init__(self):
        if self.n < 1:
            raise ContractError("data.n must be >= 1")
        if self.behavior.get("kind") not in ("occupancy", "product"):
            raise ContractError("data.behavior.kind must be 'occupancy' or 'product'")


@dataclass
class EvalSpec:
    episodes: int = 200
    horizon: int | None = None
    mode: str = "mc"
    steps: int | None = None
    warmup: int = 0
    vi_tol: float = 1e-6

    def __post_init__(self):
        if self.episodes < 2:
            raise ContractError("eval.episodes must be >= 2")
        if self.mode not in ("mc", "exact", "both"):
            raise ContractError("eval.mode must be 'mc', 'exact' or 'both'")
        if self.steps is not None and self.steps <= self.warmup:
            raise ContractError("eval.steps must exceed eval.warmup")


@dataclass
class SweepSpec:
    n_grid: list = field(default_factory=lambda: [250, 1000, 4000])
    m_grid: list = field(default_factory=lambda: [0, 4, 16, 64])
    seeds: list = field(default_factory=lambda: list(range(10)))

    def __post_init__(self):
        if any(int(n) < 1 for n in self.n_grid):
            raise ContractError("sweep.n_grid entries must be >= 1")
        if any(int(m) < 0 for m in self.m_grid):
            raise ContractError("sweep.m_grid entries must be >= 0")


@dataclass
class ExperimentConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    box: list = field(default_factory=lambda: [20, 20, 20])
    gamma: float = 0.95
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    beta: dict = field(default_factory=lambda: {"kind": "truncated-geometric", "rate": 0.3})
    data: DataSpec = field(default_factory=DataSpec)
    eval: EvalSpec = field(default_factory=EvalSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    seed: int = 0
    out: str = "runs/default"

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ContractError("gamma must lie in [0, 1)")
        env = self.env.build()
        if len(self.box) != env.x_dim:
            raise ContractError(f"box has {len(self.box)} dims, {env.name} needs {env.x_dim}")
        self.box = [int(b) for b in self.box]
        self.env.params = env.params()
        beta = dict(self.beta)
        beta.setdefault("high", list(self.box))
        beta.setdefault("low", [0] * len(self.box))
        if beta.get("kind") != "gaussian-fit":
            sampler_from_dict(beta)
        self.beta = beta

    # construction helpers --------------------------------------------------

    def make_env(self) -> MixedEnvironment:
        return self.env.build()

    def make_beta(self, dataset=None):
        return sampler_from_dict(self.beta, dataset)

    def fqi_config(self, beta=None) -> FqiConfig:
        lr = self.learner
        return FqiConfig(K=lr.K, m=lr.m, gamma=self.gamma, box=tuple(self.box), beta=beta, init=lr.init)

    def qlearn_config(self) -> QLearnConfig:
        lr = self.learner
        return QLearnConfig(steps=lr.steps, m=lr.m, gamma=self.gamma, epsilon=lr.epsilon, alpha0=lr.alpha0,
                            alpha_power=lr.alpha_power, alpha=lr.alpha, episode_length=lr.episode_length,
                            box=tuple(self.box), init=lr.init, eval_every=lr.eval_every)

    def make_behavior(self, env: MixedEnvironment):
        return behavior_from_dict(self.data.behavior, env, self.box, self.gamma)

    # serialisation -----------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        return {"format": CONFIG_FORMAT, **d}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        fmt = d.pop("format", CONFIG_FORMAT)
        if fmt != CONFIG_FORMAT:
            raise ContractError(f"unsupported config format {fmt!r}")
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ContractError(f"unknown top-level config keys: {sorted(unknown)}")
        kw: dict[str, Any] = {}
        for key, sub in (("env", EnvSpec), ("learner", LearnerSpec), ("data", DataSpec),
                         ("eval", EvalSpec), ("sweep", SweepSpec)):
            if key in d:
                kw[key] = _take(sub, d.pop(key), key)
        kw.update(d)
        return cls(**kw)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(yaml.safe_load(text) or {})

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())


def named_policy(name: str, env: MixedEnvironment, rng: np.random.Generator | None = None):
    if name == "priority":
        return PriorityPolicy()
    if name == "maxweight":
        return MaxWeightPolicy(env)
    if name == "random":
        return lambda s, x: int(rng.integers(env.n_actions))
    raise ContractError(f"unknown policy {name!r}")


def behavior_from_dict(d: dict, env: MixedEnvironment, box, gamma: float):
    if d["kind"] == "occupancy":
        name = d.get("policy", "random")
        eps = float(d.get("epsilon", 1.0 if name == "random" else 0.0))
        policy = (lambda s, x: 0) if name == "random" else named_policy(name, env)
        return OccupancyBehavior(policy, float(d.get("gamma", gamma)), eps)
    x_high = d.get("x_high", box)
    p_s = d.get("p_s") or [1.0 / env.n_codes] * env.n_codes
    p_a = d.get("p_a") or [1.0 / env.n_actions] * env.n_actions
    if d.get("p_x") is not None:
        p_x = np.asarray(d["p_x"], float)
    else:
        shape = tuple(int(b) + 1 for b in x_high)
        p_x = np.full(shape, 1.0 / np.prod(shape))
    return ProductBehavior(p_s, p_x, p_a)
