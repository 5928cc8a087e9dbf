"""Flat ``key = value`` run configuration shared by every CLI command."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .bnc import SolveBudget, SolvePolicy
from .ilp import GeneratorConfig
from .training import CemConfig, RewardSpec, Td3Config

PRESETS = {
    "full": dict(n_items=16, n_knapsacks=2, coeff_lo=1, coeff_hi=1000, n_train=5000, n_test=1000),
    "desk": dict(n_items=10, n_knapsacks=2, coeff_lo=1, coeff_hi=100, n_train=500, n_test=100),
}

# keys that never change any output file
_NO_HASH = {"workers", "out_dir"}


@dataclass
class RunConfig:
    preset: str = "full"
    out_dir: str = "runs"
    train_path: str = ""
    test_path: str = ""
    seed: int = 0
    workers: int = 1

    n_items: int = 16
    n_knapsacks: int = 2
    coeff_lo: int = 1
    coeff_hi: int = 1000
    objective_rule: str = "sum_of_columns"
    n_train: int = 5000
    n_test: int = 1000

    node_selection: str = "best_bound"
    branch_rule: str = "most_fractional"
    integral_objective: bool = True
    tree_cap: int = 10_000
    lp_iteration_cap: int = 5000

    hidden: tuple = (64, 64)
    squeeze: str = "crelu"
    sweep_step: float = 0.01

    td3_episodes: int = 4000
    td3_warmup: int = 300
    td3_batch_size: int = 64
    td3_actor_lr: float = 3e-3
    td3_critic_lr: float = 1e-3
    td3_exploration_sigma: float = 0.2
    td3_target_sigma: float = 0.2
    td3_noise_clip: float = 0.5
    td3_policy_delay: int = 2
    td3_polyak: float = 0.995
    td3_buffer: int = 100_000
    td3_eval_every: int = 250
    td3_eval_size: int = 100
    td3_keep_best: bool = True
    td3_final_init_scale: float = 3e-3
    td3_reward_floor: float = -1.0

    cem_iterations: int = 20
    cem_population: int = 16
    cem_elite_frac: float = 0.25
    cem_init_std: float = 0.1
    cem_minibatch: int = 32

    bench_repeats: int = 100

    verify_instances: int = 40
    verify_segments: int = 5
    verify_samples: int = 200
    inject_fault: str = ""

    # -- derived views ----------------------------------------------------

    @property
    def generator(self) -> GeneratorConfig:
        return GeneratorConfig(self.n_items, self.n_knapsacks, self.coeff_lo, self.coeff_hi,
                               self.seed, self.objective_rule)

    @property
    def policy(self) -> SolvePolicy:
        return SolvePolicy(self.node_selection, self.branch_rule, integral_objective=self.integral_objective)

    @property
    def budget(self) -> SolveBudget:
        return SolveBudget(self.tree_cap, self.lp_iteration_cap)

    @property
    def reward_spec(self) -> RewardSpec:
        return RewardSpec(self.budget, self.policy)

    @property
    def d(self) -> int:
        return self.n_items * self.n_knapsacks + self.n_items + self.n_knapsacks

    def td3(self, activation: str = "relu") -> Td3Config:
        return Td3Config(
            hidden=tuple(self.hidden), critic_hidden=tuple(self.hidden),
            actor_lr=self.td3_actor_lr, critic_lr=self.td3_critic_lr, buffer_capacity=self.td3_buffer,
            batch_size=self.td3_batch_size, exploration_noise_sigma=self.td3_exploration_sigma,
            target_smoothing_sigma=self.td3_target_sigma, noise_clip=self.td3_noise_clip,
            policy_delay=self.td3_policy_delay, polyak=self.td3_polyak, episodes=self.td3_episodes,
            warmup=self.td3_warmup, eval_every=self.td3_eval_every, eval_size=self.td3_eval_size,
            keep_best=self.td3_keep_best, final_init_scale=self.td3_final_init_scale,
            reward_floor=None if math.isinf(self.td3_reward_floor) else self.td3_reward_floor, seed=self.seed,
            kind=self.squeeze, activation=activation,
        )

    def cem(self) -> CemConfig:
        return CemConfig(
            hidden=tuple(self.hidden), iterations=self.cem_iterations, population=self.cem_population,
            elite_frac=self.cem_elite_frac, init_std=self.cem_init_std, minibatch=self.cem_minibatch,
            seed=self.seed, kind=self.squeeze,
        )

    def path(self, name: str) -> Path:
        return Path(self.out_dir) / name

    @property
    def train_file(self) -> Path:
        return Path(self.train_path) if self.train_path else self.path("train.txt")

    @property
    def test_file(self) -> Path:
        return Path(self.test_path) if self.test_path else self.path("test.txt")

    def canonical(self) -> str:
        items = []
        for f in fields(self):
            if f.name in _NO_HASH:
                continue
            items.append(f"{f.name}={_format_value(getattr(self, f.name))}")
        return "\n".join(items)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(name: str, typ, raw: str):
    raw = raw.strip()
    if typ in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if typ in (int, "int"):
        return int(raw)
    if typ in (float, "float"):
        return float(raw)
    if typ in (tuple, "tuple"):
        return tuple(int(x) for x in raw.split(",") if x.strip())
    return raw


def parse_config_text(text: str, overrides: dict | None = None) -> RunConfig:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs[key] = value
    for key, value in (overrides or {}).items():
        pairs[key] = str(value)
    return build_config(pairs)


def build_config(pairs: dict[str, str]) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    unknown = set(pairs) - set(types)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    preset = pairs.get("preset", "full")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
    values = {"preset": preset, **PRESETS[preset]}
    for key, raw in pairs.items():
        values[key] = _coerce(key, types[key], raw)
    cfg = RunConfig(**values)
    cfg.generator, cfg.policy, cfg.budget  # validate eagerly
    return cfg


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    text = Path(path).read_text() if path else ""
    return parse_config_text(text, overrides)


def dump_config(cfg: RunConfig) -> str:
    return "\n".join(f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(cfg)) + "\n"


def replace(cfg: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **changes)
