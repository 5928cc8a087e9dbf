"""Training a multiplier policy to shrink branch-and-bound trees.

Each instance is a one-step episode: the actor maps the encoded instance to a
CG multiplier, one cut is added at the root, and the reward is the relative
tree-size reduction against the no-cut tree.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bnc import SolveBudget, SolvePolicy, branch_and_bound
from .cuts import cg_cut
from .ilp import IlpInstance, encode_batch
from .nn import (
    NetworkArch, ParamBox, backprop_relu, backprop_ste_lt, forward_lt, forward_relu,
    init_params, squeeze, squeeze_grad,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardSpec:
    budget: SolveBudget = SolveBudget()
    policy: SolvePolicy = SolvePolicy()


class ScoreCache:
    """Memoized tree sizes per instance.

    Many multipliers produce the same cut, and the solver is deterministic, so
    tree sizes are cached by the cut's exact coefficients.
    """

    def __init__(self, spec: RewardSpec):
        self.spec = spec
        self._baseline: dict[IlpInstance, int] = {}
        self._by_cut: dict[IlpInstance, dict] = {}
        self.solves = 0

    def baseline(self, inst: IlpInstance) -> int:
        if inst not in self._baseline:
            self.solves += 1
            self._baseline[inst] = branch_and_bound(inst, (), self.spec.policy, self.spec.budget).tree_size
        return self._baseline[inst]

    def tree_size(self, inst: IlpInstance, u) -> int:
        cut = cg_cut(inst, u)
        if cut.is_vacuous and cut.beta >= 0:
            return self.baseline(inst)
        memo = self._by_cut.setdefault(inst, {})
        if cut.key not in memo:
            self.solves += 1
            memo[cut.key] = branch_and_bound(inst, [cut], self.spec.policy, self.spec.budget).tree_size
        return memo[cut.key]

    def reward(self, inst: IlpInstance, u) -> float:
        f0 = self.baseline(inst)
        return (f0 - self.tree_size(inst, u)) / f0


def reward(inst: IlpInstance, u, spec: RewardSpec = RewardSpec(), cache: ScoreCache | None = None) -> float:
    """``(f_cg(I, 0) - f_cg(I, u)) / f_cg(I, 0)``."""
    cache = cache or ScoreCache(spec)
    return cache.reward(inst, u)


def reward_from_sizes(baseline: int, size: int) -> float:
    return (baseline - size) / baseline


# --- optimizer -------------------------------------------------------------


class RmsProp:
    """Per-parameter step scaled by a running RMS of gradients (no momentum)."""

    def __init__(self, size: int, lr: float, decay: float = 0.999, eps: float = 1e-8):
        self.lr, self.decay, self.eps = lr, decay, eps
        self.sq = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.sq = self.decay * self.sq + (1 - self.decay) * grad * grad
        # bias-corrected running mean so early steps are not inflated
        sq_hat = self.sq / (1 - self.decay**self.t)
        return params - self.lr * grad / (np.sqrt(sq_hat) + self.eps)


# --- actor helpers ----------------------------------------------------------


@dataclass
class Actor:
    arch: NetworkArch
    params: np.ndarray
    kind: str = "crelu"
    activation: str = "relu"  # "relu" or "lt"
    box: ParamBox | None = None

    def raw(self, X) -> np.ndarray:
        fwd = forward_relu if self.activation == "relu" else forward_lt
        return fwd(self.arch, self.params, X)

    def act(self, X) -> np.ndarray:
        box = self.box or ParamBox.unit(self.arch.d_out)
        return squeeze(self.raw(X), box, self.kind)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    def __call__(self, X):
        return (X - self.mean) / self.std

    def fold_into(self, arch: NetworkArch, params: np.ndarray) -> np.ndarray:
        """Rewrite the first layer so the network accepts raw inputs."""
        out = params.copy()
        ws, bs, shape = arch.slices[0]
        A = params[ws].reshape(shape)
        A_raw = A / self.std
        out[ws] = A_raw.ravel()
        out[bs] = params[bs] - A_raw @ self.mean
        return out


# --- TD3 -------------------------------------------------------------------


@dataclass(frozen=True)
class Td3Config:
    hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (64, 64)
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    buffer_capacity: int = 100_000
    batch_size: int = 64
    exploration_noise_sigma: float = 0.2
    target_smoothing_sigma: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    polyak: float = 0.995
    discount: float = 0.0
    episodes: int = 2000
    warmup: int = 200
    eval_every: int = 250
    eval_size: int = 50
    keep_best: bool = True
    seed: int = 0
    kind: str = "crelu"
    activation: str = "relu"  # "lt" trains a linear-threshold actor with straight-through gradients
    # output layer starts near zero so the first actions sit mid-box instead of on the clip
    final_init_scale: float | None = 3e-3
    # lower clip on stored rewards; a cut can grow a tree many times over and
    # those outliers otherwise dominate the critic's squared loss
    reward_floor: float | None = None

    def actor_arch(self, d: int, m: int) -> NetworkArch:
        return NetworkArch((d, *self.hidden, m))

    def critic_arch(self, d: int, m: int) -> NetworkArch:
        return NetworkArch((d + m, *self.critic_hidden, 1))


@dataclass
class TrainRun:
    config: object
    actor: Actor
    history: list[dict] = field(default_factory=list)
    initial: dict | None = None
    timings: dict = field(default_factory=dict)
    critic_losses: list[tuple[float, float]] = field(default_factory=list, repr=False)


class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.size = 0
        self.ptr = 0

    def add(self, s, a, r, done=True):
        self.s[self.ptr], self.a[self.ptr], self.r[self.ptr], self.done[self.ptr] = s, a, r, float(done)
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, n: int):
        idx = rng.integers(0, self.size, size=n)
        return self.s[idx], self.a[idx], self.r[idx], self.done[idx]

    def __len__(self):
        return self.size


def _check_train_set(train_set: Sequence[IlpInstance]) -> tuple[int, int]:
    if not train_set:
        raise ValueError("empty training set")
    m, n = train_set[0].m, train_set[0].n
    if any(inst.m != m or inst.n != n for inst in train_set):
        raise ValueError("all training instances must share (m, n)")
    return m, n


def _squeeze_pullback(y: np.ndarray, dq_du: np.ndarray, box: ParamBox, kind: str) -> np.ndarray:
    """Gradient of Q w.r.t. the raw actor output.

    For CReLU the clipped regions would block all signal, so the gradient is
    passed through there when it points back into the box.
    """
    g = squeeze_grad(y, box, kind)
    if kind == "crelu":
        scale = np.asarray(box.tau) - np.asarray(box.eta)
        inward = ((y <= 0) & (dq_du > 0)) | ((y >= 1) & (dq_du < 0))
        g = np.where(inward, scale, g)
    return dq_du * g


def evaluate_actor(actor: Actor, instances: Sequence[IlpInstance], cache: ScoreCache) -> dict:
    U = actor.act(encode_batch(instances))
    sizes = np.array([cache.tree_size(inst, u) for inst, u in zip(instances, U)])
    base = np.array([cache.baseline(inst) for inst in instances])
    return {
        "mean_reward": float(np.mean((base - sizes) / base)),
        "mean_tree_size": float(np.mean(sizes)),
    }


def td3_train(
    train_set: Sequence[IlpInstance], cfg: Td3Config, spec: RewardSpec = RewardSpec(),
    cache: ScoreCache | None = None,
) -> TrainRun:
    m, n = _check_train_set(train_set)
    t_start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    cache = cache or ScoreCache(spec)
    X_raw = encode_batch(train_set)
    norm = Standardizer.fit(X_raw)
    X = norm(X_raw)
    d = X.shape[1]
    box = ParamBox.unit(m)
    a_arch, c_arch = cfg.actor_arch(d, m), cfg.critic_arch(d, m)
    actor = init_params(a_arch, rng)
    if cfg.final_init_scale:
        ws, bs, _ = a_arch.slices[-1]
        actor[ws] = rng.uniform(-cfg.final_init_scale, cfg.final_init_scale, ws.stop - ws.start)
        actor[bs] = 0.5 if cfg.kind == "crelu" else 0.0
    critics = [init_params(c_arch, rng), init_params(c_arch, rng)]
    actor_t = actor.copy()
    critics_t = [c.copy() for c in critics]
    a_opt = RmsProp(a_arch.W, cfg.actor_lr)
    c_opts = [RmsProp(c_arch.W, cfg.critic_lr) for _ in range(2)]
    buf = ReplayBuffer(min(cfg.buffer_capacity, max(cfg.episodes, 1)), d, m)
    lt = cfg.activation == "lt"
    fwd = forward_lt if lt else forward_relu
    actor_back = backprop_ste_lt if lt else backprop_relu

    def export(params) -> Actor:
        return Actor(a_arch, norm.fold_into(a_arch, params), cfg.kind, cfg.activation, box)

    run = TrainRun(cfg, export(actor))
    if cfg.episodes <= 0:
        run.timings["total"] = time.perf_counter() - t_start
        return run

    eval_set = list(train_set[: cfg.eval_size])
    run.initial = evaluate_actor(run.actor, eval_set, cache)
    best_score = run.initial["mean_reward"]
    best_params = actor.copy()
    t_env = t_learn = 0.0
    critic_steps = 0

    for ep in range(1, cfg.episodes + 1):
        i = int(rng.integers(len(train_set)))
        s = X[i]
        t0 = time.perf_counter()
        if ep <= cfg.warmup:
            u = rng.uniform(box.eta, box.tau)
        else:
            y = fwd(a_arch, actor, s) + rng.normal(0.0, cfg.exploration_noise_sigma, size=m)
            u = squeeze(y, box, cfg.kind)
        r = cache.reward(train_set[i], u)
        if cfg.reward_floor is not None:
            r = max(r, cfg.reward_floor)
        buf.add(s, u, r, done=True)
        t1 = time.perf_counter()
        t_env += t1 - t0

        if len(buf) >= cfg.batch_size:
            S, A, R, D = buf.sample(rng, cfg.batch_size)
            target = R.copy()
            if cfg.discount > 0:
                # continuing formulation: the next state is the same instance
                y_next = fwd(a_arch, actor_t, S)
                noise = np.clip(rng.normal(0.0, cfg.target_smoothing_sigma, size=y_next.shape),
                                -cfg.noise_clip, cfg.noise_clip)
                A_next = squeeze(y_next + noise, box, cfg.kind)
                SA_next = np.hstack([S, A_next])
                q_next = np.minimum(forward_relu(c_arch, critics_t[0], SA_next)[:, 0],
                                    forward_relu(c_arch, critics_t[1], SA_next)[:, 0])
                target = R + cfg.discount * (1.0 - D) * q_next
            SA = np.hstack([S, A])
            losses = []
            for k in range(2):
                q = forward_relu(c_arch, critics[k], SA)[:, 0]
                err = q - target
                before = float(np.mean(err**2))
                g = backprop_relu(c_arch, critics[k], SA, (2.0 / len(err)) * err[:, None])
                critics[k] = c_opts[k].step(critics[k], g)
                after = float(np.mean((forward_relu(c_arch, critics[k], SA)[:, 0] - target) ** 2))
                losses.append((before, after))
            run.critic_losses.extend(losses)
            critic_steps += 1

            if critic_steps % cfg.policy_delay == 0:
                y_pi = fwd(a_arch, actor, S)
                A_pi = squeeze(y_pi, box, cfg.kind)
                SA_pi = np.hstack([S, A_pi])
                _, gin = backprop_relu(c_arch, critics[0], SA_pi, np.full((len(S), 1), 1.0 / len(S)),
                                       return_input_grad=True)
                dq_du = gin[:, d:]
                up = _squeeze_pullback(y_pi, dq_du, box, cfg.kind)
                # gradient ascent on Q
                g_actor = actor_back(a_arch, actor, S, -up)
                actor = a_opt.step(actor, g_actor)
                p = cfg.polyak
                actor_t = p * actor_t + (1 - p) * actor
                critics_t = [p * ct + (1 - p) * c for ct, c in zip(critics_t, critics)]
        t_learn += time.perf_counter() - t1

        if ep % cfg.eval_every == 0 or ep == cfg.episodes:
            stats = evaluate_actor(export(actor), eval_set, cache)
            run.history.append({"epoch": ep, **stats})
            log.info("td3 episode %d: mean reward %.4f, mean tree %.1f", ep, stats["mean_reward"],
                     stats["mean_tree_size"])
            if stats["mean_reward"] > best_score:
                best_score, best_params = stats["mean_reward"], actor.copy()

    run.actor = export(best_params if cfg.keep_best else actor)
    run.timings.update(environment=t_env, learner=t_learn, total=time.perf_counter() - t_start)
    return run


# --- cross-entropy method -------------------------------------------------------


@dataclass(frozen=True)
class CemConfig:
    hidden: tuple[int, ...] = (64, 64)
    iterations: int = 20
    population: int = 16
    elite_frac: float = 0.25
    init_std: float = 0.1
    minibatch: int = 32
    seed: int = 0
    kind: str = "crelu"


def refit(samples: np.ndarray, scores: np.ndarray, elite_frac: float, var_floor: float = 1e-6):
    """Mean and variance of the top ``elite_frac`` samples (stable order on ties)."""
    n_elite = max(1, int(round(elite_frac * len(samples))))
    order = np.argsort(-scores, kind="stable")[:n_elite]
    elite = samples[order]
    return elite.mean(axis=0), np.maximum(elite.var(axis=0), var_floor)


def derivative_free_train(
    train_set: Sequence[IlpInstance], arch: NetworkArch | None = None, spec: RewardSpec = RewardSpec(),
    iterations: int = 20, population: int = 16, elite_frac: float = 0.25, seed: int = 0,
    cfg: CemConfig | None = None, cache: ScoreCache | None = None,
) -> TrainRun:
    """Cross-entropy search over flat actor parameters; returns the best actor seen."""
    if population < 2:
        raise ValueError("population must be >= 2")
    if not 0 < elite_frac <= 1:
        raise ValueError("elite_frac must lie in (0, 1]")
    cfg = cfg or CemConfig(iterations=iterations, population=population, elite_frac=elite_frac, seed=seed)
    m, n = _check_train_set(train_set)
    t_start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    cache = cache or ScoreCache(spec)
    X_raw = encode_batch(train_set)
    norm = Standardizer.fit(X_raw)
    X = norm(X_raw)
    arch = arch or NetworkArch((X.shape[1], *cfg.hidden, m))
    box = ParamBox.unit(m)
    mean = init_params(arch, rng)
    var = np.full(arch.W, cfg.init_std**2)
    best_params, best_score = mean.copy(), -np.inf

    run = TrainRun(cfg, Actor(arch, norm.fold_into(arch, mean), cfg.kind, "relu", box))
    for it in range(1, cfg.iterations + 1):
        samples = mean + np.sqrt(var) * rng.standard_normal((cfg.population, arch.W))
        batch = rng.choice(len(train_set), size=min(cfg.minibatch, len(train_set)), replace=False)
        batch.sort()
        scores, sizes = np.empty(cfg.population), np.empty(cfg.population)
        for k, params in enumerate(samples):
            U = squeeze(forward_relu(arch, params, X[batch]), box, cfg.kind)
            ts = [cache.tree_size(train_set[i], u) for i, u in zip(batch, U)]
            base = [cache.baseline(train_set[i]) for i in batch]
            scores[k] = np.mean([reward_from_sizes(b0, t) for b0, t in zip(base, ts)])
            sizes[k] = np.mean(ts)
        top = int(np.argmax(scores))
        if scores[top] > best_score:
            best_score, best_params = float(scores[top]), samples[top].copy()
        mean, var = refit(samples, scores, cfg.elite_frac)
        run.history.append({
            "epoch": it, "mean_reward": float(scores[top]), "mean_tree_size": float(sizes[top]),
            "best_seen_reward": best_score,
        })
        log.info("cem iteration %d: best %.4f", it, best_score)
    run.actor = Actor(arch, norm.fold_into(arch, best_params), cfg.kind, "relu", box)
    run.timings["total"] = time.perf_counter() - t_start
    return run


# --- evaluation -------------------------------------------------------------


@dataclass
class EvalStats:
    mean_tree_size: float
    median_tree_size: float
    mean_reward: float
    mean_baseline: float
    table: list[dict]


def evaluate_policy(
    actor: Actor, test_set: Sequence[IlpInstance], spec: RewardSpec = RewardSpec(),
    cache: ScoreCache | None = None,
) -> EvalStats:
    """Greedy (noise-free) evaluation of an actor on a test set."""
    if not test_set:
        raise ValueError("empty test set")
    X = encode_batch(test_set)
    if X.shape[1] != actor.arch.d_in or test_set[0].m != actor.arch.d_out:
        raise ValueError(
            f"actor {actor.arch.widths} does not fit instances with d={X.shape[1]}, m={test_set[0].m}"
        )
    cache = cache or ScoreCache(spec)
    U = actor.act(X)
    table = []
    for i, (inst, u) in enumerate(zip(test_set, U)):
        base = cache.baseline(inst)
        size = cache.tree_size(inst, u)
        table.append({
            "index": i, "baseline_tree_size": base, "tree_size": size,
            "reward": reward_from_sizes(base, size), "u": tuple(float(v) for v in u),
        })
    sizes = np.array([row["tree_size"] for row in table], dtype=float)
    return EvalStats(
        float(sizes.mean()), float(np.median(sizes)),
        float(np.mean([row["reward"] for row in table])),
        float(np.mean([row["baseline_tree_size"] for row in table])),
        table,
    )
