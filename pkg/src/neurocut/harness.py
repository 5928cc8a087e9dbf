"""Experiment commands: generate, sweep, train, evaluate, bench, bounds, verify.

Each command reads a :class:`RunConfig`, writes CSV files under ``out_dir`` and
returns an exit code. Work is split per instance across worker processes;
results are always aggregated in instance order so outputs do not depend on
the worker count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import complexity as cx
from .bnc import branch_and_bound, brute_force_optimum
from .config import RunConfig
from .cuts import (
    Cut, candidate_pool, cg_cut, cut_is_valid, efficacy, enumerate_feasible, gmi_cut, select_cut,
)
from .ilp import (
    IlpInstance, NormBounds, box_bound, encode, generate_dataset, norm_bounds, random_small_instance,
    read_dataset, write_dataset,
)
from .nn import (
    NetworkArch, ParamBox, crelu, init_params, load_checkpoint, relu, relu_gradient_error,
    save_checkpoint,
)
from .simplex import LpProblem, fractional_tableau_rows, solve_lp
from .training import (
    Actor, ScoreCache, derivative_free_train, reward_from_sizes, td3_train,
)

log = logging.getLogger(__name__)

TRAIN_STREAM, TEST_STREAM = 0, 1
MODES = ("td3", "cem", "ste_lt")


# --- plumbing ----------------------------------------------------------------


def pmap(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Ordered map, optionally over a process pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def write_csv(path: Path, cfg: RunConfig, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.config_hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: Path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _load(path: Path, what: str) -> list[IlpInstance]:
    if not path.exists():
        raise FileNotFoundError(f"{what} dataset {path} not found; run 'generate' first")
    return read_dataset(path)


def mu_grid(step: float) -> list[float]:
    if not 0 < step <= 1:
        raise ValueError("sweep_step must lie in (0, 1]")
    k = int(math.floor(1.0 / step + 1e-9))
    return [round(i * step, 10) for i in range(k + 1)]


# --- generate ------------------------------------------------------------------


def cmd_generate(cfg: RunConfig) -> int:
    gen = cfg.generator
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    write_dataset(cfg.train_file, generate_dataset(gen, cfg.n_train, TRAIN_STREAM))
    write_dataset(cfg.test_file, generate_dataset(gen, cfg.n_test, TEST_STREAM))
    log.info("wrote %d train and %d test instances", cfg.n_train, cfg.n_test)
    return 0


# --- sweep -----------------------------------------------------------------------


@dataclass(frozen=True)
class _SweepJob:
    inst: IlpInstance
    mus: tuple[float, ...]
    cfg: RunConfig


def _sweep_one(job: _SweepJob) -> tuple[int, list[int]]:
    """No-cut size plus the tree size of the selected pool cut for each mu."""
    cfg = job.cfg
    base = branch_and_bound(job.inst, (), cfg.policy, cfg.budget).tree_size
    pool = candidate_pool(job.inst)
    if not pool.cuts:
        return base, [base] * len(job.mus)
    sizes: dict[int, int] = {}
    out = []
    for mu in job.mus:
        idx = select_cut(pool, job.inst, mu)
        if idx not in sizes:
            sizes[idx] = branch_and_bound(job.inst, [pool.cuts[idx]], cfg.policy, cfg.budget).tree_size
        out.append(sizes[idx])
    return base, out


def sweep_table(cfg: RunConfig, test_set: Sequence[IlpInstance]) -> tuple[list[float], np.ndarray, np.ndarray]:
    mus = tuple(mu_grid(cfg.sweep_step))
    res = pmap(_sweep_one, [_SweepJob(inst, mus, cfg) for inst in test_set], cfg.workers)
    base = np.array([r[0] for r in res], dtype=float)
    sizes = np.array([r[1] for r in res], dtype=float).reshape(len(res), len(mus))
    return list(mus), base, sizes


def cmd_sweep(cfg: RunConfig) -> int:
    test_set = _load(cfg.test_file, "test")
    mus, _, sizes = sweep_table(cfg, test_set)
    means = sizes.mean(axis=0)
    write_csv(cfg.path("sweep.csv"), cfg, ["mu", "mean_tree_size"],
              [(mu, float(v)) for mu, v in zip(mus, means)])
    best = int(np.argmin(means))
    log.info("best mu %.2f: mean tree size %.2f", mus[best], means[best])
    return 0


def best_sweep(cfg: RunConfig) -> tuple[float, float]:
    """``(mu, mean_tree_size)`` of the best row of ``sweep.csv`` (first on ties)."""
    path = cfg.path("sweep.csv")
    if not path.exists():
        cmd_sweep(cfg)
    rows = read_csv(path)
    best = min(rows, key=lambda r: float(r["mean_tree_size"]))
    return float(best["mu"]), float(best["mean_tree_size"])


# --- train -------------------------------------------------------------------------


def checkpoint_path(cfg: RunConfig, mode: str, given: str | None = None) -> Path:
    return Path(given) if given else cfg.path(f"actor_{mode}.ckpt")


def cmd_train(cfg: RunConfig, mode: str = "td3", checkpoint: str | None = None) -> int:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r} (choose from {', '.join(MODES)})")
    train_set = _load(cfg.train_file, "train")
    cache = ScoreCache(cfg.reward_spec)
    if mode == "cem":
        run = derivative_free_train(train_set, spec=cfg.reward_spec, cfg=cfg.cem(), cache=cache)
    else:
        run = td3_train(train_set, cfg.td3("lt" if mode == "ste_lt" else "relu"), cfg.reward_spec, cache)
    ckpt = checkpoint_path(cfg, mode, checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, run.actor.arch, run.actor.params)
    rows = [(h["epoch"], h["mean_reward"], h["mean_tree_size"]) for h in run.history]
    if run.initial is not None:
        rows.insert(0, (0, run.initial["mean_reward"], run.initial["mean_tree_size"]))
    write_csv(cfg.path(f"history_{mode}.csv"), cfg, ["epoch", "mean_reward", "mean_tree_size"], rows)
    log.info("trained %s actor in %.1fs (%d tree solves)", mode, run.timings.get("total", 0.0), cache.solves)
    return 0


# --- evaluate ------------------------------------------------------------------------


def load_actor(cfg: RunConfig, mode: str, checkpoint: str | None = None) -> Actor:
    arch, params = load_checkpoint(checkpoint_path(cfg, mode, checkpoint))
    activation = "lt" if mode == "ste_lt" else "relu"
    return Actor(arch, params, cfg.squeeze, activation, ParamBox.unit(arch.d_out))


@dataclass(frozen=True)
class _EvalJob:
    inst: IlpInstance
    u: tuple[float, ...]
    cfg: RunConfig


def _eval_one(job: _EvalJob) -> tuple[int, int]:
    cache = ScoreCache(job.cfg.reward_spec)
    return cache.baseline(job.inst), cache.tree_size(job.inst, np.array(job.u))


def cmd_evaluate(cfg: RunConfig, mode: str = "td3", checkpoint: str | None = None) -> int:
    test_set = _load(cfg.test_file, "test")
    actor = load_actor(cfg, mode, checkpoint)
    d, m = len(encode(test_set[0]).vec), test_set[0].m
    if actor.arch.d_in != d or actor.arch.d_out != m:
        raise ValueError(f"checkpoint network {actor.arch.widths} does not fit instances with d={d}, m={m}")
    U = actor.act(np.stack([encode(inst).vec for inst in test_set]))
    jobs = [_EvalJob(inst, tuple(float(v) for v in u), cfg) for inst, u in zip(test_set, U)]
    res = pmap(_eval_one, jobs, cfg.workers)
    rows = [(i, b0, t, reward_from_sizes(b0, t), job.u) for i, ((b0, t), job) in enumerate(zip(res, jobs))]
    write_csv(cfg.path(f"eval_{mode}.csv"), cfg,
              ["index", "baseline_tree_size", "tree_size", "reward", "u"], rows)
    base_mean = float(np.mean([r[1] for r in rows]))
    learned_mean = float(np.mean([r[2] for r in rows]))
    mu, sweep_mean = best_sweep(cfg)
    write_csv(cfg.path(f"summary_{mode}.csv"), cfg, ["method", "mean_tree_size", "mu"], [
        ("no_cut", base_mean, ""),
        (f"learned_{mode}", learned_mean, ""),
        ("best_sweep", sweep_mean, mu),
    ])
    log.info("no cut %.2f, learned %.2f, best sweep %.2f (mu=%s)", base_mean, learned_mean, sweep_mean, mu)
    return 0


# --- bench -------------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchResult:
    nn_seconds: float
    lp_seconds: float
    repeats: int

    @property
    def ratio(self) -> float | None:
        if self.repeats == 0 or self.nn_seconds <= 0:
            return None
        return self.lp_seconds / self.nn_seconds


def bench_timing(actor: Actor, test_set: Sequence[IlpInstance], repeats: int) -> BenchResult:
    """Per-instance policy inference (encode + forward + squeeze) against root LP solves."""
    if repeats < 0:
        raise ValueError("repeats must be >= 0")
    t0 = time.perf_counter()
    for _ in range(repeats):
        for inst in test_set:
            actor.act(encode(inst).vec)
    t1 = time.perf_counter()
    for _ in range(repeats):
        for inst in test_set:
            solve_lp(LpProblem(inst))
    t2 = time.perf_counter()
    if repeats == 0:
        return BenchResult(0.0, 0.0, 0)
    return BenchResult(t1 - t0, t2 - t1, repeats)


def cmd_bench(cfg: RunConfig, mode: str = "td3", checkpoint: str | None = None,
              repeats: int | None = None) -> int:
    test_set = _load(cfg.test_file, "test")
    ckpt = checkpoint_path(cfg, mode, checkpoint)
    if ckpt.exists():
        actor = load_actor(cfg, mode, checkpoint)
    else:
        # timing does not depend on the weights; fall back to a fresh network
        d, m = len(encode(test_set[0]).vec), test_set[0].m
        arch = NetworkArch((d, *cfg.hidden, m))
        actor = Actor(arch, init_params(arch, np.random.default_rng(cfg.seed)), cfg.squeeze)
    reps = cfg.bench_repeats if repeats is None else repeats
    res = bench_timing(actor, test_set, reps)
    ratio = "undefined" if res.ratio is None else res.ratio
    write_csv(cfg.path("bench.csv"), cfg, ["task", "total_seconds", "instances", "repeats"], [
        ("nn_forward", res.nn_seconds, len(test_set), reps),
        ("lp_solve", res.lp_seconds, len(test_set), reps),
        ("lp_over_nn", ratio, len(test_set), reps),
    ])
    log.info("nn %.3fs, lp %.3fs, ratio %s", res.nn_seconds, res.lp_seconds, ratio)
    return 0


# --- bounds ------------------------------------------------------------------------------


def bounds_rows(cfg: RunConfig, c0: float = 1.0) -> list[tuple[str, str, float]]:
    """Bound evaluations for the configured instance family and actor shape.

    Norms use the worst case of the generator (every coefficient at its upper
    limit), so the table does not need any data on disk.
    """
    m, n = cfg.n_knapsacks, cfg.n_items
    a_max = Fraction(m * n * cfg.coeff_hi)
    b_max = Fraction(m * (n * cfg.coeff_hi // 2))
    M = cx.m_hyperplanes(NormBounds(a_max, b_max), n)
    arch = NetworkArch((cfg.d, *cfg.hidden, m))
    rows: list[tuple[str, str, float]] = [("hyperplanes_M", f"a={a_max} b={b_max} n={n}", float(M))]
    for k in (1, 2, 3):
        dim = cx.cg_param_dim(m, k)
        arch_k = NetworkArch((cfg.d, *cfg.hidden, dim))
        rows.append((f"pdim_cg_{k}_relu", f"W={arch_k.W} L={arch_k.L} U={arch_k.U} M={M} c0={c0}",
                     cx.pdim_bound_cg_k(arch_k, M, k, c0, "relu")))
        rows.append((f"pdim_cg_{k}_lt", f"W={arch_k.W} U={arch_k.U} M={M} c0={c0}",
                     cx.pdim_bound_cg_k(arch_k, M, k, c0, "lt")))
    pool = 2 * m
    rows.append(("pdim_cut_selection_relu", f"W={arch.W} L={arch.L} U={arch.U} pool={pool} c0={c0}",
                 cx.pdim_bound_cut_selection(arch, pool, c0, "relu")))
    for eps in (0.1, 0.05):
        pdim = cx.pdim_bound_cg_k(arch, M, 1, c0, "relu")
        t = cx.sample_size(cx.SampleSpec(B=1.0, eps=eps, delta=0.05, pdim=pdim))
        rows.append((f"sample_size_eps_{eps}", f"B=1 delta=0.05 pdim={pdim!r} C=1", float(t)))
    return rows


def cmd_bounds(cfg: RunConfig) -> int:
    rows = bounds_rows(cfg)
    path = write_csv(cfg.path("bounds.csv"), cfg, ["bound", "inputs", "value"], rows)
    print(path.read_text(), end="")
    return 0


# --- verify -------------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _small_instances(cfg: RunConfig, count: int, salt: int) -> list[IlpInstance]:
    rng = np.random.default_rng([cfg.seed, salt])
    return [random_small_instance(rng) for _ in range(count)]


def check_bnb_oracle(cfg: RunConfig) -> CheckResult:
    bad = 0
    insts = _small_instances(cfg, cfg.verify_instances, 1)
    for inst in insts:
        res = branch_and_bound(inst)
        opt, _ = brute_force_optimum(inst, box_bound(inst))
        got = res.value if res.status == "optimal" else -math.inf
        bad += got != opt
    return CheckResult("bnb_vs_bruteforce", bad == 0, f"{bad} mismatches over {len(insts)} instances")


def check_cg_validity(cfg: RunConfig) -> CheckResult:
    rng = np.random.default_rng([cfg.seed, 2])
    bad = total = 0
    for inst in _small_instances(cfg, cfg.verify_instances, 2):
        pts = enumerate_feasible(inst, box_bound(inst))
        for _ in range(5):
            cut = cg_cut(inst, rng.uniform(0, 1, inst.m))
            if cfg.inject_fault == "cg_floor":
                cut = Cut(cut.alpha, cut.beta - 1, cut.provenance)
            bad += not cut_is_valid(inst, cut, 0, pts)
            total += 1
    return CheckResult("cg_validity", bad == 0, f"{bad} invalid of {total} cuts")


def check_gmi_validity(cfg: RunConfig) -> CheckResult:
    bad = total = 0
    for inst in _small_instances(cfg, cfg.verify_instances, 3):
        p = LpProblem(inst)
        res = solve_lp(p)
        if res.status != "optimal":
            continue
        pts = enumerate_feasible(inst, box_bound(inst))
        for row in fractional_tableau_rows(res, p):
            cut = gmi_cut(inst, row)
            bad += not (cut_is_valid(inst, cut, 0, pts) and efficacy(cut, res.x_star) > 0)
            total += 1
    return CheckResult("gmi_validity", bad == 0 and total > 0, f"{bad} failures of {total} cuts")


def check_line_scan(cfg: RunConfig) -> CheckResult:
    rng = np.random.default_rng([cfg.seed, 4])
    worst, bad = 0.0, 0
    for inst in _small_instances(cfg, max(1, cfg.verify_instances // 8), 4):
        M = cx.m_hyperplanes(norm_bounds(inst), inst.n)
        memo: dict = {}
        for _ in range(cfg.verify_segments):
            a, b = rng.uniform(0, 1, inst.m), rng.uniform(0, 1, inst.m)
            k = cx.line_scan_pieces(inst, a, b, cfg.verify_samples, memo=memo)
            worst = max(worst, k / M)
            bad += k > M
    return CheckResult("line_scan_pieces", bad == 0, f"max pieces/M = {worst:.4f}")


def check_sign_patterns(cfg: RunConfig) -> CheckResult:
    arch = NetworkArch((1, 1, 1))
    X = np.random.default_rng([cfg.seed, 5]).standard_normal((3, 1))
    res = cx.count_sign_patterns(arch, X, 10_000, seed=cfg.seed)
    return CheckResult("sign_patterns", res.holds, f"{res.distinct_count} <= {res.bound:.4f}")


def check_relu_gradient(cfg: RunConfig) -> CheckResult:
    rng = np.random.default_rng([cfg.seed, 6])
    worst = 0.0
    for _ in range(10):
        widths = (int(rng.integers(1, 5)), int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(1, 4)))
        arch = NetworkArch(widths)
        params = rng.standard_normal(arch.W)
        x = rng.standard_normal((3, arch.d_in))
        up = rng.standard_normal((3, arch.d_out))
        err, _ = relu_gradient_error(arch, params, x, up)
        worst = max(worst, err)
    return CheckResult("relu_gradient", worst <= 1e-4, f"max relative error {worst:.2e}")


def check_crelu_identity(cfg: RunConfig) -> CheckResult:
    t = np.linspace(-3, 3, 1000)
    gap = float(np.max(np.abs(crelu(t) - (relu(t) - relu(t - 1)))))
    return CheckResult("crelu_identity", gap == 0.0, f"max gap {gap!r}")


def check_sample_size(cfg: RunConfig) -> CheckResult:
    t = cx.sample_size(cx.SampleSpec(B=1.0, eps=0.1, delta=0.5, pdim=10))
    return CheckResult("sample_size_formula", t == 2372, f"got {t}")


CHECKS: list[Callable[[RunConfig], CheckResult]] = [
    check_bnb_oracle, check_cg_validity, check_gmi_validity, check_line_scan,
    check_sign_patterns, check_relu_gradient, check_crelu_identity, check_sample_size,
]


def run_checks(cfg: RunConfig) -> list[CheckResult]:
    out = []
    for check in CHECKS:
        try:
            out.append(check(cfg))
        except Exception as exc:  # a crashing check is a failing check
            out.append(CheckResult(check.__name__.removeprefix("check_"), False, f"error: {exc}"))
    return out


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.inject_fault not in ("", "cg_floor"):
        raise ValueError(f"unknown fault {cfg.inject_fault!r}")
    results = run_checks(cfg)
    path = write_csv(cfg.path("verify.csv"), cfg, ["check", "passed", "detail"],
                     [(r.name, "pass" if r.passed else "FAIL", r.detail) for r in results])
    print(path.read_text(), end="")
    return 0 if all(r.passed for r in results) else 1
