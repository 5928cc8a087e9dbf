"""Deterministic branch-and-bound with cuts added at the root.

Tree size counts every node whose LP relaxation is solved, root included.
Every created child is eventually processed (and counted) unless the cap
stops the search first.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .cuts import Cut, CgSequenceParams, CutPool, candidate_pool, cg_cut, cg_cut_sequence, select_cut
from .ilp import IlpInstance
from .simplex import DEFAULT_MAX_ITER, INT_TOL, LpProblem, solve_lp

PRUNE_TOL = 1e-9


class UnboundedRelaxationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolvePolicy:
    node_selection: str = "best_bound"  # or "dfs"
    branch_rule: str = "most_fractional"  # or "lowest_index"
    integrality_tol: float = INT_TOL
    integral_objective: bool = True

    def __post_init__(self):
        if self.node_selection not in ("best_bound", "dfs"):
            raise ValueError(f"unknown node_selection {self.node_selection!r}")
        if self.branch_rule not in ("most_fractional", "lowest_index"):
            raise ValueError(f"unknown branch_rule {self.branch_rule!r}")


@dataclass(frozen=True)
class SolveBudget:
    tree_cap: int = 10_000
    lp_iteration_cap: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.tree_cap < 1:
            raise ValueError("tree_cap must be >= 1")


@dataclass
class BncResult:
    status: str  # "optimal" | "infeasible" | "capped"
    value: float
    incumbent: tuple[int, ...] | None
    tree_size: int
    trace: list[str] = field(default_factory=list, repr=False)

    @property
    def capped(self) -> bool:
        return self.status == "capped"


def _pick_branch_var(x: np.ndarray, policy: SolvePolicy) -> int:
    frac = x - np.floor(x)
    dist = np.minimum(frac, 1.0 - frac)
    cand = np.flatnonzero(dist > policy.integrality_tol)
    if policy.branch_rule == "lowest_index":
        return int(cand[0])
    # most fractional: |frac - 0.5| minimal, lowest index on ties
    score = np.abs(frac[cand] - 0.5)
    return int(cand[np.argmin(score)])


def _fmt_bound(v: float) -> str:
    return "-inf" if v == -math.inf else f"{v:.10g}"


def branch_and_bound(
    inst: IlpInstance,
    root_cuts: Sequence[Cut] = (),
    policy: SolvePolicy = SolvePolicy(),
    budget: SolveBudget = SolveBudget(),
    trace: bool = False,
) -> BncResult:
    n = inst.n
    tol = policy.integrality_tol
    integral_obj = policy.integral_objective and inst.integral_objective
    prune_margin = 1.0 - PRUNE_TOL if integral_obj else PRUNE_TOL
    cuts = tuple(c for c in root_cuts if not c.is_vacuous or c.beta < 0)
    # the LP row matrix is fixed for the whole tree; only bounds change
    base_problem = LpProblem(inst, cuts)

    incumbent_val = -math.inf
    incumbent = None
    log: list[str] = []
    next_id = 1
    # open nodes: (priority key, node id, parent id, lower, upper)
    open_nodes: list = []
    root = (0, -1, np.zeros(n), np.full(n, np.inf))
    if policy.node_selection == "best_bound":
        heapq.heappush(open_nodes, ((-math.inf, 0), root))
    else:
        open_nodes.append(root)
    processed = 0

    while open_nodes:
        if processed >= budget.tree_cap:
            return BncResult(
                "capped", incumbent_val if incumbent is not None else math.nan,
                incumbent, budget.tree_cap, log,
            )
        if policy.node_selection == "best_bound":
            _, node = heapq.heappop(open_nodes)
        else:
            node = open_nodes.pop()
        node_id, parent, lo, hi = node
        p = LpProblem(inst, cuts, lo, hi) if processed else base_problem
        res = solve_lp(p, budget.lp_iteration_cap)
        processed += 1
        if res.status == "unbounded":
            raise UnboundedRelaxationError("LP relaxation is unbounded")
        if res.status == "infeasible":
            if trace:
                log.append(f"node {node_id} parent {parent} bound -inf status infeasible")
            continue
        val = res.value
        if incumbent is not None and val < incumbent_val + prune_margin:
            if trace:
                log.append(f"node {node_id} parent {parent} bound {_fmt_bound(val)} status pruned")
            continue
        x = res.x_star
        frac = np.abs(x - np.rint(x))
        if np.all(frac <= tol):
            xi = tuple(int(v) for v in np.rint(x))
            v_int = float(inst.c_float @ np.rint(x))
            if incumbent is None or v_int > incumbent_val + PRUNE_TOL:
                incumbent_val, incumbent = v_int, xi
            if trace:
                log.append(f"node {node_id} parent {parent} bound {_fmt_bound(val)} status leaf")
            continue
        j = _pick_branch_var(x, policy)
        fl = math.floor(x[j])
        if trace:
            log.append(f"node {node_id} parent {parent} bound {_fmt_bound(val)} status branch")
        hi_down = hi.copy()
        hi_down[j] = fl
        lo_up = lo.copy()
        lo_up[j] = fl + 1
        down = (next_id, node_id, lo, hi_down)
        up = (next_id + 1, node_id, lo_up, hi)
        next_id += 2
        if policy.node_selection == "best_bound":
            heapq.heappush(open_nodes, ((-val, down[0]), down))
            heapq.heappush(open_nodes, ((-val, up[0]), up))
        else:
            # the "<=" child is processed first
            open_nodes.append(up)
            open_nodes.append(down)

    if incumbent is None:
        return BncResult("infeasible", -math.inf, None, processed, log)
    return BncResult("optimal", incumbent_val, incumbent, processed, log)


# --- score functions ---------------------------------------------------------


def f_cg(inst: IlpInstance, u, policy: SolvePolicy = SolvePolicy(), budget: SolveBudget = SolveBudget()) -> int:
    """Tree size with the CG cut of multiplier ``u`` added at the root."""
    return branch_and_bound(inst, [cg_cut(inst, u)], policy, budget).tree_size


def f_cg_k(
    inst: IlpInstance, params: CgSequenceParams,
    policy: SolvePolicy = SolvePolicy(), budget: SolveBudget = SolveBudget(),
) -> int:
    return branch_and_bound(inst, cg_cut_sequence(inst, params), policy, budget).tree_size


def f_row(
    inst: IlpInstance, pool_index: int,
    policy: SolvePolicy = SolvePolicy(), budget: SolveBudget = SolveBudget(),
    pool: CutPool | None = None,
) -> int:
    if pool is None:
        pool = candidate_pool(inst)
    if not pool.cuts:
        raise ValueError("empty cut pool")
    if not 0 <= pool_index < len(pool.cuts):
        raise IndexError(f"pool index {pool_index} out of range for pool of size {len(pool.cuts)}")
    return branch_and_bound(inst, [pool.cuts[pool_index]], policy, budget).tree_size


class SelectionScore(NamedTuple):
    tree_size: int
    index: int  # -1 when the pool was empty
    empty_pool: bool


def f_s(
    inst: IlpInstance, mu: float,
    policy: SolvePolicy = SolvePolicy(), budget: SolveBudget = SolveBudget(),
    pool: CutPool | None = None,
) -> SelectionScore:
    """Tree size after adding the pool cut with the best ``mu``-weighted score.

    An empty pool falls back to the no-cut tree size and sets ``empty_pool``.
    """
    if pool is None:
        pool = candidate_pool(inst)
    if not pool.cuts:
        return SelectionScore(branch_and_bound(inst, (), policy, budget).tree_size, -1, True)
    idx = select_cut(pool, inst, mu)
    return SelectionScore(branch_and_bound(inst, [pool.cuts[idx]], policy, budget).tree_size, idx, False)


def brute_force_optimum(inst: IlpInstance, box_bound: int) -> tuple[float, tuple[int, ...] | None]:
    """Best objective over enumerated integer points (ties: first in lexicographic order)."""
    from .cuts import enumerate_feasible

    pts = enumerate_feasible(inst, box_bound)
    if len(pts) == 0:
        return -math.inf, None
    vals = pts @ inst.c_float
    i = int(np.argmax(vals))
    return float(vals[i]), tuple(int(v) for v in pts[i])
