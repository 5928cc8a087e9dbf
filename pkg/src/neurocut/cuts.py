"""Chvátal-Gomory and Gomory mixed-integer cuts, validity checks and scoring."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from typing import Sequence

import numpy as np

from .ilp import IlpInstance
from .simplex import INT_TOL, LpProblem, TableauRow, fractional_tableau_rows, solve_lp

SNAP_TOL = 1e-9
ENUM_BUDGET = 10**7


@dataclass(frozen=True, eq=False)
class Cut:
    """The inequality ``alpha^T x <= beta``.

    ``provenance`` is one of ``("cg", u)``, ``("gmi", basic_var)`` or
    ``("pool", index)``.
    """

    alpha: tuple[Fraction, ...]
    beta: Fraction
    provenance: tuple = ("cg", ())

    @cached_property
    def alpha_float(self) -> np.ndarray:
        return np.array([float(v) for v in self.alpha])

    @property
    def key(self) -> tuple:
        return (self.alpha, self.beta)

    @property
    def is_vacuous(self) -> bool:
        return all(v == 0 for v in self.alpha)

    def __eq__(self, other):
        if not isinstance(other, Cut):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def format(self) -> str:
        lhs = " ".join(_fmt(v) for v in self.alpha)
        kind, tag = self.provenance
        if kind == "cg":
            tag = ",".join(repr(float(v)) for v in tag)
        return f"cut: {lhs} <= {_fmt(self.beta)} # {kind}({tag})"


def _fmt(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


class Multiplier(tuple):
    """CG multiplier vector with entries in [0, 1]."""

    def __new__(cls, values):
        vals = tuple(float(v) for v in values)
        for v in vals:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"multiplier entry {v} outside [0, 1]")
        return super().__new__(cls, vals)


@dataclass(frozen=True)
class CgSequenceParams:
    blocks: tuple[tuple[float, ...], ...]

    @property
    def k(self) -> int:
        return len(self.blocks)

    @classmethod
    def from_flat(cls, flat: Sequence[float], m: int, k: int) -> "CgSequenceParams":
        need = m * k + k * (k - 1) // 2
        if len(flat) != need:
            raise ValueError(f"expected {need} parameters for m={m}, k={k}, got {len(flat)}")
        blocks, pos = [], 0
        for i in range(k):
            blocks.append(tuple(flat[pos : pos + m + i]))
            pos += m + i
        return cls(tuple(blocks))

    def flat(self) -> tuple[float, ...]:
        return tuple(v for blk in self.blocks for v in blk)


def _snap_floor(values: np.ndarray, snap_tol: float) -> np.ndarray:
    r = np.rint(values)
    snapped = np.where(np.abs(values - r) <= snap_tol, r, values)
    return np.floor(snapped)


def _cg_from_rows(A: np.ndarray, b: np.ndarray, u: np.ndarray, snap_tol: float):
    alpha = _snap_floor(u @ A, snap_tol)
    beta = _snap_floor(np.array([u @ b]), snap_tol)[0]
    return alpha, beta


def cg_cut(inst: IlpInstance, u, snap_tol: float = SNAP_TOL) -> Cut:
    """``floor(u^T A) x <= floor(u^T b)`` with near-integers snapped before flooring."""
    u = np.asarray(u, dtype=float)
    if u.shape != (inst.m,):
        raise ValueError(f"multiplier has shape {u.shape}, instance has {inst.m} rows")
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("multiplier entries must lie in [0, 1]")
    alpha, beta = _cg_from_rows(inst.A_float, inst.b_float, u, snap_tol)
    return Cut(tuple(Fraction(int(v)) for v in alpha), Fraction(int(beta)), ("cg", tuple(u.tolist())))


def cg_cut_sequence(inst: IlpInstance, params: CgSequenceParams, snap_tol: float = SNAP_TOL) -> list[Cut]:
    """Cut ``i`` aggregates the original rows and cuts ``1..i-1`` with block ``i``."""
    A, b = inst.A_float, inst.b_float
    cuts = []
    for i, blk in enumerate(params.blocks):
        u = np.asarray(blk, dtype=float)
        if u.shape != (inst.m + i,):
            raise ValueError(f"block {i} has length {len(blk)}, expected {inst.m + i}")
        if np.any(u < 0) or np.any(u > 1):
            raise ValueError("multiplier entries must lie in [0, 1]")
        alpha, beta = _cg_from_rows(A, b, u, snap_tol)
        cuts.append(Cut(tuple(Fraction(int(v)) for v in alpha), Fraction(int(beta)), ("cg", tuple(u.tolist()))))
        A = np.vstack([A, alpha[None, :]])
        b = np.append(b, beta)
    return cuts


def _frac(v: Fraction) -> Fraction:
    return v - math.floor(v)


def gmi_cut(inst: IlpInstance, row: TableauRow, extra_cuts: Sequence[Cut] = (), tol: float = INT_TOL) -> Cut:
    """Gomory mixed-integer cut from a tableau row, mapped back to x-space.

    Slack variables of rows with integral data are treated as integer
    variables; slacks of fractional rows are continuous. All nonbasic variables
    are assumed to sit at their lower bound of zero.
    """
    n = inst.n
    f0 = _frac(row.rhs)
    if not tol < f0 < 1 - tol:
        raise ValueError(f"tableau row rhs {float(row.rhs)} is (near-)integral")
    A = [list(r) for r in inst.A] + [list(c.alpha) for c in extra_cuts]
    b = list(inst.b) + [c.beta for c in extra_cuts]
    r = len(A)
    if len(row.coeffs) != n + r:
        raise ValueError("tableau row does not match the instance plus cuts")
    integral_row = [all(v.denominator == 1 for v in A[i]) and b[i].denominator == 1 for i in range(r)]
    one_minus = 1 - f0
    pi = [Fraction(0)] * (n + r)
    for j in row.nonbasic:
        a = row.coeffs[j]
        is_int = j < n or integral_row[j - n]
        if is_int:
            fj = _frac(a)
            pi[j] = fj / f0 if fj <= f0 else (1 - fj) / one_minus
        else:
            pi[j] = a / f0 if a >= 0 else -a / one_minus
    # sum pi_j x_j + sum pi_s s_i >= 1 with s_i = b_i - A_i x
    lhs = pi[:n]
    rhs = Fraction(1)
    for i in range(r):
        p = pi[n + i]
        if p == 0:
            continue
        rhs -= p * b[i]
        for j in range(n):
            lhs[j] -= p * A[i][j]
    alpha = tuple(-v for v in lhs)
    return Cut(alpha, -rhs, ("gmi", row.basic_var))


def normalize(cut: Cut) -> Cut:
    """Scale to coprime integer coefficients (positive factor, sense preserved)."""
    vals = list(cut.alpha) + [cut.beta]
    lcm = _lcm_den(vals)
    ints = [int(v * lcm) for v in vals]
    g = reduce(math.gcd, (abs(v) for v in ints), 0)
    if g == 0:
        return Cut(cut.alpha, cut.beta, cut.provenance)
    ints = [v // g for v in ints]
    return Cut(tuple(Fraction(v) for v in ints[:-1]), Fraction(ints[-1]), cut.provenance)


def enumerate_feasible(inst: IlpInstance, box_bound: int, budget: int = ENUM_BUDGET) -> np.ndarray:
    """All integer ``x`` in ``{0..box_bound}^n`` with ``Ax <= b`` (exact)."""
    n = inst.n
    total = (box_bound + 1) ** n
    if total > budget:
        raise ValueError(f"enumeration of {total} points exceeds budget {budget}")
    grid = np.array(list(itertools.product(range(box_bound + 1), repeat=n)), dtype=np.int64).reshape(-1, n)
    # exact check: scale each row to integers
    keep = np.ones(len(grid), dtype=bool)
    for row, bi in zip(inst.A, inst.b):
        den = _lcm_den([*row, bi])
        coeffs = [int(v * den) for v in row]
        if max(map(abs, coeffs), default=0) * max(box_bound, 1) * n < 2**62:
            lhs = grid @ np.array(coeffs, dtype=np.int64)
        else:
            lhs = grid.astype(object) @ np.array(coeffs, dtype=object)
        keep &= np.asarray(lhs <= int(bi * den), dtype=bool)
    return grid[keep]


def _lcm_den(vals) -> int:
    return reduce(lambda acc, v: acc * v.denominator // math.gcd(acc, v.denominator), vals, 1)


def cut_holds(cut: Cut, points: np.ndarray) -> np.ndarray:
    """Exact check of ``alpha^T x <= beta`` for each integer row of ``points``."""
    den = _lcm_den([*cut.alpha, cut.beta])
    a = [int(v * den) for v in cut.alpha]
    beta = int(cut.beta * den)
    if all(abs(v) < 2**31 for v in a) and len(points) and np.abs(points).max() < 2**20:
        lhs = points @ np.array(a, dtype=np.int64)
        return lhs <= beta
    return np.array([sum(int(x) * ai for x, ai in zip(p, a)) <= beta for p in points], dtype=bool)


def cut_is_valid(inst: IlpInstance, cut: Cut, box_bound: int, points: np.ndarray | None = None) -> bool:
    if points is None:
        points = enumerate_feasible(inst, box_bound)
    return bool(np.all(cut_holds(cut, points)))


def efficacy(cut: Cut, x_star) -> float:
    """Signed distance by which the cut separates ``x_star``."""
    a = cut.alpha_float
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        raise ValueError("efficacy of a zero-norm cut")
    return (float(a @ np.asarray(x_star, dtype=float)) - float(cut.beta)) / norm


def parallelism(cut: Cut, c) -> float:
    a = cut.alpha_float
    c = np.asarray(c, dtype=float)
    na, nc = float(np.linalg.norm(a)), float(np.linalg.norm(c))
    if na == 0.0 or nc == 0.0:
        raise ValueError("parallelism with a zero-norm vector")
    return min(1.0, abs(float(a @ c)) / (na * nc))


def weighted_score(cut: Cut, inst: IlpInstance, x_star, mu: float) -> float:
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    return mu * efficacy(cut, x_star) + (1.0 - mu) * parallelism(cut, inst.c_float)


@dataclass
class CutPool:
    cuts: list[Cut]
    x_star: np.ndarray | None
    lp_value: float

    def __len__(self):
        return len(self.cuts)


def candidate_pool(inst: IlpInstance, max_iter: int | None = None) -> CutPool:
    """CG and GMI cuts from every fractional row of the optimal root tableau.

    Order: tableau row order, CG before GMI. Vacuous cuts and duplicates (by
    normalized form) are dropped.
    """
    p = LpProblem(inst)
    res = solve_lp(p) if max_iter is None else solve_lp(p, max_iter)
    if res.status != "optimal":
        raise ValueError(f"root relaxation is {res.status}")
    rows = fractional_tableau_rows(res, p)
    cuts: list[Cut] = []
    seen = set()
    for row in rows:
        u = [min(max(float(y), 0.0), 1.0) for y in row.multipliers[: inst.m]]
        for cut in (cg_cut(inst, u), gmi_cut(inst, row)):
            if cut.is_vacuous:
                continue
            cut = normalize(cut)
            if cut.key in seen:
                continue
            seen.add(cut.key)
            cuts.append(cut)
    return CutPool(cuts, res.x_star, res.value)


def select_cut(pool: CutPool, inst: IlpInstance, mu: float) -> int:
    """Index of the highest-scoring pool cut; ties go to the lowest index."""
    if not pool.cuts:
        raise ValueError("empty cut pool")
    best, best_score = 0, -math.inf
    for i, cut in enumerate(pool.cuts):
        s = weighted_score(cut, inst, pool.x_star, mu)
        if s > best_score:
            best, best_score = i, s
    return best
