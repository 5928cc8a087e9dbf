"""Bounded primal revised simplex for LP relaxations of pure ILPs.

Solves ``max c^T x  s.t.  A x <= b, lo <= x <= hi`` where the rows are the
instance rows followed by any extra cuts. Each row gets a slack ``s >= 0`` so
the working system is ``[A I] (x, s) = b``. Rows whose slack would start
negative receive an artificial variable for phase one.

Pricing is Dantzig (largest reduced cost, lowest index on ties); after
``BLAND_STALL`` consecutive degenerate pivots the solver switches to Bland's
rule for the rest of the phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .ilp import IlpInstance

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
INT_TOL = 1e-6
PIVOT_TOL = 1e-9
BLAND_STALL = 50
DEFAULT_MAX_ITER = 5000
REFACTOR_EVERY = 40


class LpStallError(RuntimeError):
    """The simplex made no progress within the iteration cap."""


@dataclass(frozen=True)
class LpProblem:
    base: IlpInstance
    extra_cuts: tuple = ()
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        for cut in self.extra_cuts:
            if len(cut.alpha) != self.base.n:
                raise ValueError(f"cut has {len(cut.alpha)} coefficients, instance has {self.base.n} columns")

    @property
    def num_rows(self) -> int:
        return self.base.m + len(self.extra_cuts)

    def row_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.extra_cuts:
            return self.base.A_float, self.base.b_float
        A = np.vstack([self.base.A_float] + [cut.alpha_float[None, :] for cut in self.extra_cuts])
        b = np.concatenate([self.base.b_float, [float(cut.beta) for cut in self.extra_cuts]])
        return A, b

    def exact_rows(self) -> tuple[list[list[Fraction]], list[Fraction]]:
        A = [list(row) for row in self.base.A] + [list(cut.alpha) for cut in self.extra_cuts]
        b = list(self.base.b) + [cut.beta for cut in self.extra_cuts]
        return A, b


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x_star: np.ndarray | None
    value: float
    basis: tuple[int, ...]  # indices into structural (0..n-1) then slack (n..n+r-1) variables
    iterations: int
    duals: np.ndarray | None = field(default=None, repr=False)
    at_upper: tuple[int, ...] = ()

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True)
class TableauRow:
    """``x_basic + sum_j coeffs[j] * x_j = rhs`` over structural+slack columns.

    ``coeffs`` is dense over all ``n + r`` columns with zeros at basic columns.
    ``multipliers`` are the row-aggregation weights ``y`` with the row equal to
    ``y^T [A I] = y^T b``.
    """

    basic_var: int
    rhs: Fraction
    coeffs: tuple[Fraction, ...]
    nonbasic: tuple[int, ...]
    multipliers: tuple[Fraction, ...]


class _Simplex:
    def __init__(self, A, b, c, lo, hi, max_iter):
        r, n = A.shape
        self.n, self.r = n, r
        self.max_iter = max_iter
        self.iterations = 0
        # phase-one start: structurals at lower bound (upper if lower is -inf is not supported)
        resid = b - A @ lo
        art_rows = [i for i in range(r) if resid[i] < -FEAS_TOL]
        k = len(art_rows)
        N = n + r + k
        M = np.zeros((r, N))
        M[:, :n] = A
        M[:, n : n + r] = np.eye(r)
        for j, i in enumerate(art_rows):
            M[i, n + r + j] = -1.0
        self.M = M
        self.b = b
        self.lo = np.concatenate([lo, np.zeros(r + k)])
        self.hi = np.concatenate([hi, np.full(r, np.inf), np.full(k, np.inf)])
        self.c2 = np.concatenate([c, np.zeros(r + k)])
        self.num_art = k
        basis = list(range(n, n + r))
        for j, i in enumerate(art_rows):
            basis[i] = n + r + j
        self.basis = np.array(basis, dtype=int)
        self.x = self.lo.copy()
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[self.basis] = True
        self._refactor()

    def _refactor(self):
        self.Binv = np.linalg.inv(self.M[:, self.basis])
        nb = ~self.is_basic
        self.x[self.basis] = self.Binv @ (self.b - self.M[:, nb] @ self.x[nb])
        self.since_refactor = 0

    def run(self, c) -> str:
        """Optimize objective ``c`` from the current basic feasible solution."""
        degenerate = 0
        bland = False
        M, lo, hi = self.M, self.lo, self.hi
        while True:
            if self.iterations >= self.max_iter:
                raise LpStallError(f"no optimum after {self.iterations} simplex iterations")
            y = c[self.basis] @ self.Binv
            d = c - y @ M
            d[self.is_basic] = 0.0
            x = self.x
            can_up = (d > OPT_TOL) & (x < hi - FEAS_TOL)
            can_down = (d < -OPT_TOL) & (x > lo + FEAS_TOL)
            elig = np.flatnonzero(can_up | can_down)
            if elig.size == 0:
                self.duals = y
                return "optimal"
            if bland:
                q = int(elig[0])
            else:
                q = int(elig[np.argmax(np.abs(d[elig]))])
            direction = 1.0 if d[q] > 0 else -1.0
            col = self.Binv @ M[:, q]
            # basic variables move by -direction * t * col
            delta = -direction * col
            xb = x[self.basis]
            lb, ub = lo[self.basis], hi[self.basis]
            t_best = hi[q] - lo[q]
            leave = -1
            leave_to_upper = False
            best_piv = 0.0
            for i in range(self.r):
                di = delta[i]
                if di < -PIVOT_TOL:
                    t = max((xb[i] - lb[i]) / -di, 0.0)
                    to_upper = False
                elif di > PIVOT_TOL and ub[i] < np.inf:
                    t = max((ub[i] - xb[i]) / di, 0.0)
                    to_upper = True
                else:
                    continue
                if t < t_best - 1e-12:
                    take = True
                elif t <= t_best + 1e-12 and leave >= 0:
                    if bland:
                        take = self.basis[i] < self.basis[leave]
                    else:
                        take = abs(di) > best_piv + 1e-12 or (
                            abs(di) >= best_piv - 1e-12 and self.basis[i] < self.basis[leave]
                        )
                else:
                    take = False
                if take:
                    t_best, leave, leave_to_upper, best_piv = t, i, to_upper, abs(di)
            if not np.isfinite(t_best):
                return "unbounded"
            self.iterations += 1
            if t_best <= 1e-12:
                degenerate += 1
                if degenerate >= BLAND_STALL:
                    bland = True
            else:
                degenerate = 0
            x[self.basis] = xb + t_best * delta
            x[q] = x[q] + direction * t_best
            if leave < 0:
                # bound flip of the entering variable
                x[q] = hi[q] if direction > 0 else lo[q]
                continue
            out = self.basis[leave]
            x[out] = hi[out] if leave_to_upper else lo[out]
            self._pivot(leave, q, col)

    def _pivot(self, row, q, col):
        out = self.basis[row]
        self.basis[row] = q
        self.is_basic[out] = False
        self.is_basic[q] = True
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self._refactor()
            return
        piv = col[row]
        Binv = self.Binv
        prow = Binv[row] / piv
        Binv -= np.outer(col, prow)
        Binv[row] = prow

    def drive_out_artificials(self):
        """Pivot zero-valued artificials out of the basis where possible."""
        first_art = self.n + self.r
        for row in range(self.r):
            if self.basis[row] < first_art:
                continue
            tab_row = self.Binv[row] @ self.M
            for j in range(first_art):
                if not self.is_basic[j] and abs(tab_row[j]) > 1e-7:
                    col = self.Binv @ self.M[:, j]
                    self._pivot(row, j, col)
                    break
        self._refactor()


def solve_lp(p: LpProblem, max_iter: int = DEFAULT_MAX_ITER) -> LpResult:
    A, b = p.row_matrix()
    n = p.base.n
    c = p.base.c_float
    lo = np.zeros(n) if p.lower is None else np.asarray(p.lower, dtype=float)
    hi = np.full(n, np.inf) if p.upper is None else np.asarray(p.upper, dtype=float)
    if np.any(lo > hi + FEAS_TOL):
        return LpResult("infeasible", None, float("-inf"), (), 0)
    spx = _Simplex(A, b, c, lo, hi, max_iter)
    r = spx.r
    if spx.num_art:
        c1 = np.zeros(n + r + spx.num_art)
        c1[n + r :] = -1.0
        spx.run(c1)
        if spx.x[n + r :].sum() > FEAS_TOL * max(1.0, float(np.abs(b).max())):
            return LpResult("infeasible", None, float("-inf"), (), spx.iterations)
        spx.hi[n + r :] = 0.0
        spx.x[n + r :] = np.clip(spx.x[n + r :], 0.0, 0.0)
        spx.drive_out_artificials()
    status = spx.run(spx.c2)
    if status == "unbounded":
        return LpResult("unbounded", None, float("inf"), tuple(int(i) for i in spx.basis), spx.iterations)
    x_star = spx.x[:n].copy()
    at_upper = tuple(
        int(j) for j in range(n + r) if not spx.is_basic[j] and spx.hi[j] < np.inf and spx.x[j] == spx.hi[j]
    )
    return LpResult(
        "optimal", x_star, float(c @ x_star), tuple(int(i) for i in spx.basis), spx.iterations,
        duals=spx.duals[:r].copy(), at_upper=at_upper,
    )


def _solve_transposed_exact(B: list[list[Fraction]], k: int) -> list[Fraction]:
    """Row ``k`` of ``B^{-1}``, i.e. ``y`` with ``y^T B = e_k^T``, by exact Gauss-Jordan."""
    r = len(B)
    # solve B^T y = e_k
    M = [[B[j][i] for j in range(r)] + [Fraction(int(i == k))] for i in range(r)]
    for col in range(r):
        piv = next((i for i in range(col, r) if M[i][col] != 0), None)
        if piv is None:
            raise ArithmeticError("singular basis")
        M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        M[col] = [v / p for v in M[col]]
        for i in range(r):
            if i != col and M[i][col] != 0:
                f = M[i][col]
                M[i] = [a - f * bb for a, bb in zip(M[i], M[col])]
    return [M[i][r] for i in range(r)]


def fractional_tableau_rows(res: LpResult, p: LpProblem, int_tol: float = INT_TOL) -> list[TableauRow]:
    """Exact tableau rows of fractional basic structural variables.

    The basis comes from the float solve; the rows themselves are recomputed in
    rational arithmetic from the exact problem data. All nonbasic variables
    must sit at zero (the root relaxation without branching bounds).
    """
    if res.status != "optimal":
        raise ValueError(f"tableau rows need an optimal LP result, got {res.status}")
    n = p.base.n
    A, b = p.exact_rows()
    r = len(A)
    if len(res.basis) != r or any(j >= n + r for j in res.basis):
        raise ValueError("basis is not expressed over structural and slack variables")
    if res.at_upper or (p.lower is not None and np.any(np.asarray(p.lower) != 0)):
        raise ValueError("tableau rows require every nonbasic variable at zero")

    def column(j):
        if j < n:
            return [A[i][j] for i in range(r)]
        return [Fraction(int(i == j - n)) for i in range(r)]

    B = [[Fraction(0)] * r for _ in range(r)]
    for pos, j in enumerate(res.basis):
        colj = column(j)
        for i in range(r):
            B[i][pos] = colj[i]
    basic = set(res.basis)
    nonbasic = tuple(j for j in range(n + r) if j not in basic)
    rows = []
    for pos, j in enumerate(res.basis):
        if j >= n:
            continue
        val = res.x_star[j]
        if abs(val - round(val)) <= int_tol:
            continue
        y = _solve_transposed_exact(B, pos)
        rhs = sum((yi * bi for yi, bi in zip(y, b)), Fraction(0))
        coeffs = [Fraction(0)] * (n + r)
        for jj in nonbasic:
            if jj < n:
                coeffs[jj] = sum((y[i] * A[i][jj] for i in range(r)), Fraction(0))
            else:
                coeffs[jj] = y[jj - n]
        rows.append(TableauRow(j, rhs, tuple(coeffs), nonbasic, tuple(y)))
    return rows


def relax(inst: IlpInstance, cuts: Sequence = ()) -> LpProblem:
    return LpProblem(inst, tuple(cuts))
