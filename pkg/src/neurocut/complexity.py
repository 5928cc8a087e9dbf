"""Sample-size and pseudo-dimension bound evaluators, plus empirical checks.

Order-of-magnitude bounds are returned as ``c0 * expression`` with an explicit
caller-chosen leading constant ``c0``; they are order estimates, not exact
values. Logarithms in those expressions are base 2. ``sample_size`` uses the
natural logarithm because its formula is given exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bnc import SolveBudget, SolvePolicy, branch_and_bound
from .cuts import cg_cut
from .ilp import IlpInstance, NormBounds
from .nn import NetworkArch, hidden_patterns


@dataclass(frozen=True)
class SampleSpec:
    B: float
    eps: float
    delta: float
    pdim: float
    C: float = 1.0

    def __post_init__(self):
        if min(self.B, self.eps, self.pdim, self.C) <= 0:
            raise ValueError("B, eps, pdim and C must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class PiecewiseSpec:
    Gamma: int
    gamma: int
    lam: int

    def __post_init__(self):
        if self.Gamma < 1 or self.gamma < 0 or self.lam < 0:
            raise ValueError("need Gamma >= 1, gamma >= 0, lam >= 0")


def sample_size(spec: SampleSpec) -> int:
    """Smallest integer ``t >= C B^2/eps^2 (pdim ln(B/eps) + ln(1/delta))``.

    When ``B <= eps`` the ``ln(B/eps)`` term is clamped to zero.
    """
    log_term = max(math.log(spec.B / spec.eps), 0.0)
    t = spec.C * spec.B**2 / spec.eps**2 * (spec.pdim * log_term + math.log(1.0 / spec.delta))
    # guard against 2371.9999999 style float noise pushing the ceiling up
    return math.ceil(round(t, 9))


def _check_c0(c0: float) -> None:
    if c0 <= 0:
        raise ValueError("leading constant c0 must be positive")


def pdim_bound_lt(arch: NetworkArch, piecewise: PiecewiseSpec, c0: float = 1.0) -> float:
    """``c0 * W * log2(U * gamma * Gamma * (lam + 1))`` for LT networks with sigmoid squeezing."""
    _check_c0(c0)
    gamma = max(piecewise.gamma, 1)
    return c0 * arch.W * math.log2(arch.U * gamma * piecewise.Gamma * (piecewise.lam + 1))


def pdim_bound_relu(arch: NetworkArch, piecewise: PiecewiseSpec, c0: float = 1.0) -> float:
    """``c0 * (L W log2(U + ell) + W log2(gamma Gamma (lam + 1)))`` for ReLU networks with CReLU squeezing."""
    _check_c0(c0)
    gamma = max(piecewise.gamma, 1)
    W, L, U, ell = arch.W, arch.L, arch.U, arch.d_out
    return c0 * (L * W * math.log2(U + ell) + W * math.log2(gamma * piecewise.Gamma * (piecewise.lam + 1)))


def pdim_bound_finite(arch: NetworkArch, r: int, c0: float = 1.0, kind: str = "relu") -> float:
    """Bound for choosing among ``r`` fixed parameter settings (multi-class output)."""
    _check_c0(c0)
    if r < 1:
        raise ValueError("r must be >= 1")
    if kind == "lt":
        return c0 * arch.W * math.log2(arch.U * r)
    if kind == "relu":
        return c0 * arch.L * arch.W * math.log2(arch.U + r)
    raise ValueError(f"unknown network kind {kind!r}")


def pdim_bound_cut_selection(arch: NetworkArch, pool_size: int, c0: float = 1.0, kind: str = "relu") -> float:
    """Bound for networks that output weights of a scoring rule over a finite pool."""
    _check_c0(c0)
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    if kind == "lt":
        return c0 * arch.W * math.log2(arch.U * pool_size)
    return c0 * (arch.L * arch.W * math.log2(arch.U + arch.d_out) + arch.W * math.log2(pool_size))


def m_hyperplanes(norms: NormBounds, n: int) -> int:
    """``2 (a + b + n)``, rounded up."""
    return math.ceil(2 * (norms.a_norm + norms.b_norm + n))


def cg_param_dim(m: int, k: int) -> int:
    if m < 1 or k < 1:
        raise ValueError("m and k must be >= 1")
    return m * k + k * (k - 1) // 2


def cg_k_piecewise(M: int, k: int) -> PiecewiseSpec:
    """Boundary structure for ``k`` sequential CG cuts: ``k 2^k M`` polynomials of degree ``k``."""
    return PiecewiseSpec(Gamma=k * 2**k * M, gamma=k, lam=0)


def pdim_bound_cg_k(arch: NetworkArch, M: int, k: int, c0: float = 1.0, kind: str = "relu") -> float:
    """Pseudo-dimension estimate for ``k`` CG cuts; ``arch`` must output ``cg_param_dim(m, k)`` values."""
    piece = cg_k_piecewise(M, k)
    if kind == "lt":
        return pdim_bound_lt(arch, piece, c0)
    return pdim_bound_relu(arch, piece, c0)


# --- empirical checks -----------------------------------------------------------


def line_scan_pieces(
    inst: IlpInstance, endpoint_a, endpoint_b, samples: int = 1000,
    policy: SolvePolicy = SolvePolicy(), budget: SolveBudget = SolveBudget(),
    memo: dict | None = None,
) -> int:
    """``1 +`` the number of value changes of ``f_cg`` along a segment of multipliers."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    a = np.asarray(endpoint_a, dtype=float)
    b = np.asarray(endpoint_b, dtype=float)
    if np.any((a < 0) | (a > 1) | (b < 0) | (b > 1)):
        raise ValueError("segment endpoints must lie in [0, 1]^m")
    memo = {} if memo is None else memo
    pieces, prev = 1, None
    for s in np.linspace(0.0, 1.0, samples):
        u = np.clip((1.0 - s) * a + s * b, 0.0, 1.0)
        cut = cg_cut(inst, u)
        key = cut.key if not (cut.is_vacuous and cut.beta >= 0) else None
        if key not in memo:
            cuts = [] if key is None else [cut]
            memo[key] = branch_and_bound(inst, cuts, policy, budget).tree_size
        val = memo[key]
        if prev is not None and val != prev:
            pieces += 1
        prev = val
    return pieces


@dataclass(frozen=True)
class SignPatternCount:
    distinct_count: int
    bound: float
    t: int
    W_hidden: int
    U: int

    @property
    def holds(self) -> bool:
        return self.distinct_count <= self.bound


def region_bound_lt(arch: NetworkArch, t: int) -> float:
    """``(e t U / W')^{W'}`` with ``W'`` the parameters feeding the hidden layers."""
    Wp = arch.W_hidden
    return (math.e * t * arch.U / Wp) ** Wp


def count_sign_patterns(
    arch: NetworkArch, inputs: Sequence, trials: int, seed: int = 0, chunk: int = 4096,
) -> SignPatternCount:
    """Distinct hidden-layer output patterns over random LT-network parameters.

    Each trial draws standard-normal parameters and records the 0/1 outputs of
    every hidden neuron on all ``t`` inputs. The number of distinct records is a
    lower bound on the number of parameter regions.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if arch.L < 1:
        raise ValueError("need at least one hidden layer")
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    if X.shape[1] != arch.d_in:
        raise ValueError("input width does not match the architecture")
    t = X.shape[0]
    rng = np.random.default_rng(seed)
    seen: set[bytes] = set()
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        P = rng.standard_normal((k, arch.W))
        for params in P:
            pats = hidden_patterns(arch, params, X)
            seen.add(np.packbits(np.concatenate([p.ravel() for p in pats]).astype(np.uint8)).tobytes())
        done += k
    return SignPatternCount(len(seen), region_bound_lt(arch, t), t, arch.W_hidden, arch.U)
