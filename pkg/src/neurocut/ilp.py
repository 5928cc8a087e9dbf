"""Pure integer linear programs ``max{c^T x : Ax <= b, x >= 0, x integral}``.

Instances keep ``A`` and ``b`` as exact rationals (``fractions.Fraction``) so
that cut arithmetic can be done exactly; float copies are cached for the LP
solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class IlpParseError(ValueError):
    """Raised when an instance or dataset file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v)
    f = float(v)
    if not math.isfinite(f):
        # Fraction() refuses inf/nan; keep the value so validate() can report it
        raise OverflowError(f"non-finite coefficient {v!r}")
    return Fraction(f)


@dataclass(frozen=True, eq=False)
class IlpInstance:
    A: tuple[tuple[Fraction, ...], ...]
    b: tuple[Fraction, ...]
    c: tuple[float, ...]

    @classmethod
    def from_data(cls, A, b, c) -> "IlpInstance":
        """Build an instance from nested sequences / arrays of numbers."""
        A_ = tuple(tuple(_as_fraction(v) for v in row) for row in A)
        b_ = tuple(_as_fraction(v) for v in b)
        c_ = tuple(float(v) for v in c)
        return cls(A_, b_, c_)

    @property
    def m(self) -> int:
        return len(self.A)

    @property
    def n(self) -> int:
        return len(self.c)

    @cached_property
    def A_float(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.A], dtype=float).reshape(self.m, self.n)

    @cached_property
    def b_float(self) -> np.ndarray:
        return np.array([float(v) for v in self.b], dtype=float)

    @cached_property
    def c_float(self) -> np.ndarray:
        return np.array(self.c, dtype=float)

    @cached_property
    def integral_objective(self) -> bool:
        return all(float(v).is_integer() for v in self.c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IlpInstance):
            return NotImplemented
        return self.A == other.A and self.b == other.b and self.c == other.c

    def __hash__(self) -> int:
        return self._hash

    @cached_property
    def _hash(self) -> int:
        return hash((self.A, self.b, self.c))

    def __repr__(self) -> str:
        return f"IlpInstance(m={self.m}, n={self.n})"


@dataclass(frozen=True)
class NormBounds:
    a_norm: Fraction
    b_norm: Fraction


@dataclass(frozen=True)
class EncodedInstance:
    vec: np.ndarray
    m: int
    n: int

    @property
    def d(self) -> int:
        return len(self.vec)


@dataclass(frozen=True)
class GeneratorConfig:
    n_items: int = 16
    n_knapsacks: int = 2
    coeff_lo: int = 1
    coeff_hi: int = 1000
    seed: int = 0
    objective_rule: str = "sum_of_columns"

    def __post_init__(self):
        if self.n_items < 1 or self.n_knapsacks < 1:
            raise ValueError("n_items and n_knapsacks must be positive")
        if not 1 <= self.coeff_lo <= self.coeff_hi:
            raise ValueError("need 1 <= coeff_lo <= coeff_hi")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.objective_rule not in ("sum_of_columns", "first_row"):
            raise ValueError(f"unknown objective_rule {self.objective_rule!r}")


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(inst: IlpInstance) -> ValidationReport:
    report = ValidationReport()
    if inst.m < 1:
        report.violations.append("num_rows must be >= 1")
    if inst.n < 1:
        report.violations.append("num_cols must be >= 1")
    if len(inst.b) != inst.m:
        report.violations.append(f"b has length {len(inst.b)}, expected {inst.m}")
    for i, row in enumerate(inst.A):
        if len(row) != inst.n:
            report.violations.append(f"row {i} of A has length {len(row)}, expected {inst.n}")
    for v in [*(v for row in inst.A for v in row), *inst.b]:
        if isinstance(v, Fraction):
            continue
        try:
            finite = math.isfinite(v)
        except TypeError:
            finite = False
        report.violations.append("non-finite coefficient" if not finite else "non-rational coefficient")
        break
    if not all(math.isfinite(v) for v in inst.c):
        report.violations.append("non-finite coefficient in c")
    return report


def make_unchecked(A, b, c) -> IlpInstance:
    """Build an instance without coercing entries (used to represent bad input)."""
    return IlpInstance(tuple(tuple(r) for r in A), tuple(b), tuple(float(v) for v in c))


def _require_valid(inst: IlpInstance) -> None:
    report = validate(inst)
    if not report.ok:
        raise ValueError("invalid instance: " + "; ".join(report.violations))


def encode(inst: IlpInstance) -> EncodedInstance:
    """Stack ``A`` (row-major), then ``b``, then ``c`` into one vector."""
    _require_valid(inst)
    vec = np.concatenate([inst.A_float.ravel(), inst.b_float, inst.c_float])
    return EncodedInstance(vec, inst.m, inst.n)


def decode(enc: EncodedInstance) -> IlpInstance:
    m, n = enc.m, enc.n
    v = enc.vec
    if len(v) != m * n + m + n:
        raise ValueError("encoded vector has the wrong length")
    A = v[: m * n].reshape(m, n)
    return IlpInstance.from_data(A, v[m * n : m * n + m], v[m * n + m :])


def encode_batch(instances: Sequence[IlpInstance]) -> np.ndarray:
    return np.stack([encode(inst).vec for inst in instances])


def norm_bounds(inst: IlpInstance) -> NormBounds:
    a = sum((abs(v) for row in inst.A for v in row), Fraction(0))
    b = sum((abs(v) for v in inst.b), Fraction(0))
    return NormBounds(a, b)


def gen_chvatal_multiknapsack(cfg: GeneratorConfig) -> IlpInstance:
    """Hard multi-knapsack instance: uniform integer weights, capacity half the row sum."""
    rng = np.random.default_rng(cfg.seed)
    A = rng.integers(cfg.coeff_lo, cfg.coeff_hi, size=(cfg.n_knapsacks, cfg.n_items), endpoint=True)
    b = A.sum(axis=1) // 2
    if cfg.objective_rule == "sum_of_columns":
        c = A.sum(axis=0)
    else:
        c = A[0].copy()
    return IlpInstance.from_data(A.tolist(), b.tolist(), c.tolist())


def instance_seed(base_seed: int, stream: int, index: int) -> int:
    """Derive an independent 64-bit seed for item ``index`` of ``stream``."""
    ss = np.random.SeedSequence([base_seed, stream, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_dataset(cfg: GeneratorConfig, count: int, stream: int = 0) -> list[IlpInstance]:
    out = []
    for i in range(count):
        sub = GeneratorConfig(
            cfg.n_items, cfg.n_knapsacks, cfg.coeff_lo, cfg.coeff_hi,
            instance_seed(cfg.seed, stream, i), cfg.objective_rule,
        )
        out.append(gen_chvatal_multiknapsack(sub))
    return out


# --- text format -----------------------------------------------------------


def _fmt_rational(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _fmt_real(v: float) -> str:
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def format_instance(inst: IlpInstance) -> str:
    lines = [f"ilp {inst.m} {inst.n}"]
    lines += [" ".join(_fmt_rational(v) for v in row) for row in inst.A]
    lines.append("b " + " ".join(_fmt_rational(v) for v in inst.b))
    lines.append("c " + " ".join(_fmt_real(v) for v in inst.c))
    return "\n".join(lines) + "\n"


def _parse_rationals(tokens: list[str], lineno: int, what: str) -> list[Fraction]:
    out = []
    for tok in tokens:
        try:
            out.append(Fraction(tok))
        except (ValueError, ZeroDivisionError):
            raise IlpParseError(f"bad rational {tok!r} in {what}", lineno) from None
    return out


def _parse_block(lines: list[tuple[int, str]]) -> IlpInstance:
    if not lines:
        raise IlpParseError("empty instance block")
    lineno, head = lines[0]
    parts = head.split()
    if len(parts) != 3 or parts[0] != "ilp":
        raise IlpParseError("expected header 'ilp m n'", lineno)
    try:
        m, n = int(parts[1]), int(parts[2])
    except ValueError:
        raise IlpParseError("non-integer dimensions in header", lineno) from None
    if m < 1 or n < 1:
        raise IlpParseError("dimensions must be positive", lineno)
    if len(lines) != m + 3:
        raise IlpParseError(f"expected {m} matrix rows plus 'b' and 'c' lines, got {len(lines) - 1} lines", lineno)
    A = []
    for i in range(m):
        ln, text = lines[1 + i]
        toks = text.split()
        if len(toks) != n:
            raise IlpParseError(f"matrix row {i} has {len(toks)} entries, expected {n}", ln)
        A.append(_parse_rationals(toks, ln, f"row {i} of A"))
    ln, text = lines[m + 1]
    toks = text.split()
    if not toks or toks[0] != "b":
        raise IlpParseError("expected 'b' line", ln)
    if len(toks) - 1 != m:
        raise IlpParseError(f"'b' has {len(toks) - 1} entries, expected {m}", ln)
    b = _parse_rationals(toks[1:], ln, "b")
    ln, text = lines[m + 2]
    toks = text.split()
    if not toks or toks[0] != "c":
        raise IlpParseError("expected 'c' line", ln)
    if len(toks) - 1 != n:
        raise IlpParseError(f"'c' has {len(toks) - 1} entries, expected {n}", ln)
    try:
        c = [float(t) for t in toks[1:]]
    except ValueError:
        raise IlpParseError("bad real in c", ln) from None
    if not all(math.isfinite(v) for v in c):
        raise IlpParseError("non-finite entry in c", ln)
    return IlpInstance(tuple(map(tuple, A)), tuple(b), tuple(c))


def parse_instances(text: str) -> list[IlpInstance]:
    blocks: list[list[tuple[int, str]]] = [[]]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "---":
            blocks.append([])
            continue
        blocks[-1].append((lineno, line))
    if blocks and not blocks[-1]:
        blocks.pop()
    return [_parse_block(blk) for blk in blocks]


def write_dataset(path, instances: Iterable[IlpInstance]) -> None:
    text = "---\n".join(format_instance(inst) for inst in instances)
    Path(path).write_text(text)


def read_dataset(path) -> list[IlpInstance]:
    return parse_instances(Path(path).read_text())


# --- small random instances for oracle checks --------------------------------


def random_small_instance(
    rng: np.random.Generator, n_max: int = 6, m_max: int = 3, coef_max: int = 10,
) -> IlpInstance:
    """Bounded instance with nonnegative ``A``, ``b`` and a positive entry in every column.

    Every variable is then bounded by ``min_i floor(b_i / A_ij)``, so enumeration
    over a small box is exhaustive.
    """
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    A = rng.integers(0, coef_max + 1, size=(m, n))
    for j in range(n):
        if not A[:, j].any():
            A[rng.integers(m), j] = rng.integers(1, coef_max + 1)
    b = rng.integers(1, coef_max + 1, size=m)
    c = rng.integers(-2, coef_max + 1, size=n)
    return IlpInstance.from_data(A.tolist(), b.tolist(), c.tolist())


def variable_upper_bounds(inst: IlpInstance) -> list[int]:
    """Per-variable integer bounds implied by nonnegative constraint rows."""
    out = []
    for j in range(inst.n):
        caps = [math.floor(bi / row[j]) for row, bi in zip(inst.A, inst.b)
                if row[j] > 0 and all(v >= 0 for v in row)]
        if not caps:
            raise ValueError(f"variable {j} is not bounded by a nonnegative row")
        out.append(max(min(caps), 0))
    return out


def box_bound(inst: IlpInstance) -> int:
    return max(variable_upper_bounds(inst))
