import itertools
from fractions import Fraction

import numpy as np
import pytest

from neurocut.ilp import IlpInstance, random_small_instance, variable_upper_bounds


@pytest.fixture
def t1() -> IlpInstance:
    return IlpInstance.from_data([[2, 2]], [3], [1, 1])


def small_instances(seed: int, count: int, **kw) -> list[IlpInstance]:
    rng = np.random.default_rng(seed)
    return [random_small_instance(rng, **kw) for _ in range(count)]


def integer_points(inst: IlpInstance) -> list[tuple[int, ...]]:
    """Feasible integer points by plain exact enumeration (independent of the package)."""
    ubs = variable_upper_bounds(inst)
    out = []
    for x in itertools.product(*(range(u + 1) for u in ubs)):
        if all(sum(a * xi for a, xi in zip(row, x)) <= bi for row, bi in zip(inst.A, inst.b)):
            out.append(x)
    return out


def exact_optimum(inst: IlpInstance):
    pts = integer_points(inst)
    if not pts:
        return None
    return max(sum(Fraction(c) * xi for c, xi in zip(inst.c, x)) for x in pts)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
