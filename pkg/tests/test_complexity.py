import math

import numpy as np
import pytest

from neurocut.complexity import (
    PiecewiseSpec, SampleSpec, cg_k_piecewise, cg_param_dim, count_sign_patterns, line_scan_pieces,
    m_hyperplanes, pdim_bound_cg_k, pdim_bound_cut_selection, pdim_bound_finite, pdim_bound_lt,
    pdim_bound_relu, region_bound_lt, sample_size,
)
from neurocut.ilp import NormBounds, norm_bounds
from neurocut.nn import NetworkArch

# worked by hand: ceil(C B^2/eps^2 (pdim ln(B/eps) + ln(1/delta)))
SAMPLE_CASES = [
    (dict(C=1, B=1, eps=0.1, delta=0.5, pdim=10), 2372),   # 100 (23.0259 + 0.6931) = 2371.9
    (dict(C=2, B=2, eps=0.5, delta=0.1, pdim=3), 207),     # 32 (4.1589 + 2.3026) = 206.77
    (dict(C=0.5, B=10, eps=1, delta=0.01, pdim=100), 11744),  # 50 (230.2585 + 4.6052) = 11743.18
    (dict(C=1, B=1, eps=1, delta=0.25, pdim=5), 2),        # ln 1 = 0, ln 4 = 1.386
]


@pytest.mark.parametrize("kw,expected", SAMPLE_CASES)
def test_sample_size_cases(kw, expected):
    assert sample_size(SampleSpec(**kw)) == expected


def test_sample_size_monotone():
    base = SampleSpec(B=1, eps=0.1, delta=0.5, pdim=10)
    assert sample_size(SampleSpec(B=1, eps=0.1, delta=0.5, pdim=20)) > sample_size(base)
    assert sample_size(SampleSpec(B=1, eps=0.1, delta=0.1, pdim=10)) >= sample_size(base)


def test_sample_spec_validation():
    with pytest.raises(ValueError):
        SampleSpec(B=1, eps=0, delta=0.5, pdim=1)
    with pytest.raises(ValueError):
        SampleSpec(B=1, eps=0.1, delta=1.0, pdim=1)


def test_pdim_lt():
    arch = NetworkArch((3, 4, 2))
    p = PiecewiseSpec(Gamma=5, gamma=2, lam=1)
    assert pdim_bound_lt(arch, PiecewiseSpec(10, 2, 1)) > pdim_bound_lt(arch, p)
    assert pdim_bound_lt(NetworkArch((3, 1, 2)), PiecewiseSpec(1, 1, 0)) == 0
    M = 36
    assert pdim_bound_lt(arch, PiecewiseSpec(M, 1, 0), c0=2.0) == pytest.approx(2.0 * arch.W * math.log2(arch.U * M))
    with pytest.raises(ValueError):
        pdim_bound_lt(arch, p, c0=0)


def test_pdim_relu():
    M, m = 36, 2
    arch = NetworkArch((5, 4, 4, m))
    expected = arch.L * arch.W * math.log2(arch.U + m) + arch.W * math.log2(M)
    assert pdim_bound_relu(arch, PiecewiseSpec(M, 1, 0)) == pytest.approx(expected)
    # deeper network with the same W, U and output width
    shallow, deep = NetworkArch((2, 4, 1)), NetworkArch((2, 2, 2, 1))
    assert deep.L > shallow.L
    first = lambda a: a.L * a.W * math.log2(a.U + a.d_out)
    assert first(deep) > first(NetworkArch((2, 2, 1)))


def test_k_cut_output_width():
    m, k, M = 2, 3, 36
    assert cg_param_dim(m, k) == 9
    assert cg_param_dim(m, 1) == m
    assert cg_param_dim(1, 2) == 3
    one = pdim_bound_cg_k(NetworkArch((5, 8, cg_param_dim(m, 1))), M, 1)
    three = pdim_bound_cg_k(NetworkArch((5, 8, cg_param_dim(m, k))), M, k)
    assert three > one
    assert cg_k_piecewise(M, k) == PiecewiseSpec(k * 2**k * M, k, 0)


def test_pdim_finite():
    assert pdim_bound_finite(NetworkArch((2, 1, 1)), 1, kind="lt") == 0
    arch = NetworkArch((5, 6, 2))
    vals = [pdim_bound_finite(arch, r) for r in (1, 2, 5, 10)]
    assert vals == sorted(vals) and vals[0] < vals[-1]
    assert pdim_bound_finite(arch, 4, kind="lt") == pytest.approx(arch.W * math.log2(arch.U * 4))
    assert pdim_bound_cut_selection(arch, 4) > 0


def test_m_hyperplanes(t1):
    assert m_hyperplanes(NormBounds(10, 5), 3) == 36
    assert m_hyperplanes(norm_bounds(t1), 2) == 18
    assert m_hyperplanes(NormBounds(0, 0), 1) == 2


def test_line_scan_equal_endpoints(t1):
    assert line_scan_pieces(t1, [0.3], [0.3], samples=50) == 1


def test_line_scan_t1(t1):
    k = line_scan_pieces(t1, [0.0], [1.0], samples=1000)
    assert 2 <= k <= 18


def test_line_scan_rejects_outside_box(t1):
    with pytest.raises(ValueError):
        line_scan_pieces(t1, [0.0], [1.5])


def test_region_bound_value():
    assert region_bound_lt(NetworkArch((1, 1, 1)), 3) == pytest.approx((3 * math.e / 2) ** 2)
    assert region_bound_lt(NetworkArch((1, 1, 1)), 3) == pytest.approx(16.62, abs=0.01)


def test_sign_patterns_tiny():
    X = np.array([[-1.0], [0.3], [2.0]])
    res = count_sign_patterns(NetworkArch((1, 1, 1)), X, 20_000, seed=1)
    assert res.holds
    # one threshold unit on three points of a line: 2t = 6 realizable patterns
    assert res.distinct_count == 6


def test_sign_patterns_single_trial():
    assert count_sign_patterns(NetworkArch((2, 3, 1)), np.ones((4, 2)), 1).distinct_count == 1


def test_sign_patterns_nondecreasing():
    X = np.random.default_rng(0).standard_normal((5, 2))
    counts = [count_sign_patterns(NetworkArch((2, 2, 1)), X, t, seed=3).distinct_count for t in (1, 10, 100, 1000)]
    assert counts == sorted(counts)
