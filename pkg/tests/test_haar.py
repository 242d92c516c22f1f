"""Haar members, exact expansions, partial pairings, modified ancestor patterns."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glstar.core import StepFunction
from glstar.dyadic import ShiftedGrid
from glstar.haar import (
    HaarIndex,
    expand,
    haar_function,
    partial_pair,
    reconstruct,
    s_function,
)

GRID = ShiftedGrid.standard(1, 0, 8)
Q = GRID.cube(0, (0,))  # [0, 1)


def _tensor(g1: StepFunction, g2: StepFunction) -> StepFunction:
    level = max(g1.level, g2.level)
    a, b = g1.refined(level), g2.refined(level)
    return StepFunction(level=level, lo=(a.lo[0], b.lo[0]),
                        values=np.multiply.outer(a.values, b.values))


# ---------------------------------------------------------------------------
# members
# ---------------------------------------------------------------------------


def test_split_member_on_unit_interval():
    h = haar_function(HaarIndex(cube=Q, eta=(1,)))
    assert h(0.25) == 1.0 and h(0.75) == -1.0
    assert h(1.5) == 0.0


def test_flat_member_on_unit_interval():
    h = haar_function(HaarIndex(cube=Q, eta=(0,)))
    assert h(0.5) == 1.0
    assert h.integral() == 1.0


def test_members_are_normalized_with_zero_mean():
    for level, k in [(0, 0), (2, 3), (3, 5)]:
        h = haar_function(HaarIndex(cube=GRID.cube(level, (k,)), eta=(1,)))
        assert h.integral() == 0.0
        assert h.l2_norm_sq() == pytest.approx(1.0, abs=1e-14)


def test_two_dimensional_member():
    g2 = ShiftedGrid.standard(2, 0, 4)
    c = g2.cube(1, (0, 1))
    h = haar_function(HaarIndex(cube=c, eta=(1, 1)))
    assert h.l2_norm_sq() == pytest.approx(1.0, abs=1e-12)
    assert h.integral() == 0.0
    # sign pattern: product of the two axis splits
    assert h(0.1, 0.6) == -h(0.35, 0.6)


def test_signature_validation():
    with pytest.raises(ValueError):
        HaarIndex(cube=Q, eta=(2,))
    with pytest.raises(ValueError):
        HaarIndex(cube=Q, eta=(1, 0))


def test_orthonormality_of_small_system():
    members = [haar_function(HaarIndex(cube=Q, eta=(0,)))]
    for level in range(0, 3):
        for k in range(2 ** level):
            members.append(haar_function(HaarIndex(cube=GRID.cube(level, (k,)), eta=(1,))))
    for i, a in enumerate(members):
        for j, b in enumerate(members):
            want = 1.0 if i == j else 0.0
            assert a.inner(b) == pytest.approx(want, abs=1e-12)


# ---------------------------------------------------------------------------
# expansion and reconstruction
# ---------------------------------------------------------------------------


def test_two_term_expansion_of_half_indicator():
    f = _tensor(StepFunction(level=1, lo=(0,), values=np.array([1.0, 0.0])),
                StepFunction(level=0, lo=(0,), values=np.array([1.0])))
    e = expand(f, (Q, Q), 2)
    flat = HaarIndex(cube=Q, eta=(0,))
    split = HaarIndex(cube=Q, eta=(1,))
    assert e.coefficient(flat, flat) == 0.5
    assert e.coefficient(split, flat) == 0.5
    # every coefficient with a finer first-factor cube vanishes
    for k in (0, 1):
        finer = HaarIndex(cube=GRID.cube(1, (k,)), eta=(1,))
        assert e.coefficient(finer, flat) == 0.0
    assert e.norm_sq_fraction() == Fraction(1, 2)


def test_basis_member_has_single_unit_coefficient():
    i1 = HaarIndex(cube=GRID.cube(1, (1,)), eta=(1,))
    i2 = HaarIndex(cube=Q, eta=(1,))
    f = _tensor(haar_function(i1), haar_function(i2))
    e = expand(f, (Q, Q), 3)
    assert e.coefficient(i1, i2) == pytest.approx(1.0, abs=1e-14)
    total = e.norm_sq_fraction()
    assert float(total) == pytest.approx(1.0, abs=1e-12)
    # all other coefficients vanish: the one term carries the whole norm
    c = Fraction(e.raw_coefficient(i1, i2))
    assert total - c * c / (Fraction(1, 2) * Fraction(1)) == 0


def test_round_trip_is_exact_for_random_step_function():
    rng = np.random.default_rng(1234)
    f = StepFunction(level=5, lo=(0, 0), values=rng.standard_normal((32, 32)))
    g = reconstruct(expand(f, (Q, Q), 5))
    assert g.level == f.level and g.lo == f.lo
    assert np.array_equal(g.values, f.values)  # bit for bit


@settings(max_examples=25, deadline=None)
@given(
    level=st.integers(min_value=1, max_value=4),
    seed=st.integers(min_value=0, max_value=2 ** 32 - 1),
)
def test_round_trip_property(level, seed):
    rng = np.random.default_rng(seed)
    n = 2 ** level
    f = StepFunction(level=level, lo=(0, 0), values=rng.standard_normal((n, n)))
    g = reconstruct(expand(f, (Q, Q), level))
    assert np.array_equal(g.values, f.values)


def test_parseval_exact_and_in_float():
    rng = np.random.default_rng(77)
    f = StepFunction(level=4, lo=(0, 0), values=rng.uniform(-2, 2, (16, 16)))
    e = expand(f, (Q, Q), 4)
    exact = sum(Fraction(v) ** 2 for v in f.values.ravel()) * Fraction(1, 2 ** 8)
    assert e.norm_sq_fraction() == exact
    float_sum = sum(e.coefficient(i1, i2) ** 2 for i1, i2 in e.indices())
    assert float_sum == pytest.approx(f.l2_norm_sq(), rel=1e-12)


def test_support_leakage_is_rejected():
    f = StepFunction(level=2, lo=(-1, 0), values=np.ones((2, 2)))
    with pytest.raises(ValueError, match="support leakage"):
        expand(f, (Q, Q), 2)
    g = StepFunction.constant(2, 1.0)
    with pytest.raises(ValueError, match="support leakage"):
        expand(g, (Q, Q), 2)


def test_scaling_member_only_for_top_cube():
    f = StepFunction(level=2, lo=(0, 0), values=np.ones((4, 4)))
    e = expand(f, (Q, Q), 2)
    stray = HaarIndex(cube=GRID.cube(1, (0,)), eta=(0,))
    with pytest.raises(KeyError):
        e.coefficient(stray, HaarIndex(cube=Q, eta=(0,)))


# ---------------------------------------------------------------------------
# partial pairing
# ---------------------------------------------------------------------------


def test_partial_pair_recovers_first_slot():
    g1 = StepFunction(level=3, lo=(0,), values=np.arange(8.0))
    j1 = HaarIndex(cube=GRID.cube(1, (1,)), eta=(1,))
    f = _tensor(g1, haar_function(j1))
    out = partial_pair(f, j1)
    assert out.allclose(g1, tol=1e-12)


def test_partial_pair_orthogonal_member_gives_zero():
    g1 = StepFunction(level=3, lo=(0,), values=np.arange(8.0))
    j1 = HaarIndex(cube=GRID.cube(1, (1,)), eta=(1,))
    jperp = HaarIndex(cube=GRID.cube(1, (0,)), eta=(1,))
    f = _tensor(g1, haar_function(j1))
    out = partial_pair(f, jperp)
    assert np.all(np.abs(out.values) <= 1e-15)


def test_partial_pair_matches_double_sum_oracle():
    rng = np.random.default_rng(9)
    f = StepFunction(level=4, lo=(0, 0), values=rng.standard_normal((16, 16)))
    j1 = HaarIndex(cube=GRID.cube(2, (1,)), eta=(1,))
    out = partial_pair(f, j1)
    h = haar_function(j1).refined(4)
    cell = 2.0 ** -4
    for row in range(16):
        direct = sum(
            f.values[row, c] * h((c + 0.5) * cell) * cell for c in range(16)
        )
        assert out((row + 0.5) * cell) == pytest.approx(direct, abs=1e-13)
    # averages over a coarse cell agree with the brute-force double integral
    avg = np.mean(out.values[:4])
    direct = sum(
        f.values[r, c] * h((c + 0.5) * cell) * cell for r in range(4) for c in range(16)
    ) / 4.0
    assert avg == pytest.approx(direct, abs=1e-13)


# ---------------------------------------------------------------------------
# modified ancestor pattern
# ---------------------------------------------------------------------------


def test_s_pattern_three_cases():
    grid = ShiftedGrid.standard(1, 0, 3)
    s = s_function(grid.cube(1, (0,)), 1)  # I = [0, 1/2), ancestor [0, 1)
    assert s(0.25) == 0.0
    assert s(0.75) == -2.0
    assert s(5.0) == -1.0 and s.tail == -1.0


def test_s_reconstructs_haar_member_pointwise():
    grid = ShiftedGrid.random(1, 0, 10, seed=5)
    rng = np.random.default_rng(6)
    for _ in range(10):
        level = int(rng.integers(4, 11))
        k = int(rng.integers(0, 2 ** 6))
        i = grid.cube(level, (k,))
        gens = int(rng.integers(1, level - grid.j_min + 1))
        parent = grid.ancestor(i, gens)
        keep = grid.ancestor(i, gens - 1)
        s = s_function(i, gens)
        h = haar_function(HaarIndex(cube=parent, eta=(1,)))
        avg = h(*keep.center())
        pts = rng.uniform(-1.0, 2.0, size=40)
        lhs = h(pts)
        rhs = s(pts) + avg
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_s_vanishes_on_the_kept_child():
    grid = ShiftedGrid.random(1, 0, 8, seed=15)
    i = grid.cube(6, (17,))
    s = s_function(i, 3)
    keep = grid.ancestor(i, 2)
    (a, b), = keep.box()
    xs = np.linspace(a + 1e-9, b - 1e-9, 25)
    assert np.all(s(xs) == 0.0)


def test_s_sup_bound():
    grid = ShiftedGrid.random(1, 0, 12, seed=25)
    rng = np.random.default_rng(26)
    for _ in range(15):
        level = int(rng.integers(3, 13))
        i = grid.cube(level, (int(rng.integers(0, 50)),))
        gens = int(rng.integers(1, level - grid.j_min + 1))
        s = s_function(i, gens)
        parent = grid.ancestor(i, gens)
        bound = 2.0 * parent.measure() ** -0.5
        assert np.max(np.abs(s.values)) <= bound + 1e-12
        assert abs(s.tail) <= bound


def test_s_requires_ancestor_within_truncation():
    grid = ShiftedGrid.standard(1, 0, 4)
    with pytest.raises(ValueError, match="insufficient scale range"):
        s_function(grid.cube(2, (1,)), 3)
