"""Square-function machinery: closed forms against raw quadrature oracles."""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from glstar.core import QuadratureSpec, StepFunction, default_params
from glstar.dyadic import ShiftedGrid
from glstar.gstar import (
    GStarValue,
    apply_theta,
    gstar_pointwise,
    gstar_sq_norm,
    k_quantity,
    p_quantity,
    q_quantity,
    r_quantity,
    weight_total,
)
from glstar.kernels import make_cancellative, make_size_only

PARAMS = default_params()
SIZE = make_size_only(1, 1, 0.5, 0.5)
CANC = make_cancellative(1, 1, 0.5, 0.5)
# same evaluate, but the dispatcher can no longer see the tensor structure:
# everything computed through this goes down the raw-evaluation paths.
OPAQUE = replace(CANC, tensor_parts=None)

# coarse-but-honest resolution used where a raw oracle is in the loop
SP_COARSE = QuadratureSpec(points_per_cell=2, t_points_per_octave=3,
                           t_min=2.0**-6, t_max=2.0**3)


def random_pair(seed, level=2, size=4):
    rng = np.random.default_rng(seed)
    f1 = StepFunction(level=level, lo=(0,), values=rng.normal(size=size))
    f2 = StepFunction(level=level, lo=(-1,), values=rng.normal(size=size))
    return f1, f2


# ---------------------------------------------------------------------------
# weight closed form


def test_weight_total_closed_form():
    # int (t/(t+|y|))^lam dy = 2t/(lam-1), checked against direct quadrature
    for t, lam in ((0.25, 3.0), (1.0, 3.0), (2.0, 4.5)):
        ys = np.linspace(-4000 * t, 4000 * t, 2_000_001)
        dy = ys[1] - ys[0]
        num = float(np.sum((t / (t + np.abs(ys))) ** lam)) * dy
        assert weight_total(t, lam) == pytest.approx(2 * t / (lam - 1), rel=1e-14)
        assert num == pytest.approx(weight_total(t, lam), rel=1e-3)


# ---------------------------------------------------------------------------
# theta


def test_theta_of_one_is_the_mass_product():
    one = StepFunction(level=0, lo=(0, 0), values=np.ones((1, 1)), tail=1.0)
    for t1, t2 in ((0.5, 0.8), (0.05, 3.0), (2.0, 2.0)):
        assert apply_theta(SIZE, one, (0.3, -0.7), t1, t2) == pytest.approx(
            16.0, rel=1e-12)
        assert apply_theta(CANC, one, (0.3, -0.7), t1, t2) == 0.0


def test_theta_is_linear():
    rng = np.random.default_rng(9)
    f = StepFunction(level=2, lo=(-2, 1), values=rng.normal(size=(5, 3)))
    g = StepFunction(level=2, lo=(0, 0), values=rng.normal(size=(4, 4)))
    y, t1, t2 = (0.31, 0.9), 0.45, 0.7
    two_f = StepFunction(level=2, lo=(-2, 1), values=2.0 * f.values)
    assert apply_theta(CANC, two_f, y, t1, t2) == \
        2.0 * apply_theta(CANC, f, y, t1, t2)
    assert apply_theta(CANC, f + g, y, t1, t2) == pytest.approx(
        apply_theta(CANC, f, y, t1, t2) + apply_theta(CANC, g, y, t1, t2),
        rel=1e-12, abs=1e-14)


def test_theta_closed_cells_match_raw_quadrature():
    # identical kernel, but the opaque copy is forced through pointwise
    # evaluation; the closed per-cell antiderivatives must reproduce it
    rng = np.random.default_rng(5)
    f = StepFunction(level=2, lo=(-2, 1), values=rng.normal(size=(5, 3)))
    sp = QuadratureSpec(points_per_cell=8, rule="midpoint")
    closed = apply_theta(CANC, f, (0.31, 0.9), 0.45, 0.7)
    raw = apply_theta(OPAQUE, f, (0.31, 0.9), 0.45, 0.7, sp)
    assert raw == pytest.approx(closed, rel=2e-3)


def test_theta_rejects_bad_arguments():
    f1, _ = random_pair(0)
    with pytest.raises(ValueError, match="dimension"):
        apply_theta(CANC, f1, (0.0, 0.0), 0.5, 0.5)
    f = StepFunction(level=0, lo=(0, 0), values=np.ones((1, 1)))
    with pytest.raises(ValueError, match="positive"):
        apply_theta(CANC, f, (0.0, 0.0), -1.0, 0.5)


# ---------------------------------------------------------------------------
# pointwise square function


def test_fast_route_matches_raw_axis_oracle():
    f1, f2 = random_pair(3)
    x = (0.37, -0.11)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fast = gstar_pointwise(CANC, (f1, f2), x, PARAMS, spec=SP_COARSE,
                               route="fast")
        full = gstar_pointwise(CANC, (f1, f2), x, PARAMS, spec=SP_COARSE,
                               route="full")
    assert full.value == pytest.approx(fast.value, rel=1e-3)
    assert fast.value > 0 and not fast.clamped


def test_joint_raw_route_agrees_on_tensor_products():
    # the two-axis raw accumulation (no tensor shortcuts anywhere) against
    # the factored fast path, on a small scale range to keep meshes sane
    sp = QuadratureSpec(points_per_cell=2, t_points_per_octave=2,
                        t_min=2.0**-3, t_max=2.0**2)
    rng = np.random.default_rng(5)
    f1 = StepFunction(level=1, lo=(0,), values=rng.normal(size=2))
    f2 = StepFunction(level=1, lo=(0,), values=rng.normal(size=2))
    f2d = StepFunction(level=1, lo=(0, 0),
                       values=np.multiply.outer(f1.values, f2.values))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fast = gstar_pointwise(CANC, (f1, f2), (0.3, -0.2), PARAMS, spec=sp,
                               route="fast")
        joint = gstar_pointwise(OPAQUE, f2d, (0.3, -0.2), PARAMS, spec=sp,
                                route="full")
    assert joint.value == pytest.approx(fast.value, rel=5e-3)


def test_pointwise_translation_invariance():
    # shifting f by whole cells and the point by the same amount is exact
    f1, f2 = random_pair(3)
    x = (0.37, -0.11)
    s1 = StepFunction(level=2, lo=(8,), values=f1.values)
    s2 = StepFunction(level=2, lo=(-5,), values=f2.values)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        base = gstar_pointwise(CANC, (f1, f2), x, PARAMS, spec=SP_COARSE)
        moved = gstar_pointwise(CANC, (s1, s2), (x[0] + 2.0, x[1] - 1.0),
                                PARAMS, spec=SP_COARSE)
    assert moved.value == pytest.approx(base.value, rel=1e-12)


def test_pointwise_dilation_covariance():
    # f(./2), x -> 2x, scale window doubled: the half-exponent profiles make
    # the squared value exactly invariant
    f1, f2 = random_pair(3)
    d1 = StepFunction(level=1, lo=(0,), values=f1.values)
    d2 = StepFunction(level=1, lo=(-1,), values=f2.values)
    sp2 = QuadratureSpec(points_per_cell=2, t_points_per_octave=3,
                         t_min=2 * SP_COARSE.t_min, t_max=2 * SP_COARSE.t_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        base = gstar_pointwise(CANC, (f1, f2), (0.37, -0.11), PARAMS,
                               spec=SP_COARSE)
        dil = gstar_pointwise(CANC, (d1, d2), (0.74, -0.22), PARAMS, spec=sp2)
    assert dil.value == pytest.approx(base.value, rel=1e-12)


def test_pointwise_reports_scale_truncation():
    f1, f2 = random_pair(3)
    tight = QuadratureSpec(t_min=2.0**-4, t_max=2.0**1)
    with pytest.warns(RuntimeWarning, match="scale-range truncation"):
        gstar_pointwise(CANC, (f1, f2), (0.3, -0.2), PARAMS, spec=tight)


def test_pointwise_route_validation():
    f1, f2 = random_pair(0)
    with pytest.raises(ValueError, match="route"):
        gstar_pointwise(CANC, (f1, f2), (0.0, 0.0), PARAMS, route="sideways")
    f2d = StepFunction(level=1, lo=(0, 0), values=np.ones((2, 2)))
    with pytest.raises(ValueError, match="fast route"):
        gstar_pointwise(CANC, f2d, (0.0, 0.0), PARAMS, route="fast")


def test_gstar_value_rejects_negative():
    with pytest.raises(ValueError):
        GStarValue(point=(0.0, 0.0), value=-1.0, error=0.0,
                   spec=QuadratureSpec())


# ---------------------------------------------------------------------------
# squared norms


def test_norm_routes_agree_on_tensor_pairs():
    f1, f2 = random_pair(11)
    sp = QuadratureSpec(points_per_cell=4, t_points_per_octave=6,
                        t_min=2.0**-7, t_max=2.0**3)
    grids = (ShiftedGrid.standard(1, -3, 6), ShiftedGrid.standard(1, -3, 6))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        by_route = {r: gstar_sq_norm(CANC, (f1, f2), PARAMS, grids, spec=sp,
                                     route=r)
                    for r in ("gram", "whitney", "direct")}
    gram = by_route["gram"]
    assert gram > 0
    assert by_route["whitney"] == pytest.approx(gram, rel=2e-2)
    assert by_route["direct"] == pytest.approx(gram, rel=2e-2)


def test_gram_route_matches_general_assembly():
    # a genuinely non-product f: the lattice collapse against the raw
    # two-parameter assembly (slow, so the configuration is tiny)
    rng = np.random.default_rng(7)
    f = StepFunction(level=1, lo=(0, 0), values=rng.normal(size=(2, 2)))
    sp = QuadratureSpec(points_per_cell=2, t_points_per_octave=2,
                        t_min=2.0**-4, t_max=2.0**2)
    grids = (ShiftedGrid.standard(1, -2, 3), ShiftedGrid.standard(1, -2, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fast = gstar_sq_norm(CANC, f, PARAMS, grids, spec=sp, route="gram")
        raw = gstar_sq_norm(CANC, f, PARAMS, grids, spec=sp, route="direct")
    assert raw == pytest.approx(fast, rel=5e-2)


def test_norm_homogeneity_is_exact():
    rng = np.random.default_rng(3)
    sp = SP_COARSE
    grids = (ShiftedGrid.standard(1, -3, 6), ShiftedGrid.standard(1, -3, 6))
    f = StepFunction(level=2, lo=(0, 0), values=rng.normal(size=(4, 4)))
    two_f = StepFunction(level=2, lo=(0, 0), values=2.0 * f.values)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert gstar_sq_norm(CANC, two_f, PARAMS, grids, spec=sp,
                             route="gram") == \
            4.0 * gstar_sq_norm(CANC, f, PARAMS, grids, spec=sp, route="gram")


def test_norm_rejects_constant_tails():
    tailed = StepFunction(level=0, lo=(0,), values=np.ones(1), tail=1.0)
    f1, f2 = random_pair(0)
    grids = (ShiftedGrid.standard(1, -2, 3), ShiftedGrid.standard(1, -2, 3))
    with pytest.raises(ValueError, match="tails"):
        gstar_sq_norm(CANC, (tailed, f2), PARAMS, grids)


# ---------------------------------------------------------------------------
# localized quantities


def test_p_quantity_separated_configuration():
    # frozen values from the refined-quadrature runs; drift under one
    # refinement stays inside 1e-2
    grid = ShiftedGrid.standard(1, -3, 8)
    i1, j1 = grid.cube(2, [0]), grid.cube(1, [0])
    sp = QuadratureSpec(t_min=2.0**-10, t_max=2.0**4)
    args = (i1, j1, (3.0, -2.0), 3 / 16, 3 / 8, PARAMS)
    assert p_quantity(SIZE, *args, sp) == pytest.approx(2.196358e-4, rel=1e-3)
    assert p_quantity(CANC, *args, sp) == pytest.approx(2.648708e-4, rel=1e-3)
    coarse = p_quantity(CANC, *args, sp)
    fine = p_quantity(CANC, *args, sp.refined(2))
    assert fine == pytest.approx(coarse, rel=1e-2)


def test_q_quantity_halving_law():
    # all first-axis lengths halved: the ancestor pattern amplitude grows by
    # sqrt(2) and nothing else moves (half-exponent scale invariance)
    grid = ShiftedGrid.standard(1, -3, 8)
    j1 = grid.cube(1, [0])
    sp = QuadratureSpec(t_min=2.0**-10, t_max=2.0**4)
    q0 = q_quantity(CANC, grid.cube(2, [0]), 2, j1, (0.1, 0.3), 3 / 16, 3 / 8,
                    PARAMS, sp)
    qh = q_quantity(CANC, grid.cube(3, [0]), 2, j1, (0.05, 0.3), 3 / 32, 3 / 8,
                    PARAMS, sp)
    assert q0 == pytest.approx(0.1702274211, rel=1e-3)  # frozen
    assert qh == pytest.approx(math.sqrt(2.0) * q0, rel=1e-12)


def test_k_quantity_plateau_then_decay():
    # marginally separated ancestors: order one through generation 8, then a
    # clean geometric decay once the offset grows like 2^(k/2)
    grid = ShiftedGrid.standard(1, -10, 8)
    factor = SIZE.tensor_parts[0]
    sp = QuadratureSpec(t_min=2.0**-10, t_max=2.0**4)
    vals = {}
    for k in range(1, 15):
        off = min(math.ceil(2 ** (k / 2)), 2 ** (k - 1) - 1) if k > 1 else 0
        cube = grid.cube(4, [off])
        (lo, hi), = cube.box()
        vals[k] = k_quantity(factor, cube, k, 0.5 * (lo + hi), 3 / 64,
                             PARAMS, sp)
    assert all(0.1 <= vals[k] <= 10.0 for k in range(1, 9))
    assert all(vals[k + 1] < vals[k] for k in range(4, 14))
    ks = np.arange(9, 15)
    slope = np.polyfit(ks, [math.log2(vals[k]) for k in ks], 1)[0]
    assert -0.35 <= slope <= -0.15


def test_r_quantity_cancellative_is_zero():
    grid = ShiftedGrid.standard(1, -3, 8)
    assert r_quantity(CANC, grid.cube(2, [1]), grid.cube(1, [0]), 0.3, 3 / 8,
                      PARAMS, grid) == 0.0


def test_r_quantity_band_structure():
    # the descendant sum is (number of level bands) equal pieces: removing
    # the top band leaves exactly the two children's sums, and a deeper grid
    # scales it by the band-count ratio
    grid = ShiftedGrid.standard(1, -3, 8)
    j1 = grid.cube(1, [0])
    args = (j1, 0.3, 3 / 8, PARAMS)
    with pytest.warns(RuntimeWarning, match="descendant-level truncation"):
        r_i = r_quantity(SIZE, grid.cube(2, [1]), *args, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        kids = sum(r_quantity(SIZE, grid.cube(3, [c]), *args, grid)
                   for c in (2, 3))
        deep = ShiftedGrid.standard(1, -3, 13)
        r_deep = r_quantity(SIZE, deep.cube(2, [1]),
                            deep.cube(1, [0]), 0.3, 3 / 8, PARAMS, deep)
    bands = grid.j_max - 2 + 1
    assert r_i - kids == pytest.approx(r_i / bands, rel=1e-12)
    assert r_deep == pytest.approx(r_i * (deep.j_max - 1) / bands, rel=1e-12)


def test_r_quantity_rejects_foreign_cubes():
    grid = ShiftedGrid.standard(1, -3, 8)
    other = ShiftedGrid.standard(1, -3, 8)
    with pytest.raises(ValueError, match="belong"):
        r_quantity(SIZE, other.cube(2, [1]), grid.cube(1, [0]), 0.3, 3 / 8,
                   PARAMS, grid)
