"""Core layer: parameter validation, quadrature oracles, step functions, file format."""

import math
import warnings

import numpy as np
import pytest

from glstar.core import (
    Params,
    QuadratureSpec,
    StepFunction,
    default_params,
    graded_axis_edges,
    integrate_box,
    integrate_halfspace,
    octave_nodes,
    read_step,
    truncation_radius,
    write_step,
)


# ---------------------------------------------------------------------------
# Params
# ---------------------------------------------------------------------------


def test_default_params_and_derived_exponents():
    p = default_params()
    assert (p.n, p.m) == (1, 1)
    assert p.alpha == p.beta == 0.5
    assert p.lambda1 == p.lambda2 == 3.0
    # gamma = alpha / (2 (n + alpha)) = (1/2) / 3 = 1/6
    assert p.gamma_n == 1.0 / 6.0
    assert p.gamma_m == 1.0 / 6.0


def test_gamma_tracks_alpha_not_free():
    p = Params(alpha=1.0, lambda1=4.0)
    assert p.gamma_n == 1.0 / 4.0
    assert p.gamma_m == 1.0 / 6.0  # beta untouched


def test_theorem_mode_rejects_weak_weights():
    with pytest.raises(ValueError):
        Params(lambda1=2.0)
    with pytest.raises(ValueError):
        Params(alpha=0.6)  # needs alpha <= n (lambda1 - 2)/2 = 1/2
    with pytest.raises(ValueError):
        Params(beta=2.0, lambda2=3.0)


def test_non_theorem_mode_warns_instead():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        p = Params(lambda1=2.0, theorem_mode=False)
    assert p.lambda1 == 2.0
    assert any("theorem region" in str(w.message) for w in caught)


def test_hard_validation_is_unconditional():
    # these are nonsense regardless of mode: integrals would diverge
    for kwargs in [dict(n=0), dict(alpha=0.0), dict(lambda1=1.0), dict(r=0)]:
        with pytest.raises(ValueError):
            Params(theorem_mode=False, **kwargs)


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(points_per_cell=0)
    with pytest.raises(ValueError):
        QuadratureSpec(truncation_eps=1.0)
    with pytest.raises(ValueError):
        QuadratureSpec(t_min=1.0, t_max=0.5)
    with pytest.raises(ValueError):
        QuadratureSpec(rule="simpson")


# ---------------------------------------------------------------------------
# truncation_radius
# ---------------------------------------------------------------------------


def test_truncation_radius_within_factor_two_of_minimal():
    # in one dimension the tail bound is exact: tail(R) = (2/a) s^a (s+R)^-a,
    # so the minimal radius is s ((2/(a eps))^(1/a) - 1)
    a, s, eps = 0.5, 1.0, 1e-6
    minimal = s * ((2.0 / (a * eps)) ** (1.0 / a) - 1.0)
    r = truncation_radius(a, s, eps)
    assert minimal <= r <= 2.0 * minimal
    # and the bound actually holds: integrate the tail numerically
    tail = (2.0 / a) * s ** a * (s + r) ** -a
    assert tail < eps


def test_truncation_radius_monotone_in_eps():
    radii = [truncation_radius(0.5, 1.0, e) for e in (1e-3, 1e-6, 1e-9)]
    assert radii[0] < radii[1] < radii[2]


def test_truncation_radius_scale_homogeneous():
    r1 = truncation_radius(0.5, 1.0, 1e-6)
    r2 = truncation_radius(0.5, 2.0 ** -7, 1e-6)
    assert r2 == pytest.approx(r1 * 2.0 ** -7, rel=1e-12)


def test_truncation_radius_rejects_bad_args():
    with pytest.raises(ValueError):
        truncation_radius(0.0, 1.0, 1e-6)
    with pytest.raises(ValueError):
        truncation_radius(0.5, 1.0, -1.0)


# ---------------------------------------------------------------------------
# integrate_box
# ---------------------------------------------------------------------------


def test_constant_integrates_to_volume():
    spec = QuadratureSpec()
    val = integrate_box(lambda x, y: np.ones(np.broadcast_shapes(x.shape, y.shape)),
                        [(0.0, 1.0), (0.0, 1.0)], spec)
    assert val == pytest.approx(1.0, abs=1e-13)


def test_linear_integrand_exact():
    spec = QuadratureSpec()
    val = integrate_box(lambda x: x, (0.0, 1.0), spec)
    assert val == pytest.approx(0.5, abs=1e-12)


def test_heavy_tail_kernel_profile():
    # f(u) = (1+|u|)^(-3/2) over [-R, R] with R chosen by the truncation rule
    # at eps = 1e-6.  Oracle: the odd-symmetric antiderivative gives
    # 2 * (2 - 2 (1+R)^(-1/2)); value frozen from that closed form.
    R = truncation_radius(0.5, 1.0, 1e-6)
    exact = 4.0 - 4.0 / math.sqrt(1.0 + R)
    spec = QuadratureSpec(points_per_cell=6, rule="gauss")
    val = integrate_box(lambda u: (1.0 + np.abs(u)) ** -1.5, (-R, R), spec)
    assert val == pytest.approx(exact, abs=1e-4)
    # the same radius leaves less than eps of the full mass 4 outside
    assert 4.0 - exact < 1e-6 * 4.0


def test_linearity_of_the_quadrature():
    spec = QuadratureSpec()
    box = (-2.0, 3.0)
    f = lambda x: np.exp(-np.abs(x))
    g = lambda x: 1.0 / (1.0 + x * x)
    a, b = 2.5, -1.25
    lhs = integrate_box(lambda x: a * f(x) + b * g(x), box, spec)
    rhs = a * integrate_box(f, box, spec) + b * integrate_box(g, box, spec)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_refinement_stays_within_error_estimate():
    R = truncation_radius(0.5, 1.0, 1e-6)
    spec = QuadratureSpec(points_per_cell=4)
    f = lambda u: (1.0 + np.abs(u)) ** -1.5
    val, est = integrate_box(f, (-R, R), spec, with_error=True)
    fine = integrate_box(f, (-R, R), spec.refined(2))
    assert abs(fine - val) < est


def test_non_finite_sample_reports_the_point():
    spec = QuadratureSpec()
    with pytest.raises(FloatingPointError, match="non-finite"):
        integrate_box(lambda x: np.where(x > 0.5, np.nan, 1.0), (0.0, 1.0), spec)


def test_scalar_only_callables_are_accepted():
    spec = QuadratureSpec(points_per_cell=2)
    val = integrate_box(lambda x: float(x) ** 2, (0.0, 1.0), spec)
    assert val == pytest.approx(1.0 / 3.0, rel=1e-2)


# ---------------------------------------------------------------------------
# integrate_halfspace
# ---------------------------------------------------------------------------


def test_dyadic_band_integrates_to_log_two():
    # f(y,t) = 1_[0,1)(y) 1_(1/2,1)(t) / t; the t-integral is log 2 and the
    # y-integral is 1, both resolved exactly by octave alignment + anchor edges
    spec = QuadratureSpec()
    f = lambda y, t: ((y >= 0) & (y < 1) & (t > 0.5) & (t < 1.0)) / t
    val = integrate_halfspace(f, 1, spec, breaks=(0.0, 1.0))
    assert val == pytest.approx(math.log(2.0), abs=1e-6)


def test_zero_integrand_gives_zero():
    spec = QuadratureSpec()
    val = integrate_halfspace(lambda y, t: np.zeros(np.broadcast_shapes(y.shape, t.shape)),
                              1, spec)
    assert val == 0.0


@pytest.mark.parametrize("lam", [3.0, 4.0])
def test_weight_profile_mass(lam):
    # int_R (t/(t+|y|))^lam dy / t = 2/(lam-1) for every t > 0
    expected = 2.0 / (lam - 1.0)
    spec = QuadratureSpec(points_per_cell=6, rule="gauss")
    for t in np.logspace(-12 * math.log10(2.0), 5 * math.log10(2.0), 10):
        R = truncation_radius(lam - 1.0, t, 1e-9)
        val = integrate_box(lambda y: (t / (t + np.abs(y))) ** lam / t, (-R, R), spec)
        assert val == pytest.approx(expected, rel=1e-6), f"t={t}"


def test_octave_nodes_exact_on_dt_over_t():
    # the log-midpoint rule integrates c/t exactly over any octave span
    t, w = octave_nodes(2.0 ** -5, 2.0 ** 3, per_octave=3)
    val = float(np.sum(w / t))
    assert val == pytest.approx(8.0 * math.log(2.0), rel=1e-14)


def test_graded_edges_include_anchor_and_limits():
    edges = graded_axis_edges(0.0, 2.0, anchors=(1.0,))
    assert edges[0] == 0.0 and edges[-1] == 2.0
    assert 1.0 in edges
    # geometric grading: gaps are within a factor ~2 of distance to anchor
    gaps = np.diff(edges)
    assert gaps.min() < 2.0 ** -40
    assert gaps.max() <= 1.0 + 1e-12


# ---------------------------------------------------------------------------
# StepFunction
# ---------------------------------------------------------------------------


def test_step_function_evaluation_inside_and_outside():
    f = StepFunction(level=1, lo=(0,), values=np.array([1.0, 2.0]), tail=-3.0)
    assert f(0.25) == 1.0
    assert f(0.75) == 2.0
    assert f(1.5) == -3.0
    assert f(-0.1) == -3.0
    out = f(np.array([0.1, 0.6, 5.0]))
    assert out.tolist() == [1.0, 2.0, -3.0]


def test_step_function_rejects_empty_support():
    with pytest.raises(ValueError, match="empty support"):
        StepFunction(level=0, lo=(0,), values=np.zeros((0,)))


def test_addition_aligns_levels_and_boxes_exactly():
    f = StepFunction(level=0, lo=(0,), values=np.array([1.0]))
    g = StepFunction(level=2, lo=(2,), values=np.array([10.0, 20.0]))
    h = f + g
    assert h.level == 2
    assert h(0.1) == 1.0
    assert h(0.55) == 11.0
    assert h(0.8) == 21.0
    assert h(2.0) == 0.0


def test_tail_arithmetic():
    one = StepFunction.constant(1, 1.0)
    f = StepFunction(level=0, lo=(0,), values=np.array([5.0]))
    g = f - one  # 4 on [0,1), -1 outside
    assert g(0.5) == 4.0
    assert g(17.0) == -1.0
    assert g.tail == -1.0


def test_integral_and_inner_product():
    f = StepFunction(level=1, lo=(0,), values=np.array([2.0, -2.0]))
    assert f.integral() == 0.0
    assert f.exact_integral() == 0
    assert f.l2_norm_sq() == pytest.approx(4.0)
    g = StepFunction(level=0, lo=(0,), values=np.array([3.0]))
    assert f.inner(g) == pytest.approx(0.0)


def test_inner_with_two_tails_is_rejected():
    a = StepFunction.constant(1, 1.0)
    b = StepFunction.constant(1, 2.0)
    with pytest.raises(ValueError):
        a.inner(b)
    # but one tail is fine: the product vanishes far away
    c = StepFunction(level=0, lo=(0,), values=np.array([4.0]))
    assert a.inner(c) == pytest.approx(4.0)


def test_refinement_preserves_pointwise_values():
    rng = np.random.default_rng(7)
    vals = rng.standard_normal((4, 4))
    f = StepFunction(level=2, lo=(-2, 1), values=vals, tail=0.5)
    g = f.refined(5)
    pts = rng.uniform(-1.5, 2.5, size=(40, 2))
    assert np.array_equal(f(pts[:, 0], pts[:, 1]), g(pts[:, 0], pts[:, 1]))


def test_integral_is_refinement_invariant_exactly():
    f = StepFunction(level=0, lo=(0,), values=np.array([0.1, 0.3, -0.7]))
    assert f.refined(6).integral() == f.integral()


def test_two_dimensional_inner_matches_hand_sum():
    f = StepFunction(level=1, lo=(0, 0), values=np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert f.l2_norm_sq() == pytest.approx((1 + 4 + 9 + 16) / 4.0)


def test_quadrature_agrees_with_exact_step_integral():
    # the midpoint rule is exact on step functions when lattice edges are anchors
    f = StepFunction(level=2, lo=(1,), values=np.array([1.0, -2.0, 0.5]))
    spec = QuadratureSpec()
    lo, hi = f.box[0]
    edge_anchors = [lo + k * f.cell_side for k in range(4)]
    val = integrate_box(f, (lo, hi), spec, anchors=[edge_anchors])
    assert val == pytest.approx(f.integral(), abs=1e-15)


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(123)
    vals = rng.standard_normal((3, 5))
    vals[0, 0] = -0.0
    vals[1, 2] = np.nextafter(1.0, 2.0)
    f = StepFunction(level=4, lo=(-3, 9), values=vals, tail=1.0 / 3.0)
    path = tmp_path / "f.glsf"
    write_step(f, path)
    g = read_step(path)
    assert g.level == f.level and g.lo == f.lo and g.tail == f.tail
    assert g.values.tobytes() == f.values.tobytes()


def test_round_trip_negative_level(tmp_path):
    f = StepFunction(level=-2, lo=(0,), values=np.array([7.0, 8.0]))
    path = tmp_path / "coarse.glsf"
    write_step(f, path)
    g = read_step(path)
    assert g.level == -2 and g.box == f.box
    assert np.array_equal(g.values, f.values)


def test_bad_magic_is_a_format_error(tmp_path):
    path = tmp_path / "junk.glsf"
    path.write_bytes(b"NOTIT\n1 0 0.0 1.0 0.0\n" + b"\x00" * 8)
    with pytest.raises(ValueError, match="magic"):
        read_step(path)


def test_truncated_payload_is_detected(tmp_path):
    f = StepFunction(level=0, lo=(0,), values=np.array([1.0, 2.0]))
    path = tmp_path / "t.glsf"
    write_step(f, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(ValueError):
        read_step(path)


def test_header_is_ascii_and_self_describing(tmp_path):
    f = StepFunction(level=3, lo=(8,), values=np.ones(8), tail=0.0)
    path = tmp_path / "h.glsf"
    write_step(f, path)
    raw = path.read_bytes()
    assert raw.startswith(b"GLSF1\n")
    header = raw.split(b"\n")[1].decode("ascii").split()
    assert header[0] == "1" and header[1] == "3"
    assert float(header[2]) == 1.0 and float(header[3]) == 2.0
