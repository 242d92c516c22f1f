"""Quadrature of the two-parameter square function and its localized pieces.

The central object: for a kernel acting at scale pairs (t1, t2),

    g(f)(x)^2 = iint |theta_{t1,t2} f(x - y)|^2
                (t1/(t1+|y1|))^(n lam1) (t2/(t2+|y2|))^(m lam2)
                dy1 dy2 / (t1^n t2^m)  dt1/t1  dt2/t2,

where theta f(p) = iint K(p, z) f(z) dz.  Alongside the pointwise value and
the squared L2 norm, this module evaluates the localized quantities that
drive the cube-pair estimates: the weighted pair integral of theta applied to
a Haar function (:func:`p_quantity`), its modified-ancestor variant
(:func:`q_quantity`), the complement integral whose decay in the generation
count k powers the nested case (:func:`k_quantity`), and the Carleson-box sum
over the descendants of a cube (:func:`r_quantity`).

Numerical conventions used throughout:

* scale integrals run per octave with the log rule from :mod:`glstar.core`
  (exact for dt/t under the midpoint variant), and per-octave contributions
  are tracked so a too-small scale range is *reported*, never silently
  absorbed;
* space integrals are written in the offset variable u = x - y.  theta of a
  constant-tail step function tends to tail * mass(kernel) far away, so the
  far field is a closed-form weight-tail term and the mesh only has to cover
  the structure zone around the support box;
* tensor kernels (everything built by :mod:`glstar.kernels`) use the exact
  per-axis cell antiderivatives; the non-tensor fall-back quadratures the
  inner integral from raw kernel evaluations and is priced accordingly.

Negative values produced by roundoff under the final square root are clamped
to zero and flagged on the returned record.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Params,
    QuadratureSpec,
    StepFunction,
    graded_axis_edges,
    octave_nodes,
    segment_nodes,
)
from .dyadic import DyadicCube, ShiftedGrid
from .haar import HaarIndex, haar_function, s_function
from .kernels import ConvolutionFactor, Kernel, _weight_window

__all__ = [
    "GStarValue",
    "apply_theta",
    "gstar_pointwise",
    "gstar_sq_norm",
    "k_quantity",
    "p_quantity",
    "q_quantity",
    "r_quantity",
    "weight_total",
]

# Finest graded-mesh step relative to the span being meshed; the meshes are
# anchored at every integrand kink, so a fixed relative floor suffices.
_MESH_REL = 2.0 ** -20

# Structure radius in units of t: beyond this distance from the support box,
# theta(u) differs from its far-field constant by O(pad^(-1-alpha)), which
# the closed-form tail term absorbs at the tolerances used here.
_PAD_UNITS = 128.0

# The raw-evaluation (non-tensor) paths trade mesh density for kernel calls.
_RAW_PAD_UNITS = 16.0
_RAW_MESH_REL = 2.0 ** -10

# The per-axis raw oracle is one-dimensional and can afford density.
_ORACLE_PAD_UNITS = 64.0
_ORACLE_MESH_REL = 2.0 ** -16

# Relative tail size above which a truncated range is reported.
_TAIL_WARN = 1e-2


def weight_total(t: float, lam: float) -> float:
    """Closed form of the full weight integral: int (t/(t+|y|))^lam dy over
    the line equals 2 t / (lam - 1).  Requires lam > 1."""
    if lam <= 1.0:
        raise ValueError("weight power must exceed 1 for a convergent tail")
    return 2.0 * t / (lam - 1.0)


@dataclass(frozen=True)
class GStarValue:
    """A pointwise square-function value with its quadrature bookkeeping.

    ``value`` is the square root of the accumulated quadrature sum; a
    negative roundoff sum is clamped to zero and ``clamped`` set.  ``error``
    carries the scale-range tail estimates (both ends of both axes)
    propagated to the value.
    """

    point: tuple
    value: float
    error: float
    spec: QuadratureSpec
    clamped: bool = False

    def __post_init__(self) -> None:
        if not self.value >= 0.0:
            raise ValueError("square-function value must be a nonnegative real")
        object.__setattr__(self, "point", tuple(float(c) for c in self.point))


# ---------------------------------------------------------------------------
# axis-level building blocks (everything here is one-dimensional)
# ---------------------------------------------------------------------------


def _axis_edges(f: StepFunction) -> np.ndarray:
    h = f.cell_side
    return f.lo[0] * h + h * np.arange(f.shape[0] + 1)


def _axis_theta(factor: ConvolutionFactor, f: StepFunction, t: float,
                points: np.ndarray) -> np.ndarray:
    """theta_t f at an array of points via exact per-cell integrals.

    f splits into its compact part plus the constant tail; the tail maps to
    tail * mass(t) exactly and the compact part to a cell-integral sum."""
    pts = np.asarray(points, dtype=float)
    edges = _axis_edges(f)
    ci = factor.cell_integral(t, pts[..., None], edges[:-1], edges[1:])
    out = ci @ (f.values - f.tail)
    if f.tail != 0.0:
        out = out + f.tail * factor.mass(t)
    return out


def _offset_mesh(box: tuple[float, float], t: float, spec: QuadratureSpec,
                 anchors: Sequence[float], pad_units: float = _PAD_UNITS,
                 rel: float = _MESH_REL,
                 ) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Offset-variable (u = x - y) mesh covering the zone where theta still
    differs appreciably from its far-field constant.  Returns nodes, weights
    and the two mesh edges."""
    blo, bhi = box
    pad = pad_units * t + (bhi - blo)
    grid = graded_axis_edges(blo - pad, bhi + pad, anchors, rel_finest=rel)
    u, du = segment_nodes(grid, spec.points_per_cell, spec.rule)
    return u, du, blo - pad, bhi + pad


def _step_anchors(f: StepFunction) -> list[float]:
    edges = _axis_edges(f)
    return list(edges) if len(edges) <= 33 else [edges[0], edges[-1]]


def _weighted_theta_sq(theta_vals: np.ndarray, du: np.ndarray,
                       u_lo: float, u_hi: float, u: np.ndarray,
                       far_const: float, xs: np.ndarray, t: float,
                       lam: float) -> np.ndarray:
    """int |theta(x - y)|^2 (t/(t+|y|))^lam dy / t for an array of x, given
    theta sampled on a u-mesh and its constant far-field value."""
    integ = theta_vals * theta_vals * du
    out = np.empty(xs.shape)
    step = max(1, int(4e6) // max(1, u.size))
    for i in range(0, xs.size, step):
        xb = xs[i:i + step, None]
        w = (t / (t + np.abs(xb - u[None, :]))) ** lam
        out[i:i + step] = w @ integ
    if far_const != 0.0:
        window = _weight_window(t, lam, xs - u_hi, xs - u_lo)
        out = out + far_const * far_const * (weight_total(t, lam) - window)
    return out / t


def _axis_sq_profile(factor: ConvolutionFactor, f: StepFunction,
                     xs: np.ndarray, t: float, lam: float,
                     spec: QuadratureSpec) -> np.ndarray:
    """A(x, t) = int |theta_t f(x - y)|^2 (t/(t+|y|))^lam dy / t at one scale
    for an array of x; far field in closed form against tail * mass."""
    xs = np.asarray(xs, dtype=float)
    (blo, bhi), = f.box
    anchors = _step_anchors(f)
    if xs.size <= 8:
        anchors = anchors + list(xs.ravel())  # the weight kinks at u = x
    u, du, ulo, uhi = _offset_mesh((blo, bhi), t, spec, anchors)
    th = _axis_theta(factor, f, t, u)
    return _weighted_theta_sq(th, du, ulo, uhi, u, f.tail * factor.mass(t),
                              xs, t, lam)


def _octave_pieces(lo: float, hi: float) -> list[tuple[float, float]]:
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi for a scale range")
    cuts = [lo]
    k = math.floor(math.log2(lo)) + 1
    while 2.0 ** k < hi:
        if 2.0 ** k > lo:
            cuts.append(2.0 ** k)
        k += 1
    cuts.append(hi)
    return list(zip(cuts[:-1], cuts[1:]))


def _geometric_tail(first: float, second: float) -> float:
    """Tail estimate past the outermost octave from its decay ratio; inf
    when the contributions do not decay."""
    if second <= 0.0:
        return 0.0 if first <= 0.0 else math.inf
    rho = first / second
    if rho >= 0.9:
        return math.inf
    return first * rho / (1.0 - rho)


def _tail_report(octs: list[np.ndarray], t_lo: float, t_hi: float) -> np.ndarray:
    """Per-point tail estimates from the outermost octave sums, with a
    truncation warning when the range was evidently too small."""
    shape = octs[0].shape
    if len(octs) >= 2:
        tail = np.array([_geometric_tail(a, b)
                         for a, b in zip(octs[0].ravel(), octs[1].ravel())])
        tail += np.array([_geometric_tail(a, b)
                          for a, b in zip(octs[-1].ravel(), octs[-2].ravel())])
        tail = tail.reshape(shape)
    else:
        tail = np.full(shape, math.inf)
    bulk = float(np.sum(octs, axis=0).sum())
    lost = float(np.sum(tail[np.isfinite(tail)]))
    if (not np.all(np.isfinite(tail))) or lost > _TAIL_WARN * abs(bulk):
        warnings.warn(
            "scale-range truncation: per-octave contributions do not decay "
            f"inside [{t_lo:g}, {t_hi:g}]; tail estimate "
            f"{lost:g}{'' if np.all(np.isfinite(tail)) else ' (unbounded)'}",
            RuntimeWarning, stacklevel=3)
    return tail


def _axis_gstar_sq(factor: ConvolutionFactor, f: StepFunction, xs,
                   lam: float, spec: QuadratureSpec,
                   t_lo: float | None = None, t_hi: float | None = None,
                   ) -> tuple[np.ndarray, np.ndarray]:
    """One-parameter squared square function int A(x, t) dt/t over the scale
    range, with per-octave tail tracking.  Returns (values, tails) over xs."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    t_lo = spec.t_min if t_lo is None else t_lo
    t_hi = spec.t_max if t_hi is None else t_hi
    octs = []
    for a, b in _octave_pieces(t_lo, t_hi):
        tn, tw = octave_nodes(a, b, spec.t_points_per_octave, spec.rule)
        part = np.zeros(xs.shape)
        for t, w in zip(tn, tw):
            part += _axis_sq_profile(factor, f, xs, t, lam, spec) * (w / t)
        octs.append(part)
    total = np.sum(octs, axis=0)
    tail = _tail_report(octs, t_lo, t_hi)
    return total, tail


# ---------------------------------------------------------------------------
# theta: kernel applied to a step function
# ---------------------------------------------------------------------------


def _check_pair_dims(kernel: Kernel) -> None:
    if kernel.n != 1 or kernel.m != 1:
        raise NotImplementedError(
            "quadrature paths are implemented for one-dimensional factors")


def _tensor_step(f1: StepFunction, f2: StepFunction) -> StepFunction:
    """The product f1 (x) f2 as a plane step function (tails must vanish)."""
    if f1.dim != 1 or f2.dim != 1:
        raise ValueError("tensor factors must be one-dimensional")
    if f1.tail != 0.0 or f2.tail != 0.0:
        raise ValueError("tensor factors must have vanishing tails")
    level = max(f1.level, f2.level)
    a, b = f1.refined(level), f2.refined(level)
    return StepFunction(level=level, lo=(a.lo[0], b.lo[0]),
                        values=np.multiply.outer(a.values, b.values))


def _split_pair(f) -> tuple[StepFunction, StepFunction] | None:
    if isinstance(f, tuple):
        if len(f) != 2 or not all(isinstance(g, StepFunction) for g in f):
            raise ValueError("a tensor argument must be a pair of step functions")
        if f[0].dim != 1 or f[1].dim != 1:
            raise ValueError("tensor factor functions must be one-dimensional")
        return f
    if not isinstance(f, StepFunction):
        raise TypeError("expected a StepFunction or a pair of them")
    return None


def _axis_edges_2d(f: StepFunction) -> tuple[np.ndarray, np.ndarray]:
    h = f.cell_side
    return (f.lo[0] * h + h * np.arange(f.shape[0] + 1),
            f.lo[1] * h + h * np.arange(f.shape[1] + 1))


def _refined_axis_nodes(f: StepFunction, axis: int, t: float, p: int,
                        rule: str, cap: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes along one axis of f's box: each lattice cell is split
    until the pieces are below t/2 (capped), so a kernel smooth at scale t is
    resolved without per-point meshes."""
    h = f.cell_side
    lo = f.lo[axis] * h
    edges = [lo]
    for _ in range(f.shape[axis]):
        parts = min(cap, max(1, math.ceil(h / (0.5 * t))))
        start = edges[-1]
        edges.extend(start + h * (j + 1) / parts for j in range(parts))
    return segment_nodes(np.array(edges), p, rule)


def _axis_theta_raw(factor: ConvolutionFactor, f: StepFunction, t: float,
                    u: np.ndarray, spec: QuadratureSpec) -> np.ndarray:
    """theta_t f on a u-mesh from raw profile values (no antiderivatives):
    the independent oracle for :func:`_axis_theta`.  Compact f only.  The
    z-mesh subdivides cells to t/8 so the midpoint rule carries the profile
    kink at z = u."""
    if f.tail != 0.0:
        raise ValueError("the raw axis oracle needs a compact function")
    h = f.cell_side
    parts = min(512, max(1, math.ceil(h / (0.125 * t))))
    edges = _axis_edges(f)[0] + h / parts * np.arange(f.shape[0] * parts + 1)
    z, wz = segment_nodes(edges, spec.points_per_cell, spec.rule)
    fw = f(z) * wz
    out = np.empty(u.shape)
    step = max(1, int(4e6) // max(1, z.size))
    for i in range(0, u.size, step):
        out[i:i + step] = factor.profile(
            t, np.abs(u[i:i + step, None] - z[None, :])) @ fw
    return out


def _theta_points_general(kernel: Kernel, f: StepFunction, t1: float,
                          t2: float, pts: np.ndarray,
                          spec: QuadratureSpec) -> np.ndarray:
    """theta f at an (N, 2) array of points from raw kernel evaluations.

    A compact f shares one z-mesh across all points; a constant tail forces
    per-point graded windows sized by the declared decay, priced accordingly."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if f.tail == 0.0:
        z1, w1 = _refined_axis_nodes(f, 0, t1, spec.points_per_cell, spec.rule)
        z2, w2 = _refined_axis_nodes(f, 1, t2, spec.points_per_cell, spec.rule)
        zg = np.stack(np.meshgrid(z1, z2, indexing="ij"), axis=-1).reshape(-1, 2)
        fw = f(zg[:, 0], zg[:, 1]) * np.multiply.outer(w1, w2).ravel()
        out = np.empty(pts.shape[0])
        step = max(1, int(4e6) // max(1, zg.shape[0]))
        for i in range(0, pts.shape[0], step):
            kv = kernel.evaluate(t1, t2, pts[i:i + step, None, :],
                                 zg[None, :, :])
            out[i:i + step] = np.asarray(kv, dtype=float) @ fw
        return out
    out = np.empty(pts.shape[0])
    for i, p in enumerate(pts):
        meshes = []
        for axis, (t, a) in enumerate(((t1, kernel.alpha), (t2, kernel.beta))):
            blo, bhi = f.box[axis]
            rad = t * (2.0 / (a * spec.truncation_eps)) ** (1.0 / a)
            wlo = min(blo, p[axis] - rad)
            whi = max(bhi, p[axis] + rad)
            # the anchor ladders must bottom out below the kernel ridge width
            # t, or the whole window is priced at the (huge) tail radius
            fine = min(2.0 ** -20, 0.25 * t / (whi - wlo))
            grid = graded_axis_edges(wlo, whi, (p[axis], blo, bhi),
                                     rel_finest=fine)
            meshes.append(segment_nodes(grid, spec.points_per_cell, spec.rule))
        (z1, w1), (z2, w2) = meshes
        zg = np.stack(np.meshgrid(z1, z2, indexing="ij"), axis=-1).reshape(-1, 2)
        fw = f(zg[:, 0], zg[:, 1]) * np.multiply.outer(w1, w2).ravel()
        kv = np.asarray(kernel.evaluate(t1, t2, p[None, :], zg), dtype=float)
        out[i] = kv @ fw
    return out


def apply_theta(kernel: Kernel, f: StepFunction, y, t1: float, t2: float,
                spec: QuadratureSpec | None = None) -> float:
    """theta_{t1,t2} f at the point y: iint K(y, z) f(z) dz.

    Tensor kernels integrate each lattice cell in closed form, with a
    constant tail contributing tail * mass1 * mass2 exactly; other kernels go
    through the raw-evaluation quadrature."""
    spec = spec or QuadratureSpec()
    if t1 <= 0 or t2 <= 0:
        raise ValueError("scales must be positive")
    _check_pair_dims(kernel)
    if f.dim != kernel.n + kernel.m:
        raise ValueError("function dimension must match the kernel's plane")
    if f.tail != 0.0 and min(kernel.alpha, kernel.beta) <= 0:
        raise ValueError("tail integral needs positive decay exponents")
    y = np.asarray(y, dtype=float).reshape(2)
    if kernel.tensor_parts is not None:
        g1, g2 = kernel.tensor_parts
        e1, e2 = _axis_edges_2d(f)
        c1 = g1.cell_integral(t1, y[0], e1[:-1], e1[1:])
        c2 = g2.cell_integral(t2, y[1], e2[:-1], e2[1:])
        val = c1 @ (f.values - f.tail) @ c2
        if f.tail != 0.0:
            val += f.tail * g1.mass(t1) * g2.mass(t2)
        return float(val)
    return float(_theta_points_general(kernel, f, t1, t2, y[None, :], spec)[0])


# ---------------------------------------------------------------------------
# pointwise square function
# ---------------------------------------------------------------------------


def _sqrt_clamped(v: float) -> tuple[float, bool]:
    if v < 0.0:
        return 0.0, True
    return math.sqrt(v), False


def gstar_pointwise(kernel: Kernel, f, x, params: Params,
                    spec: QuadratureSpec | None = None,
                    route: str = "auto") -> GStarValue:
    """The square-function value at the point x.

    ``f`` is a plane step function, or a pair (f1, f2) standing for their
    tensor product.  Routes: "fast" multiplies the two one-parameter axis
    values (tensor kernel with pair f only); "full" assembles the joint
    scale-pair sum from raw kernel evaluations and is the independent oracle
    for the fast path; "auto" picks fast when available."""
    spec = spec or QuadratureSpec()
    if route not in ("auto", "fast", "full"):
        raise ValueError(f"unknown route {route!r}")
    _check_pair_dims(kernel)
    if params.lambda1 <= 1 or params.lambda2 <= 1:
        raise ValueError("weight powers must exceed 1")
    x = np.asarray(x, dtype=float).reshape(2)
    pair = _split_pair(f)
    lam1 = params.n * params.lambda1
    lam2 = params.m * params.lambda2

    if route == "auto":
        route = "fast" if (pair is not None and kernel.tensor_parts is not None) \
            else "full"
    if route == "fast":
        if pair is None or kernel.tensor_parts is None:
            raise ValueError("fast route needs a tensor kernel and a pair f")
        g1, g2 = kernel.tensor_parts
        v1s, e1s = _axis_gstar_sq(g1, pair[0], x[0], lam1, spec)
        v2s, e2s = _axis_gstar_sq(g2, pair[1], x[1], lam2, spec)
        v1, e1, v2, e2 = float(v1s[0]), float(e1s[0]), float(v2s[0]), float(e2s[0])
        sq = v1 * v2
        err_sq = abs(e1) * abs(v2) + abs(e2) * abs(v1)
    elif pair is not None and kernel.tensor_parts is not None:
        sq, err_sq = _pointwise_full_tensor_sq(kernel, pair, x, lam1, lam2,
                                               spec)
    else:
        f2d = _tensor_step(*pair) if pair is not None else f
        if f2d.tail != 0.0:
            raise ValueError("full route needs a compactly supported function")
        sq, err_sq = _pointwise_full_sq(kernel, f2d, x, lam1, lam2, spec)
    value, clamped = _sqrt_clamped(sq)
    error = err_sq / (2.0 * value) if value > 0 else math.sqrt(max(err_sq, 0.0))
    return GStarValue(point=tuple(x), value=value, error=error, spec=spec,
                      clamped=clamped)


def _axis_full_sq(factor: ConvolutionFactor, f: StepFunction, x0: float,
                  lam: float, spec: QuadratureSpec) -> tuple[float, float]:
    """One-parameter squared value assembled from raw profile evaluations on
    the coarse mesh family -- no antiderivatives, no closed far field.  The
    independent per-axis oracle for the fast path (compact f only)."""
    (blo, bhi), = f.box
    octs = []
    for a, b in _octave_pieces(spec.t_min, spec.t_max):
        tn, tw = octave_nodes(a, b, spec.t_points_per_octave, spec.rule)
        part = 0.0
        for t, w in zip(tn, tw):
            u, du, _, _ = _offset_mesh((blo, bhi), t, spec,
                                       _step_anchors(f) + [x0],
                                       _ORACLE_PAD_UNITS, _ORACLE_MESH_REL)
            th = _axis_theta_raw(factor, f, t, u, spec)
            wg = (t / (t + np.abs(x0 - u))) ** lam * du
            part += float((th * th) @ wg) / t * (w / t)
        octs.append(np.array([part]))
    total = float(np.sum(octs))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        tail = float(_tail_report(octs, spec.t_min, spec.t_max)[0])
    return total, tail


def _pointwise_full_tensor_sq(kernel: Kernel, pair, x: np.ndarray,
                              lam1: float, lam2: float,
                              spec: QuadratureSpec) -> tuple[float, float]:
    """Full-route value for a tensor kernel with pair f: the two axis sums
    are assembled independently from raw profile values and multiplied."""
    if pair[0].tail != 0.0 or pair[1].tail != 0.0:
        raise ValueError("full route needs a compactly supported function")
    g1, g2 = kernel.tensor_parts
    v1, e1 = _axis_full_sq(g1, pair[0], x[0], lam1, spec)
    v2, e2 = _axis_full_sq(g2, pair[1], x[1], lam2, spec)
    err = abs(e1) * abs(v2) + abs(e2) * abs(v1) \
        if math.isfinite(e1) and math.isfinite(e2) else math.inf
    return v1 * v2, err


def _pointwise_full_sq(kernel: Kernel, f: StepFunction, x: np.ndarray,
                       lam1: float, lam2: float,
                       spec: QuadratureSpec) -> tuple[float, float]:
    """Joint quadrature of the defining integral from raw kernel values.

    For every scale pair, theta is sampled on the tensor mesh of the two
    structure zones and contracted against both weights; octave sums are
    tracked on each scale axis for the tail report.  Meshes are the coarser
    raw-path family: this route prices kernel calls, not mesh density."""
    pieces = _octave_pieces(spec.t_min, spec.t_max)
    o1 = np.zeros(len(pieces))
    o2 = np.zeros(len(pieces))
    b1, b2 = f.box
    for i1, (a1, c1) in enumerate(pieces):
        t1n, t1w = octave_nodes(a1, c1, spec.t_points_per_octave, spec.rule)
        for t1, w1 in zip(t1n, t1w):
            u1, du1, _, _ = _offset_mesh(b1, t1, spec, b1,
                                         _RAW_PAD_UNITS, _RAW_MESH_REL)
            wg1 = (t1 / (t1 + np.abs(x[0] - u1))) ** lam1 * du1
            for i2, (a2, c2) in enumerate(pieces):
                t2n, t2w = octave_nodes(a2, c2, spec.t_points_per_octave,
                                        spec.rule)
                for t2, w2 in zip(t2n, t2w):
                    u2, du2, _, _ = _offset_mesh(b2, t2, spec, b2,
                                                 _RAW_PAD_UNITS,
                                                 _RAW_MESH_REL)
                    wg2 = (t2 / (t2 + np.abs(x[1] - u2))) ** lam2 * du2
                    pts = np.stack(np.meshgrid(u1, u2, indexing="ij"),
                                   axis=-1).reshape(-1, 2)
                    th = _theta_points_general(kernel, f, t1, t2, pts, spec)
                    th2 = (th * th).reshape(u1.size, u2.size)
                    contrib = float(wg1 @ th2 @ wg2) / (t1 * t2) \
                        * (w1 / t1) * (w2 / t2)
                    o1[i1] += contrib
                    o2[i2] += contrib
    total = float(o1.sum())
    tail = 0.0
    for o in (o1, o2):
        if len(o) >= 2:
            tail += _geometric_tail(o[0], o[1]) + _geometric_tail(o[-1], o[-2])
        else:
            tail = math.inf
    if not math.isfinite(tail) or tail > _TAIL_WARN * abs(total):
        warnings.warn(
            "scale-range truncation: octave contributions do not decay; "
            f"tail estimate {tail:g}", RuntimeWarning, stacklevel=2)
    return total, tail


# ---------------------------------------------------------------------------
# squared norm
# ---------------------------------------------------------------------------


def _grid_t_range(grid: ShiftedGrid, spec: QuadratureSpec) -> tuple[float, float]:
    lo = max(2.0 ** -(grid.j_max + 1), spec.t_min)
    hi = min(2.0 ** -grid.j_min, spec.t_max)
    if not lo < hi:
        raise ValueError(
            "scale-range truncation: the grid's scale strip misses the spec's")
    return lo, hi


def gstar_sq_norm(kernel: Kernel, f, params: Params,
                  grid_pair: tuple[ShiftedGrid, ShiftedGrid],
                  spec: QuadratureSpec | None = None,
                  route: str = "whitney") -> float:
    """The squared L2 norm of the square function of f.

    Routes:

    * "whitney" (default): the sum over grid-cube pairs of Whitney-region
      integrals -- the rewriting behind the whole averaging argument.  The
      regions tile the scale strip the grid pair covers; in position the sum
      is restricted to a window around the support and the boundary-cube
      contribution is reported if it is still material.
    * "direct": integrates gstar_pointwise^2 over the truncation window.
    * "gram": tensor kernels only.  Integrating x over the whole line
      decouples the weight from theta exactly, so the norm contracts the
      lattice Gram matrices of the two factor responses; this is the fast
      path the bulk experiments use.

    f is a plane step function or a pair of axis functions; tails must
    vanish.  The scale strip is the grid pair's, clipped to the spec's."""
    spec = spec or QuadratureSpec()
    if route not in ("whitney", "direct", "gram"):
        raise ValueError(f"unknown route {route!r}")
    _check_pair_dims(kernel)
    grid1, grid2 = grid_pair
    if grid1.dim != 1 or grid2.dim != 1:
        raise ValueError("the grid pair must consist of one-dimensional grids")
    pair = _split_pair(f)
    tails = (pair[0].tail, pair[1].tail) if pair is not None else (f.tail,)
    if any(t != 0.0 for t in tails):
        raise ValueError("norms need vanishing tails")
    lam1 = params.n * params.lambda1
    lam2 = params.m * params.lambda2
    r1 = _grid_t_range(grid1, spec)
    r2 = _grid_t_range(grid2, spec)

    if route == "gram":
        if kernel.tensor_parts is None:
            raise NotImplementedError("the gram route needs a tensor kernel")
        g1, g2 = kernel.tensor_parts
        f2d = _tensor_step(*pair) if pair is not None else f
        m1 = _axis_gram(g1, f2d.level, f2d.shape[0], lam1, r1, spec)
        m2 = _axis_gram(g2, f2d.level, f2d.shape[1], lam2, r2, spec)
        area = f2d.cell_side ** 2
        vals = f2d.values * area  # the contraction runs over cell integrals
        return float(np.einsum("ac,bd,ab,cd->", m1, m2, vals, vals))

    if route == "direct":
        if pair is not None and kernel.tensor_parts is not None:
            g1, g2 = kernel.tensor_parts
            return (_axis_direct_norm(g1, pair[0], lam1, r1, spec)
                    * _axis_direct_norm(g2, pair[1], lam2, r2, spec))
        f2d = _tensor_step(*pair) if pair is not None else f
        return _general_norm(kernel, f2d, lam1, lam2, r1, r2, spec,
                             grids=None)

    if kernel.tensor_parts is not None and pair is not None:
        g1, g2 = kernel.tensor_parts
        return (_axis_whitney_norm(g1, pair[0], lam1, grid1, r1, spec)
                * _axis_whitney_norm(g2, pair[1], lam2, grid2, r2, spec))
    f2d = _tensor_step(*pair) if pair is not None else f
    return _general_norm(kernel, f2d, lam1, lam2, r1, r2, spec,
                         grids=(grid1, grid2))


def _norm_window(box: tuple[float, float], t_hi: float,
                 spec: QuadratureSpec) -> tuple[float, float]:
    """Position window outside which the pointwise squares are below
    tolerance relative to the bulk (the weights decay cubically here)."""
    blo, bhi = box
    reach = (1.0 + t_hi + (bhi - blo)) * max(8.0, spec.truncation_eps ** -0.125)
    return blo - reach, bhi + reach


def _level_nodes(grid: ShiftedGrid, level: int, window: tuple[float, float],
                 spec: QuadratureSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature nodes for all grid cubes at one level meeting a window:
    (nodes, weights, owning-cube ordinal)."""
    xs, xw, owner = [], [], []
    for idx, cube in enumerate(grid.cubes_overlapping(level, [window])):
        (clo, chi), = cube.box()
        nodes, wts = segment_nodes(np.array([clo, chi]),
                                   spec.points_per_cell, spec.rule)
        xs.append(nodes)
        xw.append(wts)
        owner.append(np.full(nodes.shape, idx, dtype=int))
    if not xs:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=int)
    return np.concatenate(xs), np.concatenate(xw), np.concatenate(owner)


def _axis_whitney_norm(factor: ConvolutionFactor, f: StepFunction, lam: float,
                       grid: ShiftedGrid, t_range: tuple[float, float],
                       spec: QuadratureSpec) -> float:
    """One-parameter squared norm as the sum over the grid's Whitney regions
    (cube cross its upper half-octave of scales)."""
    total = 0.0
    edge = 0.0
    for level in grid.levels():
        side = 2.0 ** -level
        t_lo, t_hi = max(side / 2, t_range[0]), min(side, t_range[1])
        if not t_lo < t_hi:
            continue
        window = _norm_window(f.box[0], t_hi, spec)
        xs, xw, owner = _level_nodes(grid, level, window, spec)
        if xs.size == 0:
            continue
        tn, tw = octave_nodes(t_lo, t_hi, spec.t_points_per_octave, spec.rule)
        level_vals = np.zeros(xs.shape)
        for t, w in zip(tn, tw):
            level_vals += _axis_sq_profile(factor, f, xs, t, lam, spec) * (w / t)
        per_cube = np.bincount(owner, weights=level_vals * xw)
        total += float(per_cube.sum())
        if per_cube.size >= 2:
            edge += float(per_cube[0] + per_cube[-1])
    if edge > _TAIL_WARN * abs(total):
        warnings.warn(
            "position truncation: boundary cubes still carry "
            f"{edge:g} of {total:g}; widen the window", RuntimeWarning,
            stacklevel=2)
    return total


def _axis_direct_norm(factor: ConvolutionFactor, f: StepFunction, lam: float,
                      t_range: tuple[float, float],
                      spec: QuadratureSpec) -> float:
    """One-parameter squared norm by integrating the pointwise values over a
    graded truncation window."""
    wlo, whi = _norm_window(f.box[0], t_range[1], spec)
    (blo, bhi), = f.box
    grid = graded_axis_edges(wlo, whi, (blo, bhi), rel_finest=2.0 ** -16)
    xs, xw = segment_nodes(grid, spec.points_per_cell, spec.rule)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        vals, _ = _axis_gstar_sq(factor, f, xs, lam, spec,
                                 t_lo=t_range[0], t_hi=t_range[1])
    return float(vals @ xw)


def _general_norm(kernel: Kernel, f: StepFunction, lam1: float, lam2: float,
                  r1: tuple[float, float], r2: tuple[float, float],
                  spec: QuadratureSpec,
                  grids: tuple[ShiftedGrid, ShiftedGrid] | None) -> float:
    """Squared norm from raw kernel evaluations.  With grids, the position
    nodes follow the Whitney cubes band by band (the honest region sum);
    without, a graded window mesh (the direct integral).  Reference quality:
    cost scales with the scale-pair count."""
    b1, b2 = f.box

    def _band_nodes(grid, r, band_hi, box):
        if grid is not None:
            level = int(round(-math.log2(band_hi)))
            return _level_nodes(grid, level, _norm_window(box, band_hi, spec),
                                spec)[:2]
        g = graded_axis_edges(*_norm_window(box, r[1], spec), box,
                              rel_finest=2.0 ** -8)
        return segment_nodes(g, spec.points_per_cell, spec.rule)

    total = 0.0
    for a1, c1 in _octave_pieces(*r1):
        x1, xw1 = _band_nodes(grids[0] if grids else None, r1, c1, b1)
        if x1.size == 0:
            continue
        t1n, t1w = octave_nodes(a1, c1, spec.t_points_per_octave, spec.rule)
        for a2, c2 in _octave_pieces(*r2):
            x2, xw2 = _band_nodes(grids[1] if grids else None, r2, c2, b2)
            if x2.size == 0:
                continue
            t2n, t2w = octave_nodes(a2, c2, spec.t_points_per_octave,
                                    spec.rule)
            for t1, w1 in zip(t1n, t1w):
                u1, du1, _, _ = _offset_mesh(b1, t1, spec, b1,
                                             _RAW_PAD_UNITS, _RAW_MESH_REL)
                wg1 = (t1 / (t1 + np.abs(x1[:, None] - u1[None, :]))) ** lam1 \
                    * du1[None, :]
                for t2, w2 in zip(t2n, t2w):
                    u2, du2, _, _ = _offset_mesh(b2, t2, spec, b2,
                                                 _RAW_PAD_UNITS,
                                                 _RAW_MESH_REL)
                    wg2 = (t2 / (t2 + np.abs(x2[:, None] - u2[None, :]))) ** lam2 \
                        * du2[None, :]
                    pts = np.stack(np.meshgrid(u1, u2, indexing="ij"),
                                   axis=-1).reshape(-1, 2)
                    th = _theta_points_general(kernel, f, t1, t2, pts, spec)
                    th2 = (th * th).reshape(u1.size, u2.size)
                    block = wg1 @ th2 @ wg2.T  # inner values over (x1, x2)
                    total += float(xw1 @ block @ xw2) / (t1 * t2) \
                        * (w1 / t1) * (w2 / t2)
    return total


_GRAM_CACHE: dict = {}


def _axis_gram(factor: ConvolutionFactor, level: int, n_cells: int,
               lam: float, t_range: tuple[float, float],
               spec: QuadratureSpec) -> np.ndarray:
    """Gram matrix of the unit lattice-cell responses on one axis.

    Entry (c, c') is int_t [ int_u Psi_c(t, u) Psi_c'(t, u) du ]
    weight_total(t, lam) dt / t^2, with Psi_c theta applied to the indicator
    of cell c over the cell measure.  Integrating the position over the whole
    line decouples the weight (substitute u = x - y), which is what makes
    this exact and cheap; entries depend on |c - c'| only, so one
    autocorrelation row per scale is accumulated.  Cached."""
    key = (factor, level, n_cells, lam, t_range,
           spec.points_per_cell, spec.t_points_per_octave, spec.rule)
    hit = _GRAM_CACHE.get(key)
    if hit is not None:
        return hit
    h = 2.0 ** -level
    lags = h * np.arange(n_cells)
    row = np.zeros(n_cells)
    for a, b in _octave_pieces(*t_range):
        tn, tw = octave_nodes(a, b, spec.t_points_per_octave, spec.rule)
        for t, w in zip(tn, tw):
            pad = _PAD_UNITS * t + h
            grid = graded_axis_edges(-pad, h + pad, (0.0, h),
                                     rel_finest=_MESH_REL)
            u, du = segment_nodes(grid, spec.points_per_cell, spec.rule)
            base = factor.cell_integral(t, u, 0.0, h) / h
            shifted = factor.cell_integral(t, u[:, None] + lags[None, :],
                                           0.0, h) / h
            auto = (base * du) @ shifted
            row += auto * weight_total(t, lam) / t ** 2 * w
    idx = np.abs(np.arange(n_cells)[:, None] - np.arange(n_cells)[None, :])
    gram = row[idx]
    _GRAM_CACHE[key] = gram
    return gram


# ---------------------------------------------------------------------------
# localized quantities
# ---------------------------------------------------------------------------


def _weighted_pair_sq(kernel: Kernel, f1: StepFunction, f2: StepFunction,
                      x: np.ndarray, t1: float, t2: float, lam1: float,
                      lam2: float, spec: QuadratureSpec) -> float:
    """iint |theta (f1 (x) f2)(x - y)|^2 w1 w2 dy / (t1 t2) at one scale
    pair.  Tensor kernels separate exactly; raw kernels need both tails to
    vanish (no closed far field is available for them)."""
    if kernel.tensor_parts is not None:
        g1, g2 = kernel.tensor_parts
        a = _axis_sq_profile(g1, f1, np.array([x[0]]), t1, lam1, spec)
        b = _axis_sq_profile(g2, f2, np.array([x[1]]), t2, lam2, spec)
        return float(a[0] * b[0])
    if f1.tail != 0.0 or f2.tail != 0.0:
        raise NotImplementedError(
            "constant tails need a tensor kernel: the raw-evaluation "
            "quadrature has no closed far field")
    f2d = _tensor_step(f1, f2)
    b1, b2 = f2d.box
    u1, du1, _, _ = _offset_mesh(b1, t1, spec, b1, _RAW_PAD_UNITS,
                                 _RAW_MESH_REL)
    u2, du2, _, _ = _offset_mesh(b2, t2, spec, b2, _RAW_PAD_UNITS,
                                 _RAW_MESH_REL)
    wg1 = (t1 / (t1 + np.abs(x[0] - u1))) ** lam1 * du1
    wg2 = (t2 / (t2 + np.abs(x[1] - u2))) ** lam2 * du2
    pts = np.stack(np.meshgrid(u1, u2, indexing="ij"), axis=-1).reshape(-1, 2)
    th = _theta_points_general(kernel, f2d, t1, t2, pts, spec)
    th2 = (th * th).reshape(u1.size, u2.size)
    return float(wg1 @ th2 @ wg2) / (t1 * t2)


def p_quantity(kernel: Kernel, i1: DyadicCube, j1: DyadicCube, x,
               t1: float, t2: float, params: Params,
               spec: QuadratureSpec | None = None) -> float:
    """Weighted pair integral of theta applied to the Haar function of
    I1 x J1 at (x, t): the square root of

        iint |theta h_{I1 x J1}(x - y)|^2 w1 w2 dy1 dy2 / (t1^n t2^m).

    Whitney membership of (x1, t1) and (x2, t2) is the caller's assertion."""
    spec = spec or QuadratureSpec()
    _check_pair_dims(kernel)
    if t1 <= 0 or t2 <= 0:
        raise ValueError("scales must be positive")
    x = np.asarray(x, dtype=float).reshape(2)
    h1 = haar_function(HaarIndex(cube=i1, eta=(1,)))
    h2 = haar_function(HaarIndex(cube=j1, eta=(1,)))
    sq = _weighted_pair_sq(kernel, h1, h2, x, t1, t2,
                           params.n * params.lambda1,
                           params.m * params.lambda2, spec)
    return _sqrt_clamped(sq)[0]


def q_quantity(kernel: Kernel, i: DyadicCube, k: int, j1: DyadicCube, x,
               t1: float, t2: float, params: Params,
               spec: QuadratureSpec | None = None) -> float:
    """Same integral with the first factor replaced by the modified ancestor
    pattern of I at generation k (constant tail, closed far field).  Raises
    when the ancestor chain leaves the grid truncation."""
    spec = spec or QuadratureSpec()
    _check_pair_dims(kernel)
    if k < 1:
        raise ValueError("need k >= 1")
    x = np.asarray(x, dtype=float).reshape(2)
    s = s_function(i, k)
    h2 = haar_function(HaarIndex(cube=j1, eta=(1,)))
    sq = _weighted_pair_sq(kernel, s, h2, x, t1, t2,
                           params.n * params.lambda1,
                           params.m * params.lambda2, spec)
    return _sqrt_clamped(sq)[0]


def k_quantity(kernel_factor: ConvolutionFactor, i: DyadicCube, k: int,
               x1: float, t1: float, params: Params,
               spec: QuadratureSpec | None = None) -> float:
    """The complement integral at generation k: the square root of

        int ( int_{(I^(k-1))^c} profile(t1, |x1 - y1 - z1|) dz1 )^2
            (t1/(t1+|y1|))^(n lam1) dy1 / t1^n.

    The inner integral is mass minus the cell integral over the ancestor,
    exact in closed form; the outer far field is the factor's mass against
    the weight tail."""
    spec = spec or QuadratureSpec()
    if kernel_factor.dim != 1 or params.n != 1:
        raise NotImplementedError("the closed complement needs 1-d factors")
    if k < 1:
        raise ValueError("need k >= 1")
    if t1 <= 0:
        raise ValueError("scale must be positive")
    ancestor = i.grid.ancestor(i, k - 1)
    (alo, ahi), = ancestor.box()
    lam = params.n * params.lambda1
    mass = kernel_factor.mass(t1)
    u, du, ulo, uhi = _offset_mesh((alo, ahi), t1, spec,
                                   (alo, ahi, float(x1)))
    comp = mass - kernel_factor.cell_integral(t1, u, alo, ahi)
    sq = _weighted_theta_sq(comp, du, ulo, uhi, u, mass,
                            np.array([float(x1)]), t1, lam)
    return _sqrt_clamped(float(sq[0]))[0]


def r_quantity(kernel: Kernel, i: DyadicCube, j1: DyadicCube, x2: float,
               t2: float, params: Params, grid: ShiftedGrid,
               spec: QuadratureSpec | None = None) -> float:
    """Carleson-box sum over the descendants of I:

        sum_{I' subset I} iint_{W_I'} iint |theta(1 (x) h_J1)(x - y)|^2
            w1 w2 dy / (t1^n t2^m) dx1 dt1 / t1,

    truncated at the grid's finest level.  The descendants' Whitney regions
    tile I x (finest/2, ell(I)], and theta(1 (x) h) is independent of
    (x1, y1) for a convolution kernel, so each level band contributes the
    same closed amount: |I| ln 2 mass^2 (int w1/t1) times the second-axis
    factor at (x2, t2).  Tensor kernels only (the constant slot needs a
    closed mass).

    Mass-carrying kernels genuinely grow linearly in the level count here --
    that log divergence is what the packing condition excludes, and it is
    reported, not hidden."""
    spec = spec or QuadratureSpec()
    _check_pair_dims(kernel)
    if kernel.tensor_parts is None:
        raise NotImplementedError(
            "descendant sums are closed-form for tensor kernels only")
    if grid is not i.grid:
        raise ValueError("the cube must belong to the supplied grid")
    if t2 <= 0:
        raise ValueError("scale must be positive")
    g1, g2 = kernel.tensor_parts
    lam1 = params.n * params.lambda1
    lam2 = params.m * params.lambda2
    h2 = haar_function(HaarIndex(cube=j1, eta=(1,)))
    axis2 = float(_axis_sq_profile(g2, h2, np.array([float(x2)]), t2, lam2,
                                   spec)[0])
    mass = g1.mass(1.0)  # scale-free for both flavors
    w1_per_t = 2.0 / (lam1 - 1.0)  # int (t1/(t1+|y1|))^lam1 dy1 / t1
    n_bands = grid.j_max - i.level + 1
    if n_bands < 1:
        raise ValueError("the cube sits below the grid's finest level")
    per_band = i.measure() * math.log(2.0) * mass * mass * w1_per_t * axis2
    if mass != 0.0 and n_bands >= 2:
        warnings.warn(
            "descendant-level truncation: per-level contributions do not "
            f"decay ({n_bands} equal bands of {per_band:g} each); the sum "
            "grows with the grid depth", RuntimeWarning, stacklevel=2)
    return per_band * n_bands
