"""Parameter records, dyadic step functions, and the shared quadrature engine.

Everything downstream (grid geometry, Haar systems, kernel testing, the
square-function quadratures, Carleson packing) is built on three ingredients
that live here:

* ``Params`` -- exponent bookkeeping for the two factor spaces: dimensions,
  Hölder exponents, weight powers, and the goodness radius of the random-grid
  machinery.  The grid exponents ``gamma_n``, ``gamma_m`` are derived from the
  Hölder exponents exactly and are not free knobs.
* ``StepFunction`` -- a step function on a dyadic lattice with an optional
  constant tail outside its support box.  This is the concrete carrier for
  test functions, Haar functions, indicators of open sets, and the modified
  ancestor patterns (which are constant but nonzero far away, hence the tail).
* a small deterministic quadrature kit -- graded tensor-product meshes for
  space axes and log-uniform per-octave rules for scale axes.  Scale measures
  downstream are all of the form dt/t, which a log-space midpoint rule
  integrates exactly for 1/t integrands; space integrands are either step
  functions (midpoint-exact) or kernels peaked at known points (handled by
  grading the mesh geometrically toward the peaks).

All values are immutable after construction and all routines are pure, so
everything here is safe to share across threads.  Summations are numpy
pairwise reductions over deterministically ordered nodes: results do not
depend on thread count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Params",
    "QuadratureSpec",
    "StepFunction",
    "default_params",
    "graded_axis_edges",
    "integrate_box",
    "integrate_halfspace",
    "octave_nodes",
    "read_step",
    "segment_nodes",
    "truncation_radius",
    "write_step",
]

# Default goodness radius.  The smallest radius for which good cubes exist at
# all under the default 12-octave grid truncation is 9, but the exact good-cube
# probability there is 7/2048 -- statistically useless.  The default is the
# smallest radius whose exact probability is at least 0.05 (it is 63/1024 at
# 12 octaves); ``glstar.dyadic.default_shift_radius`` recomputes this from the
# exact enumeration and the test suite pins the two to each other.
DEFAULT_SHIFT_RADIUS = 10


@dataclass(frozen=True)
class Params:
    """Exponents and dimensions of the two-factor setup.

    ``n`` and ``m`` are the dimensions of the two factor spaces, ``alpha`` and
    ``beta`` the kernel smoothness exponents, ``lambda1`` and ``lambda2`` the
    weight powers of the square function, and ``r`` the goodness radius: a grid
    cube is *good* when it stays quantitatively inside every grid cube at least
    2^r times coarser.  The derived exponents

        gamma_n = alpha / (2 (n + alpha)),   gamma_m = beta / (2 (m + beta))

    set the boundary-avoidance threshold ``ell(I)^gamma ell(J)^(1-gamma)``.

    In ``theorem_mode`` the constructor enforces the parameter region of the
    L^2 bound: lambda1, lambda2 > 2 and 0 < alpha <= n (lambda1 - 2)/2,
    0 < beta <= m (lambda2 - 2)/2.  Outside theorem mode violations only warn,
    so decay studies can probe the boundary of the region.
    """

    n: int = 1
    m: int = 1
    alpha: float = 0.5
    beta: float = 0.5
    lambda1: float = 3.0
    lambda2: float = 3.0
    r: int = DEFAULT_SHIFT_RADIUS
    theorem_mode: bool = True

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError("factor dimensions must be positive integers")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("smoothness exponents must be positive")
        if self.lambda1 <= 1 or self.lambda2 <= 1:
            raise ValueError("weight powers must exceed 1 for convergence")
        if self.r < 1:
            raise ValueError("goodness radius must be a positive integer")
        problems = []
        if not (self.lambda1 > 2 and self.lambda2 > 2):
            problems.append("weight powers must exceed 2 in the theorem region")
        if not (self.alpha <= self.n * (self.lambda1 - 2) / 2):
            problems.append("alpha exceeds n (lambda1 - 2)/2")
        if not (self.beta <= self.m * (self.lambda2 - 2) / 2):
            problems.append("beta exceeds m (lambda2 - 2)/2")
        if problems:
            msg = "; ".join(problems)
            if self.theorem_mode:
                raise ValueError(msg)
            warnings.warn(msg, stacklevel=2)

    @property
    def gamma_n(self) -> float:
        return self.alpha / (2.0 * (self.n + self.alpha))

    @property
    def gamma_m(self) -> float:
        return self.beta / (2.0 * (self.m + self.beta))

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "alpha": self.alpha,
            "beta": self.beta,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "r": self.r,
            "gamma_n": self.gamma_n,
            "gamma_m": self.gamma_m,
        }


def default_params(**overrides) -> Params:
    """The desk-scale configuration: n = m = 1, alpha = beta = 1/2,
    lambda1 = lambda2 = 3 (so gamma = 1/6 on both factors), r = 10."""
    return Params(**overrides)


@dataclass(frozen=True)
class QuadratureSpec:
    """Resolution knobs for the quadrature kit.

    ``points_per_cell`` is the per-axis rule order on each mesh segment (and
    on each lattice cell when integrating against step functions);
    ``t_points_per_octave`` the number of nodes per factor of two on scale
    axes; ``truncation_eps`` the tolerance used to cut unbounded integrals via
    the analytic tail bound; ``t_min``/``t_max`` the default scale range.
    ``rule`` selects the segment rule: "midpoint" (exact on step functions) or
    "gauss" (Gauss-Legendre, for smooth kernels).
    """

    points_per_cell: int = 4
    t_points_per_octave: int = 6
    truncation_eps: float = 1e-9
    t_min: float = 2.0 ** -14
    t_max: float = 2.0 ** 6
    rule: str = "midpoint"

    def __post_init__(self) -> None:
        if self.points_per_cell < 1 or self.t_points_per_octave < 1:
            raise ValueError("rule orders must be at least 1")
        if not (0 < self.truncation_eps < 1):
            raise ValueError("truncation_eps must lie in (0, 1)")
        if not (0 < self.t_min < self.t_max):
            raise ValueError("need 0 < t_min < t_max")
        if self.rule not in ("midpoint", "gauss"):
            raise ValueError(f"unknown rule {self.rule!r}")

    def refined(self, factor: int = 2) -> "QuadratureSpec":
        """The same spec with both node counts multiplied by ``factor``."""
        return QuadratureSpec(
            points_per_cell=self.points_per_cell * factor,
            t_points_per_octave=self.t_points_per_octave * factor,
            truncation_eps=self.truncation_eps,
            t_min=self.t_min,
            t_max=self.t_max,
            rule=self.rule,
        )


def truncation_radius(decay_exponent: float, scale: float, eps: float, dim: int = 1) -> float:
    """Radius R beyond which the tail of the standard-size majorant is < eps.

    The majorant is scale^a (scale + |u|)^(-d - a) with a = ``decay_exponent``
    on R^d under the sup-norm; the tail mass over {|u| > R} is bounded by

        (d 2^d / a) scale^a (scale + R)^(-a),

    obtained by integrating the sup-norm spheres (surface measure d 2^d rho^(d-1))
    and dropping rho^(d-1) against (scale+rho)^(d-1).  Solving the bound = eps
    for R gives the minimal radius up to the slack of that surface estimate,
    so the returned value is within a constant factor of optimal (tight for
    d = 1, where the bound is exact).
    """
    if decay_exponent <= 0:
        raise ValueError("decay exponent must be positive")
    if scale <= 0 or eps <= 0:
        raise ValueError("scale and eps must be positive")
    a = float(decay_exponent)
    prefactor = dim * (2.0 ** dim) / a
    radius = scale * ((prefactor / eps) ** (1.0 / a) - 1.0)
    return max(radius, scale) * (1.0 + 1e-12)


# ---------------------------------------------------------------------------
# mesh construction
# ---------------------------------------------------------------------------

_REL_FINEST = 2.0 ** -48  # finest ladder step relative to the span being graded


def graded_axis_edges(
    lo: float,
    hi: float,
    anchors: Sequence[float] = (0.0,),
    rel_finest: float = _REL_FINEST,
) -> np.ndarray:
    """Segment edges on [lo, hi], geometrically refined toward each anchor.

    Around every anchor a the candidate edges are a +- h0 2^j, so inside the
    interval consecutive edges are within a factor two of each other in their
    distance to a.  Anchors may lie outside [lo, hi]; the clipped ladder then
    starts at the gap scale automatically.  Anchors inside the interval become
    edges themselves, which is what makes integrands with jumps at the anchors
    exactly resolvable by the midpoint rule.
    """
    if not hi > lo:
        raise ValueError("empty axis interval")
    edges = {float(lo), float(hi)}
    for a in anchors:
        a = float(a)
        dmax = max(hi - a, a - lo)
        if dmax <= 0:
            continue
        h = dmax * rel_finest
        while h < 2.0 * dmax:
            for x in (a - h, a + h):
                if lo < x < hi:
                    edges.add(x)
            h *= 2.0
        if lo < a < hi:
            edges.add(a)
    return np.array(sorted(edges))


def _rule01(p: int, rule: str) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the p-point rule on (0, 1)."""
    if rule == "midpoint":
        nodes = (np.arange(p) + 0.5) / p
        weights = np.full(p, 1.0 / p)
    elif rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(p)
        nodes = 0.5 * (x + 1.0)
        weights = 0.5 * w
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return nodes, weights


def segment_nodes(
    edges: np.ndarray, p: int, rule: str = "midpoint"
) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule over the segments delimited by ``edges``: flat arrays of
    nodes and matching weights for a plain Lebesgue integral along the axis."""
    edges = np.asarray(edges, dtype=float)
    widths = np.diff(edges)
    base, bw = _rule01(p, rule)
    nodes = edges[:-1, None] + widths[:, None] * base[None, :]
    weights = widths[:, None] * bw[None, :]
    return nodes.ravel(), weights.ravel()


def octave_nodes(
    t_lo: float,
    t_hi: float,
    per_octave: int,
    rule: str = "midpoint",
    extra_edges: Sequence[float] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Log-uniform nodes and weights for a plain dt integral on [t_lo, t_hi].

    The axis is split at every power of two (plus any ``extra_edges``), each
    piece is subdivided into ``per_octave`` equal parts in log space, and the
    rule is applied in log space: with s = log t the weight carries the e^s
    Jacobian, so integrands proportional to 1/t are integrated exactly by the
    midpoint variant.  Downstream every scale measure is dt/t, which is why
    this is the default scale rule.
    """
    if not 0 < t_lo < t_hi:
        raise ValueError("need 0 < t_lo < t_hi")
    edges = {float(t_lo), float(t_hi)}
    k = math.floor(math.log2(t_lo)) + 1
    while 2.0 ** k < t_hi:
        if 2.0 ** k > t_lo:
            edges.add(2.0 ** k)
        k += 1
    for e in extra_edges:
        if t_lo < e < t_hi:
            edges.add(float(e))
    edges = np.array(sorted(edges))
    s_edges = np.log(edges)
    base, bw = _rule01(per_octave, rule)
    nodes, weights = [], []
    for s0, s1 in zip(s_edges[:-1], s_edges[1:]):
        ds = s1 - s0
        s = s0 + ds * base
        t = np.exp(s)
        nodes.append(t)
        weights.append(ds * bw * t)
    return np.concatenate(nodes), np.concatenate(weights)


def _eval_on_grid(f: Callable, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate f on the tensor grid of the given 1-d node arrays.

    Tries a broadcast call first (the numpy-friendly convention used
    throughout this package); falls back to np.vectorize for scalar-only
    callables.
    """
    grids = np.meshgrid(*axes, indexing="ij", sparse=True)
    try:
        out = np.asarray(f(*grids), dtype=float)
        out = np.broadcast_to(out, tuple(len(a) for a in axes))
    except (TypeError, ValueError):
        out = np.vectorize(f, otypes=[float])(*np.meshgrid(*axes, indexing="ij"))
    return out


def _check_finite(values: np.ndarray, axes: Sequence[np.ndarray]) -> None:
    if np.all(np.isfinite(values)):
        return
    idx = np.unravel_index(int(np.argmin(np.isfinite(values))), values.shape)
    point = tuple(float(axes[d][idx[d]]) for d in range(len(axes)))
    raise FloatingPointError(f"non-finite integrand sample at {point}")


def _contract(values: np.ndarray, weight_axes: Sequence[np.ndarray]) -> float:
    out = values
    for w in reversed(weight_axes):
        out = out @ w
    return float(out)


def integrate_box(
    f: Callable,
    box: Sequence[Sequence[float]] | Sequence[float],
    spec: QuadratureSpec,
    anchors: Sequence[Sequence[float]] | None = None,
    with_error: bool = False,
):
    """Tensor-product quadrature of f over an axis-aligned box.

    ``box`` is a sequence of (lo, hi) pairs, or a single (lo, hi) pair in one
    dimension.  Each axis gets a mesh graded geometrically toward its anchors
    (default: the origin, where the kernel and weight profiles used throughout
    this package peak) with ``spec.points_per_cell`` nodes per segment.  Pass
    per-axis ``anchors`` to add breakpoints: anchors inside the box become
    exact segment edges, so jumps located at anchors cost no accuracy.

    With ``with_error`` the return value is ``(value, estimate)`` where the
    estimate is twice the difference against a rule of half the order -- a
    plain embedded-rule error gauge, deliberately conservative.
    """
    box_arr = np.atleast_2d(np.asarray(box, dtype=float))
    dim = box_arr.shape[0]
    if anchors is None:
        anchors = [(0.0,)] * dim
    axes, weights = [], []
    for d in range(dim):
        lo, hi = box_arr[d]
        edges = graded_axis_edges(lo, hi, anchors[d])
        nd, wd = segment_nodes(edges, spec.points_per_cell, spec.rule)
        axes.append(nd)
        weights.append(wd)
    values = _eval_on_grid(f, axes)
    _check_finite(values, axes)
    result = _contract(values, weights)
    if not with_error:
        return result
    coarse = QuadratureSpec(
        points_per_cell=max(1, spec.points_per_cell // 2),
        t_points_per_octave=spec.t_points_per_octave,
        truncation_eps=spec.truncation_eps,
        t_min=spec.t_min,
        t_max=spec.t_max,
        rule=spec.rule,
    )
    reference = integrate_box(f, box, coarse, anchors=anchors)
    return result, 2.0 * abs(result - reference) + 1e-15 * abs(result)


def integrate_halfspace(
    f: Callable,
    dim: int,
    spec: QuadratureSpec,
    radius: float | None = None,
    breaks: Sequence[float] = (),
    t_breaks: Sequence[float] = (),
) -> float:
    """Quadrature of f(y, t) dy dt over R^dim x [t_min, t_max].

    The scale axis uses the per-octave log rule (aligned at powers of two, so
    integrands switching behaviour at dyadic scales are resolved exactly);
    space axes use a graded mesh on [-R, R] per axis, with R either given or
    derived from ``truncation_radius`` at the spec tolerance.  The measure is
    plain dy dt: callers fold their own 1/t powers into f.  ``breaks`` adds
    grading anchors (and exact edges) on every space axis; ``t_breaks`` adds
    scale-axis edges.  Decay sufficient for the truncation is the caller's
    contract, as is a t-range covering the integrand's scales.
    """
    if radius is None:
        radius = truncation_radius(1.0, max(1.0, spec.t_max), spec.truncation_eps, dim)
    t_nodes, t_weights = octave_nodes(
        spec.t_min, spec.t_max, spec.t_points_per_octave, spec.rule, t_breaks
    )
    anchors = (0.0, *breaks)
    edges = graded_axis_edges(-radius, radius, anchors)
    y_nodes, y_weights = segment_nodes(edges, spec.points_per_cell, spec.rule)
    axes = [y_nodes] * dim + [t_nodes]
    values = _eval_on_grid(f, axes)
    _check_finite(values, axes)
    return _contract(values, [y_weights] * dim + [t_weights])


# ---------------------------------------------------------------------------
# step functions on dyadic lattices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepFunction:
    """A step function on the dyadic lattice of side 2^-level.

    The support box starts at lattice index ``lo`` (one integer per axis) and
    spans ``values.shape`` cells; outside the box the function equals the
    constant ``tail``.  Values are stored row-major.  Ordinary functions have
    tail 0; the modified ancestor patterns of the nested-case analysis carry
    their off-box constant in ``tail``, which is why it exists.

    Instances are immutable; arithmetic aligns operands to a common lattice
    (the finer level, the union box) exactly -- cells only ever get split,
    never merged, so alignment is value-preserving.
    """

    level: int
    lo: tuple[int, ...]
    values: np.ndarray
    tail: float = 0.0

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != len(self.lo):
            raise ValueError("values rank must match the corner index")
        if vals.size == 0 or any(s <= 0 for s in vals.shape):
            raise ValueError("empty support")
        if not np.all(np.isfinite(vals)) or not math.isfinite(self.tail):
            raise ValueError("step function values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lo", tuple(int(k) for k in self.lo))

    # -- geometry ----------------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def cell_side(self) -> float:
        return 2.0 ** -self.level

    @property
    def box(self) -> tuple[tuple[float, float], ...]:
        h = self.cell_side
        return tuple(
            (k * h, (k + s) * h) for k, s in zip(self.lo, self.shape)
        )

    def box_fractions(self) -> tuple[tuple[Fraction, Fraction], ...]:
        h = Fraction(1, 2 ** self.level) if self.level >= 0 else Fraction(2 ** -self.level)
        return tuple((k * h, (k + s) * h) for k, s in zip(self.lo, self.shape))

    # -- construction helpers ----------------------------------------------

    @classmethod
    def constant(cls, dim: int, value: float = 1.0) -> "StepFunction":
        """The constant function: a one-cell box plus an equal tail."""
        return cls(level=0, lo=(0,) * dim, values=np.full((1,) * dim, float(value)),
                   tail=float(value))

    @classmethod
    def indicator(cls, level: int, lo: Sequence[int], shape: Sequence[int]) -> "StepFunction":
        return cls(level=level, lo=tuple(lo), values=np.ones(tuple(shape)))

    # -- evaluation ---------------------------------------------------------

    def __call__(self, *coords):
        """Evaluate at points; broadcasts over array inputs."""
        coords = [np.asarray(c, dtype=float) for c in coords]
        if len(coords) != self.dim:
            raise ValueError("coordinate count must match dimension")
        scale = 2.0 ** self.level
        # clip before the integer cast: coordinates far past the box (huge
        # tail-window meshes) must read as outside, not overflow int64
        idx = [np.floor(np.clip(c * scale, -2.0 ** 62, 2.0 ** 62)).astype(np.int64) - k
               for c, k in zip(coords, self.lo)]
        inside = np.ones(np.broadcast_shapes(*(i.shape for i in idx)), dtype=bool)
        for i, s in zip(idx, self.shape):
            inside = inside & (i >= 0) & (i < s)
        clipped = tuple(np.clip(i, 0, s - 1) for i, s in zip(idx, self.shape))
        picked = self.values[clipped]
        out = np.where(inside, picked, self.tail)
        return float(out) if out.ndim == 0 else out

    # -- integrals ----------------------------------------------------------

    def integral(self) -> float:
        if self.tail != 0.0:
            raise ValueError("integral undefined for nonzero tail")
        # fsum + power-of-two cell measure makes this exactly refinement-invariant
        return math.fsum(self.values.ravel().tolist()) * self.cell_side ** self.dim

    def exact_integral(self) -> Fraction:
        if self.tail != 0.0:
            raise ValueError("integral undefined for nonzero tail")
        cell = Fraction(1, 2 ** (self.level * self.dim)) if self.level >= 0 else \
            Fraction(2 ** (-self.level * self.dim))
        return sum((Fraction(float(v)) for v in self.values.ravel()), Fraction(0)) * cell

    def inner(self, other: "StepFunction") -> float:
        """L2 pairing; defined whenever at least one tail vanishes."""
        if self.tail != 0.0 and other.tail != 0.0:
            raise ValueError("inner product undefined when both tails are nonzero")
        a, b, level, _ = _align(self, other)
        dim = self.dim
        return float((a * b).sum()) * (2.0 ** -level) ** dim

    def l2_norm_sq(self) -> float:
        return self.inner(self)

    # -- lattice arithmetic ---------------------------------------------------

    def refined(self, level: int) -> "StepFunction":
        """The same function represented on a finer lattice."""
        if level < self.level:
            raise ValueError("refinement only goes to finer levels")
        f = 2 ** (level - self.level)
        vals = self.values
        for ax in range(self.dim):
            vals = np.repeat(vals, f, axis=ax)
        return StepFunction(level=level, lo=tuple(k * f for k in self.lo),
                            values=vals, tail=self.tail)

    def padded(self, lo: Sequence[int], shape: Sequence[int]) -> "StepFunction":
        """The same function on an enlarged box (new cells filled with the tail)."""
        lo = tuple(int(k) for k in lo)
        shape = tuple(int(s) for s in shape)
        if any(nl > ol or nl + ns < ol + os
               for nl, ns, ol, os in zip(lo, shape, self.lo, self.shape)):
            raise ValueError("padded box must contain the current box")
        out = np.full(shape, self.tail)
        sl = tuple(slice(ol - nl, ol - nl + os)
                   for nl, ol, os in zip(lo, self.lo, self.shape))
        out[sl] = self.values
        return StepFunction(level=self.level, lo=lo, values=out, tail=self.tail)

    def __add__(self, other):
        if isinstance(other, StepFunction):
            a, b, level, lo = _align(self, other)
            return StepFunction(level=level, lo=lo, values=a + b,
                                tail=self.tail + other.tail)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, StepFunction):
            return self + (other * -1.0)
        return NotImplemented

    def __mul__(self, c):
        if isinstance(c, (int, float)):
            return StepFunction(level=self.level, lo=self.lo,
                                values=self.values * float(c), tail=self.tail * float(c))
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def allclose(self, other: "StepFunction", tol: float = 0.0) -> bool:
        a, b, _, _ = _align(self, other)
        return (abs(self.tail - other.tail) <= tol
                and bool(np.all(np.abs(a - b) <= tol)))


def _align(f: StepFunction, g: StepFunction) -> tuple[np.ndarray, np.ndarray, int, tuple]:
    """Represent two step functions on a common lattice and box."""
    if f.dim != g.dim:
        raise ValueError("dimension mismatch")
    level = max(f.level, g.level)
    f2, g2 = f.refined(level), g.refined(level)
    lo = tuple(min(a, b) for a, b in zip(f2.lo, g2.lo))
    hi = tuple(max(a + s, b + t)
               for a, s, b, t in zip(f2.lo, f2.shape, g2.lo, g2.shape))
    shape = tuple(h - l for l, h in zip(lo, hi))
    return f2.padded(lo, shape).values, g2.padded(lo, shape).values, level, lo


# ---------------------------------------------------------------------------
# step-function file format
# ---------------------------------------------------------------------------

_MAGIC = b"GLSF1\n"


def write_step(f: StepFunction, path) -> None:
    """Serialize: magic "GLSF1", one ASCII header line
    "dim level box_lo... box_hi... tail", then binary64 little-endian values
    row-major.  Box corners are written with repr, which round-trips floats
    exactly; the round trip is bit-exact."""
    box = f.box
    fields = [str(f.dim), str(f.level)]
    fields += [repr(lo) for lo, _ in box]
    fields += [repr(hi) for _, hi in box]
    fields.append(repr(f.tail))
    header = (" ".join(fields) + "\n").encode("ascii")
    data = f.values.astype("<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header)
        fh.write(data)


def read_step(path) -> StepFunction:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}: not a step-function file")
        header = b""
        while not header.endswith(b"\n"):
            c = fh.read(1)
            if not c:
                raise ValueError("truncated header")
            header += c
        parts = header.decode("ascii").split()
        dim = int(parts[0])
        level = int(parts[1])
        if len(parts) != 2 + 2 * dim + 1:
            raise ValueError("malformed header")
        los = [float(p) for p in parts[2:2 + dim]]
        his = [float(p) for p in parts[2 + dim:2 + 2 * dim]]
        tail = float(parts[2 + 2 * dim])
        scale = 2.0 ** level
        lo_idx, shape = [], []
        for lo, hi in zip(los, his):
            kl, kh = lo * scale, hi * scale
            if kl != round(kl) or kh != round(kh):
                raise ValueError("box corners are not lattice points at the stated level")
            lo_idx.append(int(round(kl)))
            shape.append(int(round(kh)) - int(round(kl)))
        count = int(np.prod(shape))
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise ValueError("value block length mismatch")
        if fh.read(1):
            raise ValueError("trailing bytes after value block")
        values = np.frombuffer(raw, dtype="<f8").reshape(shape)
    return StepFunction(level=level, lo=tuple(lo_idx), values=values, tail=tail)
