"""Haar systems, tensor-product expansions, partial pairings, modified ancestors.

The expansion machinery runs in exact rational arithmetic.  The trick making
that possible: the unnormalized Haar functions take values in {-1, 0, +1}, and
wherever a normalization |I|^(-1/2) (irrational for odd levels) would appear,
it does so squared -- reconstruction weights coefficients by 1/|I|, Parseval
squares them.  Every quantity in the round trip is therefore a dyadic
rational, and reconstruct(expand(f)) returns f bit for bit.

Signatures eta in {0,1}^n label the tensor pattern per axis: eta_i = 1 puts
the +/- split on axis i, eta_i = 0 leaves it flat.  The all-zero signature is
the scaling member, admitted only for the top cube of a finite system, which
is what closes the basis on a bounded domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from .core import StepFunction
from .dyadic import DyadicCube

__all__ = [
    "HaarExpansion",
    "HaarIndex",
    "expand",
    "haar_function",
    "partial_pair",
    "reconstruct",
    "s_function",
]


@dataclass(frozen=True)
class HaarIndex:
    """A Haar system member: carrier cube plus per-axis signature."""

    cube: DyadicCube
    eta: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.eta) != self.cube.dim:
            raise ValueError("signature length must match the cube dimension")
        if any(e not in (0, 1) for e in self.eta):
            raise ValueError("signature entries must be 0 or 1")
        object.__setattr__(self, "eta", tuple(int(e) for e in self.eta))

    @property
    def cancellative(self) -> bool:
        return any(self.eta)


def _lattice_index(corner: float, level: int) -> int:
    k = corner * 2.0 ** level
    r = round(k)
    if k != r:
        raise ValueError("cube corner is not a lattice point at the working level")
    return int(r)


def haar_function(idx: HaarIndex) -> StepFunction:
    """The L2-normalized member as a step function: tensor of per-axis
    half-splits (+1/-1) or flats, scaled by |I|^(-1/2).

    Cubes of shifted grids sit off the standard lattice at their own level;
    the representation level is refined until the corners are lattice points
    (shifts are dyadic, so a finite level always suffices)."""
    cube = idx.cube
    level = cube.level + 1 if idx.cancellative else cube.level
    for c in cube.corner_fractions():
        level = max(level, c.denominator.bit_length() - 1)
    reps = 2 ** (level - cube.level - 1) if idx.cancellative else \
        2 ** (level - cube.level)
    per_axis = []
    for e in idx.eta:
        if idx.cancellative:
            base = np.array([1.0, -1.0]) if e else np.array([1.0, 1.0])
        else:
            base = np.array([1.0])
        per_axis.append(np.repeat(base, reps))
    pattern = per_axis[0]
    for ax in per_axis[1:]:
        pattern = np.multiply.outer(pattern, ax)
    norm = cube.measure() ** -0.5
    corners = [c for c, _ in cube.box()]
    lo = tuple(_lattice_index(c, level) for c in corners)
    return StepFunction(level=level, lo=lo, values=pattern * norm)


# ---------------------------------------------------------------------------
# packed exact Haar transform (per axis)
# ---------------------------------------------------------------------------
#
# Layout of a fully transformed axis of length 2^d over a top cube at level q:
# position 0 holds the scaling integral; position p >= 1 holds the coefficient
# of the cube at level q + floor(log2 p), offset p - 2^(level - q).  The
# coefficient convention is the pairing with the UNNORMALIZED pattern, i.e.
# c = integral over left half - integral over right half.


def _fwt_axis(arr: list, cell: Fraction) -> list:
    """In-place-style exact transform of one axis of cell integrals."""
    vals = [v * cell for v in arr]
    n = len(vals)
    out = [Fraction(0)] * n
    while n > 1:
        half = n // 2
        sums = [vals[2 * i] + vals[2 * i + 1] for i in range(half)]
        diffs = [vals[2 * i] - vals[2 * i + 1] for i in range(half)]
        out[half:n] = diffs
        vals = sums
        n = half
    out[0] = vals[0]
    return out


def _ifwt_axis(coeffs: list, cell: Fraction) -> list:
    """Exact inverse of `_fwt_axis`."""
    n = len(coeffs)
    vals = [coeffs[0]]
    size = 1
    while size < n:
        nxt = []
        for i in range(size):
            s, d = vals[i], coeffs[size + i]
            nxt.append((s + d) / 2)
            nxt.append((s - d) / 2)
        vals = nxt
        size *= 2
    return [v / cell for v in vals]


def _position_of(level: int, offset: int, top_level: int) -> int:
    # packed slot of a cancellative member; slot 0 is reserved for scaling
    return (1 << (level - top_level)) + offset


def _level_offset(position: int, top_level: int) -> tuple[int, int]:
    if position == 0:
        return top_level, 0
    d = position.bit_length() - 1
    return top_level + d, position - (1 << d)


@dataclass(frozen=True, eq=False)
class HaarExpansion:
    """Exact tensor-product Haar coefficients of a step function on Q1 x Q2.

    ``table[p1, p2]`` holds the pairing of f with the unnormalized pattern of
    the member at packed position p1 along the first factor and p2 along the
    second (position 0 being the top scaling member).  Normalized coefficients
    and exact norms are derived views.
    """

    domain: tuple[DyadicCube, DyadicCube]
    level: int
    table: np.ndarray  # dtype=object, Fractions

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape

    def _index_of(self, idx: HaarIndex, factor: int) -> int:
        top = self.domain[factor]
        cube = idx.cube
        if idx.cancellative:
            if not (top.level <= cube.level < self.level):
                raise KeyError("cube level outside the expansion range")
        elif cube != top:
            raise KeyError("scaling member exists only for the top cube")
        top_corner = top.box()[0][0]
        corner = cube.box()[0][0]
        offset = _lattice_index(corner - top_corner, cube.level)
        return _position_of(cube.level, offset, top.level) if idx.cancellative \
            else 0

    def raw_coefficient(self, idx1: HaarIndex, idx2: HaarIndex) -> Fraction:
        """Pairing with the unnormalized +/-1 tensor pattern, exact."""
        return self.table[self._index_of(idx1, 0), self._index_of(idx2, 1)]

    def coefficient(self, idx1: HaarIndex, idx2: HaarIndex) -> float:
        """The L2-normalized coefficient <f, h_I x h_J>."""
        raw = self.raw_coefficient(idx1, idx2)
        scale = (idx1.cube.measure() * idx2.cube.measure()) ** -0.5
        return float(raw) * scale

    def indices(self) -> Iterator[tuple[HaarIndex, HaarIndex]]:
        for p1 in range(self.shape[0]):
            i1 = self._member(p1, 0)
            for p2 in range(self.shape[1]):
                yield i1, self._member(p2, 1)

    def _member(self, position: int, factor: int) -> HaarIndex:
        top = self.domain[factor]
        level, offset = _level_offset(position, top.level)
        top_corner = top.box()[0][0]
        base = _lattice_index(top_corner, level)
        cube = top.grid.cube(level, (base + offset,)) if position else top
        eta = (1,) * top.dim if position else (0,) * top.dim
        return HaarIndex(cube=cube, eta=eta)

    def norm_sq_fraction(self) -> Fraction:
        """Parseval sum, exact: each raw coefficient squared over |I| |J|."""
        total = Fraction(0)
        n1, n2 = self.shape
        top1, top2 = self.domain
        for p1 in range(n1):
            l1, _ = _level_offset(p1, top1.level)
            m1 = Fraction(1, 2 ** l1) if l1 >= 0 else Fraction(2 ** -l1)
            for p2 in range(n2):
                l2, _ = _level_offset(p2, top2.level)
                m2 = Fraction(1, 2 ** l2) if l2 >= 0 else Fraction(2 ** -l2)
                c = self.table[p1, p2]
                if c:
                    total += c * c / (m1 * m2)
        return total


def _check_domain_cube(cube: DyadicCube) -> None:
    if cube.dim != 1:
        raise NotImplementedError("expansions are implemented for 1+1 factors")


def expand(f: StepFunction, domain: tuple[DyadicCube, DyadicCube], level: int) -> HaarExpansion:
    """Exact Haar coefficients of a level-<=``level`` step function on Q1 x Q2.

    The error "support leakage outside domain" fires when f is nonzero off the
    domain box -- the finite system cannot represent that part.
    """
    q1, q2 = domain
    _check_domain_cube(q1), _check_domain_cube(q2)
    if f.dim != 2:
        raise ValueError("expected a function on the two-factor product space")
    if f.tail != 0.0:
        raise ValueError("support leakage outside domain: nonzero tail")
    if f.level > level:
        raise ValueError("function is finer than the expansion level")
    fr = f.refined(level)
    (a1, b1), = q1.box_fractions()
    (a2, b2), = q2.box_fractions()
    lo1 = _lattice_index(float(a1), level)
    lo2 = _lattice_index(float(a2), level)
    n1 = int((b1 - a1) * 2 ** level)
    n2 = int((b2 - a2) * 2 ** level)
    inside = (lo1 <= fr.lo[0] and fr.lo[0] + fr.shape[0] <= lo1 + n1
              and lo2 <= fr.lo[1] and fr.lo[1] + fr.shape[1] <= lo2 + n2)
    if not inside:
        raise ValueError("support leakage outside domain")
    if n1 & (n1 - 1) or n2 & (n2 - 1):
        raise ValueError("domain cubes must be coarser powers of two of the level")
    padded = fr.padded((lo1, lo2), (n1, n2))
    cell = Fraction(1, 2 ** level) if level >= 0 else Fraction(2 ** -level)
    rows = [_fwt_axis([Fraction(v) for v in row], cell) for row in padded.values]
    cols = np.array(rows, dtype=object).T
    table = np.array([_fwt_axis(list(col), cell) for col in cols], dtype=object).T
    return HaarExpansion(domain=domain, level=level, table=table)


def reconstruct(e: HaarExpansion) -> StepFunction:
    """Inverse of `expand`, exact: returns the step function bit for bit."""
    cell = Fraction(1, 2 ** e.level) if e.level >= 0 else Fraction(2 ** -e.level)
    cols = [_ifwt_axis(list(col), cell) for col in e.table.T]
    rows = np.array(cols, dtype=object).T
    values = np.array([[float(v) for v in _ifwt_axis(list(row), cell)]
                       for row in rows])
    q1, q2 = e.domain
    lo1 = _lattice_index(q1.box()[0][0], e.level)
    lo2 = _lattice_index(q2.box()[0][0], e.level)
    return StepFunction(level=e.level, lo=(lo1, lo2), values=values)


def partial_pair(f: StepFunction, j1: HaarIndex) -> StepFunction:
    """Pair out the second factor: f_J(y1) = integral of f(y1, y2) h_J(y2) dy2,
    computed cell by cell on the common lattice (no quadrature error beyond
    float rounding)."""
    if f.dim != 2 or j1.cube.dim != 1:
        raise ValueError("expected f on the product space and a 1D member")
    if f.tail != 0.0:
        raise ValueError("tail must vanish")
    h = haar_function(j1)
    level = max(f.level, h.level)
    fr, hr = f.refined(level), h.refined(level)
    cell = 2.0 ** -level
    # overlap of f's second axis with h's support
    lo = max(fr.lo[1], hr.lo[0])
    hi = min(fr.lo[1] + fr.shape[1], hr.lo[0] + hr.shape[0])
    if lo >= hi:
        return StepFunction(level=level, lo=(fr.lo[0],),
                            values=np.zeros(fr.shape[0]))
    fslab = fr.values[:, lo - fr.lo[1]:hi - fr.lo[1]]
    hslab = hr.values[lo - hr.lo[0]:hi - hr.lo[0]]
    values = fslab @ hslab * cell
    return StepFunction(level=level, lo=(fr.lo[0],), values=values)


def s_function(i: DyadicCube, k: int, eta: tuple[int, ...] | None = None) -> StepFunction:
    """The modified k-th ancestor pattern attached to I.

    With P = the k-generations ancestor and A = the (k-1)-generations one,

        s = 0 on A,
            h_P - <h_P>_A on the other children of P,
            -<h_P>_A outside P (the constant tail).

    Then h_P = s + <h_P>_A holds pointwise everywhere: on A both sides equal
    the constant <h_P>_A; on the sibling children the subtraction cancels; off
    P the Haar function vanishes against tail plus average.  The sup bound
    |s| <= 2 |P|^(-1/2) is immediate from |h_P| = |P|^(-1/2).
    """
    if k < 1:
        raise ValueError("need k >= 1")
    grid = i.grid
    if i.level - k < grid.j_min:
        raise ValueError("insufficient scale range: ancestor exceeds the truncation")
    parent = grid.ancestor(i, k)      # P = I^(k)
    keep = grid.ancestor(i, k - 1)    # A = I^(k-1)
    if eta is None:
        eta = (1,) * i.dim
    h = haar_function(HaarIndex(cube=parent, eta=eta))
    # value of h on A (constant there, A being inside one child of P)
    h_on_keep = h(*keep.center())
    out = h - StepFunction(level=h.level, lo=h.lo,
                           values=np.full(h.shape, h_on_keep), tail=h_on_keep)
    # zero out A itself
    level = out.level
    scale = 2.0 ** level
    keep_lo = tuple(_lattice_index(c, level) for c, _ in keep.box())
    keep_shape = tuple(int(round((b - a) * scale)) for a, b in keep.box())
    sl = tuple(slice(kl - ol, kl - ol + ks)
               for kl, ol, ks in zip(keep_lo, out.lo, keep_shape))
    vals = out.values.copy()
    vals[sl] = 0.0
    return StepFunction(level=level, lo=out.lo, values=vals, tail=out.tail)
