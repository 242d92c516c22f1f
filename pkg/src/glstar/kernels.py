"""Two-scale product kernels and samplers for their decay conditions.

The built-in families are tensor products of one-dimensional convolution
factors with power-law decay.  Everything a factor needs downstream (pointwise
values, total mass, cell integrals) has a closed form, so the heavy machinery
elsewhere never quadratures the kernel itself unless it has to.

The ``check_*`` functions are samplers, not provers: they estimate the implied
constant of a condition as a supremum of |LHS|/RHS over a deterministic grid
concentrated near the singular region (small scales, small separations) plus
random draws, each from its own counter-keyed stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import Params, QuadratureSpec, graded_axis_edges, octave_nodes, segment_nodes
from .dyadic import DyadicCube, trial_stream

__all__ = [
    "AssumptionReport",
    "ConvolutionFactor",
    "Kernel",
    "check_carleson_combo",
    "check_holder",
    "check_mixed",
    "check_size",
    "make_broken",
    "make_cancellative",
    "make_size_only",
    "rescale",
]


# ---------------------------------------------------------------------------
# one-parameter factors


@dataclass(frozen=True)
class ConvolutionFactor:
    """One-parameter convolution factor ``u -> profile(t, |u|_inf)``.

    flavor "size" is the positive family  t^a / (t + s)^(dim + a);  flavor
    "cancellative" is t d/dt of it, which integrates to zero at every scale.
    Antiderivatives (dim 1) are closed form, so cell integrals are exact.
    ``scale`` multiplies the whole profile (amplitude homogeneity tests).
    """

    dim: int
    exponent: float
    flavor: str = "size"
    label: str = ""
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("factor dimension must be >= 1")
        if not self.exponent > 0:
            raise ValueError("decay exponent must be positive")
        if self.flavor not in ("size", "cancellative"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if not self.scale > 0:
            raise ValueError("amplitude must be positive")
        if not self.label:
            amp = "" if self.scale == 1.0 else f", x{self.scale:g}"
            object.__setattr__(
                self,
                "label",
                f"{self.flavor}(dim={self.dim}, a={self.exponent:g}{amp})",
            )

    def profile(self, t, s):
        """Radial profile at scale t and distance s >= 0 (arrays broadcast)."""
        a, d = self.exponent, self.dim
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        if self.flavor == "size":
            return self.scale * t**a * (t + s) ** (-(d + a))
        return self.scale * (
            a * t**a * (t + s) ** (-(d + a))
            - (d + a) * t ** (1 + a) * (t + s) ** (-(d + a + 1))
        )

    def value(self, t, x, y):
        """Kernel value at points x, y with shape (..., dim); sup-norm metric."""
        u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        if self.dim == 1 and u.ndim == 0:
            s = np.abs(u)
        else:
            s = np.max(np.abs(u), axis=-1)
        return self.profile(t, s)

    def mass(self, t) -> float:
        """Integral over the whole space; scale independent in both flavors."""
        if self.flavor == "cancellative":
            return 0.0
        a, d = self.exponent, self.dim
        return (
            self.scale * d * 2.0**d * math.gamma(d) * math.gamma(a) / math.gamma(d + a)
        )

    def antiderivative(self, t, s):
        """A(s) = integral of the profile over [0, s]; dim 1 only."""
        if self.dim != 1:
            raise NotImplementedError("closed-form antiderivative is 1d only")
        a = self.exponent
        t = np.asarray(t, dtype=float)
        q = t / (t + np.asarray(s, dtype=float))
        if self.flavor == "size":
            return self.scale * (1.0 - q**a) / a
        return self.scale * (q ** (1.0 + a) - q**a)

    def segment_integral(self, t, lo, hi):
        """Exact integral of profile(|u|) over u in [lo, hi] (any signs)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(lo > hi):
            raise ValueError("segment endpoints out of order")

        def odd(s):
            return np.sign(s) * self.antiderivative(t, np.abs(s))

        return odd(hi) - odd(lo)

    def cell_integral(self, t, x, lo, hi):
        """Exact integral of profile(|x - z|) over the cell z in [lo, hi]."""
        x = np.asarray(x, dtype=float)
        return self.segment_integral(t, x - hi, x - lo)


# ---------------------------------------------------------------------------
# bi-parameter kernels


@dataclass(frozen=True)
class Kernel:
    """A two-scale kernel (t1, t2, x, y) -> K with declared decay exponents.

    ``evaluate`` takes points x, y of shape (..., n + m) and should broadcast
    over leading axes; the checkers fall back to a scalar loop if it does not.
    When ``tensor_parts`` is present, ``evaluate`` must equal the product of
    the two factors, each acting on its own block of coordinates.
    """

    evaluate: Callable
    alpha: float
    beta: float
    n: int = 1
    m: int = 1
    tensor_parts: Optional[tuple] = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError("kernel dimensions must be >= 1")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("declared exponents must be positive")
        if self.tensor_parts is not None and len(self.tensor_parts) != 2:
            raise ValueError("tensor_parts must hold exactly two factors")


def _tensor_evaluate(f1: ConvolutionFactor, f2: ConvolutionFactor, n: int):
    def evaluate(t1, t2, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return f1.value(t1, x[..., :n], y[..., :n]) * f2.value(
            t2, x[..., n:], y[..., n:]
        )

    return evaluate


def make_size_only(n: int, m: int, alpha: float, beta: float) -> Kernel:
    """Positive tensor kernel that saturates the size condition exactly."""
    f1 = ConvolutionFactor(n, alpha, "size")
    f2 = ConvolutionFactor(m, beta, "size")
    return Kernel(
        _tensor_evaluate(f1, f2, n),
        alpha,
        beta,
        n,
        m,
        (f1, f2),
        label=f"size_only(n={n},m={m},a={alpha:g},b={beta:g})",
    )


def make_cancellative(n: int, m: int, alpha: float, beta: float) -> Kernel:
    """Tensor kernel whose factors each integrate to zero at every scale.

    Applied to the constant function it gives identically zero, so all the
    box-packing quantities vanish and the family is an easy positive control.
    """
    f1 = ConvolutionFactor(n, alpha, "cancellative")
    f2 = ConvolutionFactor(m, beta, "cancellative")
    return Kernel(
        _tensor_evaluate(f1, f2, n),
        alpha,
        beta,
        n,
        m,
        (f1, f2),
        label=f"cancellative(n={n},m={m},a={alpha:g},b={beta:g})",
    )


def rescale(kernel: Kernel, c: float) -> Kernel:
    """The kernel multiplied by the constant c > 0.

    Tensor structure is preserved by folding the amplitude into the first
    factor, so every closed-form path sees the scaling exactly.
    """
    if not c > 0:
        raise ValueError("scaling constant must be positive")
    if c == 1.0:
        return kernel
    label = f"{kernel.label}*{c:g}" if kernel.label else f"x{c:g}"
    if kernel.tensor_parts is not None:
        f1, f2 = kernel.tensor_parts
        f1 = replace(f1, scale=c * f1.scale, label="")
        return Kernel(
            _tensor_evaluate(f1, f2, kernel.n),
            kernel.alpha,
            kernel.beta,
            kernel.n,
            kernel.m,
            (f1, f2),
            label=label,
        )
    base_eval = kernel.evaluate

    def evaluate(t1, t2, x, y):
        return c * base_eval(t1, t2, x, y)

    return replace(kernel, evaluate=evaluate, label=label)


def make_broken(base: Kernel, defect: Union[str, Sequence[str]]) -> Kernel:
    """Negative controls: kernels deliberately violating a named condition.

    "wrong_alpha" bumps the declared first-axis exponent above the actual
    decay, so the size ratio diverges at large separations.  "holder_break"
    multiplies by a bounded jump in the first y2-coordinate, which leaves the
    size condition intact but destroys the smoothness conditions.
    An empty defect sequence returns ``base`` unchanged.
    """
    defects = (defect,) if isinstance(defect, str) else tuple(defect)
    kernel = base
    for d in defects:
        if d == "wrong_alpha":
            kernel = replace(
                kernel,
                alpha=kernel.alpha + 0.25,
                label=kernel.label + "+wrong_alpha",
            )
        elif d == "holder_break":
            kernel = Kernel(
                _jump_wrap(kernel.evaluate, kernel.n),
                kernel.alpha,
                kernel.beta,
                kernel.n,
                kernel.m,
                None,
                kernel.label + "+holder_break",
            )
        else:
            raise ValueError(f"unknown defect {d!r}")
    return kernel


def _jump_wrap(evaluate: Callable, n: int):
    def jumped(t1, t2, x, y):
        y = np.asarray(y, dtype=float)
        return evaluate(t1, t2, x, y) * (1.0 + 0.5 * (y[..., n] >= 0.0))

    return jumped


# ---------------------------------------------------------------------------
# condition reports


@dataclass(frozen=True)
class AssumptionReport:
    """Sampled estimate of the implied constant of one decay condition."""

    condition: str
    estimate: float
    samples: int
    worst: dict
    cap: float
    passed: bool
    notes: str = ""

    def __post_init__(self) -> None:
        if not (self.estimate >= 0.0 or math.isnan(self.estimate)):
            raise ValueError("estimate must be nonnegative")
        if self.samples < 1:
            raise ValueError("report needs at least one sample")
        ok = math.isfinite(self.estimate) and self.estimate <= self.cap
        if self.passed != ok:
            raise ValueError("pass flag inconsistent with estimate and cap")

    def summary(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"{self.condition}: sup|LHS|/RHS = {self.estimate:.4g} "
            f"over {self.samples} samples (cap {self.cap:g}) -> {verdict}"
        )


def _mk_report(condition, ratios, worst, cap, notes="") -> AssumptionReport:
    est = float(np.max(ratios))
    return AssumptionReport(
        condition=condition,
        estimate=est,
        samples=int(np.size(ratios)),
        worst=worst,
        cap=float(cap),
        passed=bool(math.isfinite(est) and est <= cap),
        notes=notes,
    )


# ---------------------------------------------------------------------------
# sample evaluation helpers


def _eval_kernel(kernel: Kernel, t1, t2, x, y) -> np.ndarray:
    """Evaluate on flat sample arrays, tolerating non-broadcasting kernels."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    count = t1.shape[0]
    try:
        values = np.asarray(kernel.evaluate(t1, t2, x, y), dtype=float)
        if values.shape != (count,):
            raise ValueError
    except Exception:
        values = np.array(
            [
                float(kernel.evaluate(t1[i], t2[i], x[i], y[i]))
                for i in range(count)
            ]
        )
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise FloatingPointError(
            f"non-finite kernel value at t1={t1[i]:g}, t2={t2[i]:g}, "
            f"x={tuple(x[i])}, y={tuple(y[i])}"
        )
    return values


def _linf_blocks(kernel: Kernel, x, y):
    n = kernel.n
    u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return (
        np.max(np.abs(u[..., :n]), axis=-1),
        np.max(np.abs(u[..., n:]), axis=-1),
    )


def _size_majorant(kernel: Kernel, t1, t2, s1, s2):
    a, b, n, m = kernel.alpha, kernel.beta, kernel.n, kernel.m
    return t1**a / (t1 + s1) ** (n + a) * t2**b / (t2 + s2) ** (m + b)


def _unit_linf(rng, dim: int) -> np.ndarray:
    d = rng.uniform(-1.0, 1.0, dim)
    peak = np.max(np.abs(d))
    if peak == 0.0:
        d = np.zeros(dim)
        d[0] = 1.0
        return d
    return d / peak


def _worst_at(i, t1, t2, x, y, ratios, extra=None) -> dict:
    out = {
        "t1": float(t1[i]),
        "t2": float(t2[i]),
        "x": tuple(np.asarray(x)[i]),
        "y": tuple(np.asarray(y)[i]),
        "ratio": float(ratios[i]),
    }
    if extra:
        out.update(extra)
    return out


# ---------------------------------------------------------------------------
# pointwise condition checkers


def check_size(
    kernel: Kernel,
    params: Params,
    samples: int = 2000,
    seed: int = 1,
    *,
    cap: float = 8.0,
    max_radius: float = 256.0,
) -> AssumptionReport:
    """Sampled constant of the pointwise decay bound |K| <= majorant.

    Deterministic strata sweep scale pairs and separations out to
    ``max_radius`` (so a kernel whose declared exponent overstates its decay is
    caught at the far end), and ``samples`` random draws fill the gaps.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 random samples")
    n, m = kernel.n, kernel.m
    dim = n + m

    scales = 2.0 ** np.arange(-10.0, 5.0, 2.0)
    factors = np.array([0.0, 0.25, 1.0, 4.0, 32.0, np.inf])
    t1g, t2g, r1g, r2g, dg = np.meshgrid(
        scales, scales, factors, factors, np.arange(2.0), indexing="ij"
    )
    t1 = t1g.ravel()
    t2 = t2g.ravel()
    s1 = np.minimum(r1g.ravel() * t1, max_radius)
    s2 = np.minimum(r2g.ravel() * t2, max_radius)
    diag = dg.ravel() > 0.5
    count = t1.size
    u = np.zeros((count, dim))
    u[:, 0] = s1
    u[:, n] = s2
    if n > 1:
        u[diag, 1:n] = s1[diag, None]
    if m > 1:
        u[diag, n + 1 :] = s2[diag, None]
    x = np.zeros((count, dim))
    y = x - u

    rt1, rt2, rx, ry = [], [], [], []
    for i in range(samples):
        rng = trial_stream(seed, i)
        ta = 2.0 ** rng.uniform(-12.0, 4.0)
        tb = 2.0 ** rng.uniform(-12.0, 4.0)
        center = rng.uniform(-4.0, 4.0, dim)
        sa = 2.0 ** rng.uniform(math.log2(ta) - 8.0, math.log2(max_radius))
        sb = 2.0 ** rng.uniform(math.log2(tb) - 8.0, math.log2(max_radius))
        disp = np.concatenate([sa * _unit_linf(rng, n), sb * _unit_linf(rng, m)])
        rt1.append(ta)
        rt2.append(tb)
        rx.append(center)
        ry.append(center - disp)
    t1 = np.concatenate([t1, rt1])
    t2 = np.concatenate([t2, rt2])
    x = np.vstack([x, rx])
    y = np.vstack([y, ry])

    values = _eval_kernel(kernel, t1, t2, x, y)
    s1, s2 = _linf_blocks(kernel, x, y)
    ratios = np.abs(values) / _size_majorant(kernel, t1, t2, s1, s2)
    i = int(np.argmax(ratios))
    return _mk_report("size", ratios, _worst_at(i, t1, t2, x, y, ratios), cap)


def _pair_samples(n: int, m: int, samples: int, seed: int):
    """Sample tuples (t1, t2, x, y, y') with per-axis gaps below t_i / 2.

    The deterministic block places the pair near the scale-t peak of the
    profile (including gaps just under the t/2 ceiling, pairs straddling the
    origin, and the near-extremal layout y = x + g, y' = x) because that is
    where smoothness ratios peak and where jump defects hide.
    """
    dim = n + m
    scales = 2.0 ** np.array([-8.0, -4.0, -1.0, 2.0])
    places = np.array([0.0, 1.0, 32.0])
    gapf = np.array([0.999, 0.25, 2.0**-6, 2.0**-14])

    t1l, t2l, p1l, p2l, g1l, g2l, vl = (
        a.ravel()
        for a in np.meshgrid(
            scales, scales, places, places, gapf, gapf, np.arange(3.0), indexing="ij"
        )
    )
    keep = (vl < 0.5) | ((p1l == 0.0) & (p2l == 0.0))
    t1l, t2l, p1l, p2l, g1l, g2l, vl = (
        a[keep] for a in (t1l, t2l, p1l, p2l, g1l, g2l, vl)
    )
    count = t1l.size
    gap1 = g1l * t1l / 2.0
    gap2 = g2l * t2l / 2.0
    x = np.zeros((count, dim))
    y = np.zeros((count, dim))
    y[:, 0] = -p1l * t1l
    y[:, n] = -p2l * t2l
    straddle = vl == 1.0
    y[straddle, 0] = gap1[straddle] / 2.0
    y[straddle, n] = gap2[straddle] / 2.0
    peak = vl == 2.0
    y[peak, 0] = gap1[peak]
    y[peak, n] = gap2[peak]
    yp = y.copy()
    yp[:, 0] -= gap1
    yp[:, n] -= gap2

    t1 = [t1l]
    t2 = [t2l]
    xs = [x]
    ys = [y]
    yps = [yp]
    for i in range(samples):
        rng = trial_stream(seed, i)
        ta = 2.0 ** rng.uniform(-10.0, 3.0)
        tb = 2.0 ** rng.uniform(-10.0, 3.0)
        center = rng.uniform(-4.0, 4.0, dim)
        sa = ta * 2.0 ** rng.uniform(-3.0, 6.0)
        sb = tb * 2.0 ** rng.uniform(-3.0, 6.0)
        ga = (ta / 2.0) * 2.0 ** -rng.uniform(0.01, 18.0)
        gb = (tb / 2.0) * 2.0 ** -rng.uniform(0.01, 18.0)
        yy = center - np.concatenate(
            [sa * _unit_linf(rng, n), sb * _unit_linf(rng, m)]
        )
        yyp = yy - np.concatenate(
            [ga * _unit_linf(rng, n), gb * _unit_linf(rng, m)]
        )
        t1.append([ta])
        t2.append([tb])
        xs.append(center[None, :])
        ys.append(yy[None, :])
        yps.append(yyp[None, :])
    return (
        np.concatenate(t1),
        np.concatenate(t2),
        np.vstack(xs),
        np.vstack(ys),
        np.vstack(yps),
    )


def check_holder(
    kernel: Kernel,
    params: Params,
    samples: int = 2000,
    seed: int = 2,
    *,
    cap: float = 8.0,
) -> AssumptionReport:
    """Sampled constant of the four-term second-difference smoothness bound.

    Both perturbations stay below half their scale, as the condition requires.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 random samples")
    n = kernel.n
    t1, t2, x, y, yp = _pair_samples(n, kernel.m, samples, seed)
    y_mixed_a = y.copy()
    y_mixed_a[:, n:] = yp[:, n:]
    y_mixed_b = yp.copy()
    y_mixed_b[:, n:] = y[:, n:]
    second_diff = (
        _eval_kernel(kernel, t1, t2, x, y)
        - _eval_kernel(kernel, t1, t2, x, y_mixed_a)
        - _eval_kernel(kernel, t1, t2, x, y_mixed_b)
        + _eval_kernel(kernel, t1, t2, x, yp)
    )
    g1, g2 = _linf_blocks(kernel, y, yp)
    s1, s2 = _linf_blocks(kernel, x, y)
    a, b = kernel.alpha, kernel.beta
    rhs = (
        g1**a
        / (t1 + s1) ** (n + a)
        * g2**b
        / (t2 + s2) ** (kernel.m + b)
    )
    ratios = np.abs(second_diff) / rhs
    i = int(np.argmax(ratios))
    worst = _worst_at(i, t1, t2, x, y, ratios, {"y_prime": tuple(yp[i])})
    return _mk_report("holder", ratios, worst, cap)


def check_mixed(
    kernel: Kernel,
    params: Params,
    samples: int = 2000,
    seed: int = 3,
    *,
    cap: float = 8.0,
) -> AssumptionReport:
    """Sampled constant of the two one-sided difference bounds.

    One branch perturbs only the second block of y (decay in the first block,
    smoothness in the second); the other branch swaps the roles.  The report
    is the supremum over both.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 random samples")
    n = kernel.n
    t1, t2, x, y, yp = _pair_samples(n, kernel.m, samples, seed)
    a, b = kernel.alpha, kernel.beta
    s1, s2 = _linf_blocks(kernel, x, y)
    g1, g2 = _linf_blocks(kernel, y, yp)
    base = _eval_kernel(kernel, t1, t2, x, y)

    y_second = y.copy()
    y_second[:, n:] = yp[:, n:]
    diff_second = np.abs(base - _eval_kernel(kernel, t1, t2, x, y_second))
    rhs_second = (
        t1**a / (t1 + s1) ** (n + a) * g2**b / (t2 + s2) ** (kernel.m + b)
    )

    y_first = y.copy()
    y_first[:, :n] = yp[:, :n]
    diff_first = np.abs(base - _eval_kernel(kernel, t1, t2, x, y_first))
    rhs_first = (
        g1**a / (t1 + s1) ** (n + a) * t2**b / (t2 + s2) ** (kernel.m + b)
    )

    ratios = np.concatenate([diff_second / rhs_second, diff_first / rhs_first])
    i = int(np.argmax(ratios))
    j = i % t1.size
    worst = {
        "t1": float(t1[j]),
        "t2": float(t2[j]),
        "x": tuple(x[j]),
        "y": tuple(y[j]),
        "y_prime": tuple(yp[j]),
        "branch": "vary_y2" if i < t1.size else "vary_y1",
        "ratio": float(ratios[i]),
    }
    return _mk_report("mixed", ratios, worst, cap)


# ---------------------------------------------------------------------------
# box-combination checker


def _weight_window(t: float, lam: float, lo, hi):
    """Closed-form integral of (t / (t + |y|))^lam over y in [lo, hi]."""

    def odd(s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * (t / (lam - 1.0)) * (
            1.0 - (t / (t + np.abs(s))) ** (lam - 1.0)
        )

    return odd(hi) - odd(lo)


def _box_carl(slice_fn, lam: float, lo: float, hi: float, t_lo: float, spec):
    """Box integral of |slice|^2 against the scale weight.

    Computes  int_{t_lo}^{L} int |slice_fn(t, u)|^2 W(t, u) du dt / t^2  where
    L = hi - lo and W is the closed-form window of the weight over the cube.
    The two x/y integrations have been collapsed into the single u variable,
    which is what makes the corner positions of the integrand mesh-resolvable:
    they sit exactly at the cube endpoints.

    Raises RuntimeError when the small-scale octaves stop decaying (the
    integral genuinely diverges for mass-carrying kernels) or when the spatial
    tail is not negligible at the chosen truncation radius.
    """
    ell = hi - lo
    t_nodes, t_weights = octave_nodes(
        t_lo, ell, spec.t_points_per_octave, rule=spec.rule
    )
    eps = max(spec.truncation_eps, 1e-12)
    tol = max(1e-4, 100.0 * eps)
    octaves: dict[int, float] = {}
    total = 0.0
    tail_total = 0.0
    for t, wt in zip(t_nodes, t_weights):
        radius = ell * min(max(8.0, math.sqrt(t / (eps * ell))), 1e7)
        edges = graded_axis_edges(
            lo - radius, hi + radius, anchors=(lo, hi), rel_finest=2.0**-26
        )
        u, uw = segment_nodes(edges, spec.points_per_cell, spec.rule)
        values = np.asarray(slice_fn(t, u), dtype=float)
        window = _weight_window(t, lam, lo - u, hi - u)
        cellwise = values * values * window * uw
        contrib = wt * float(np.sum(cellwise)) / t**2
        p = spec.points_per_cell
        tail_total += wt * float(np.sum(cellwise[:p]) + np.sum(cellwise[-p:])) / t**2
        total += contrib
        octaves[math.floor(math.log2(t))] = (
            octaves.get(math.floor(math.log2(t)), 0.0) + contrib
        )
    floor = np.finfo(float).tiny
    if total > floor:
        ordered = [octaves[k] for k in sorted(octaves)]
        if (
            len(ordered) >= 3
            and ordered[0] > tol * total
            and ordered[0] > 0.8 * ordered[1]
        ):
            raise RuntimeError(
                "truncation failure: small-scale octave contributions are not "
                "decaying, the box integral does not converge"
            )
        if tail_total > tol * total:
            raise RuntimeError(
                "truncation failure: spatial tail above tolerance at the "
                "truncation radius"
            )
    return total


def _swap_kernel(kernel: Kernel) -> Kernel:
    """Exchange the two axes of a 1+1 dimensional kernel."""
    inner = kernel.evaluate

    def swapped(t1, t2, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return inner(t2, t1, x[..., ::-1], y[..., ::-1])

    parts = kernel.tensor_parts
    if parts is not None:
        parts = (parts[1], parts[0])
    return Kernel(
        swapped,
        kernel.beta,
        kernel.alpha,
        kernel.m,
        kernel.n,
        parts,
        kernel.label + "|axes_swapped",
    )


def _grid_eval(kernel: Kernel, t1, t2, x, y, shape):
    values = np.asarray(kernel.evaluate(t1, t2, x, y), dtype=float)
    return np.broadcast_to(values, shape)


def _fixed_axis_samples(ell: float, samples: int, seed: int):
    """Scale-covariant draws of (t2, w2, z2, gap, gap_dir) for the fixed axis."""
    rows = []
    for tf in (0.0625, 0.5, 2.0):
        t2 = ell * tf
        for sf in (0.0, 1.0, 8.0):
            for gf in (0.999, 2.0**-8):
                rows.append((t2, sf * t2, 0.0, gf * t2 / 2.0, 1.0))
    for i in range(samples):
        rng = trial_stream(seed, i)
        t2 = ell * 2.0 ** rng.uniform(-6.0, 3.0)
        w2 = float(np.sign(rng.uniform(-1.0, 1.0))) * t2 * 2.0 ** rng.uniform(
            -4.0, 10.0
        )
        z2 = ell * rng.uniform(-2.0, 2.0)
        gap = (t2 / 2.0) * 2.0 ** -rng.uniform(0.01, 12.0)
        gdir = 1.0 if rng.uniform(-1.0, 1.0) >= 0.0 else -1.0
        rows.append((t2, w2, z2, gap, gdir))
    return rows


def check_carleson_combo(
    kernel: Kernel,
    params: Params,
    cube: DyadicCube,
    mode: str = "size",
    spec: Optional[QuadratureSpec] = None,
    samples: int = 64,
    seed: int = 4,
    *,
    factor: int = 1,
    cap: float = float("inf"),
) -> AssumptionReport:
    """Sampled constant of the box-integrated combination condition.

    The left side integrates, over the Carleson box of ``cube`` and the whole
    line, the squared cube-average of the kernel in one z variable against the
    scale weight of that axis; the right side is the cube measure to the half
    times the remaining one-axis majorant ("size") or its difference form
    ("holder", with the perturbation below half the scale).  ``factor``
    selects which axis carries the box; the scale weight always uses the
    exponent matched to the boxed axis (n*lambda1 for the first, m*lambda2 for
    the second).

    Tensor kernels take a closed-form fast path in which the box integral is
    computed once; general kernels are re-quadratured per sample, so keep
    ``samples`` and the spec modest there.
    """
    if mode not in ("size", "holder"):
        raise ValueError(f"unknown mode {mode!r}")
    if factor not in (1, 2):
        raise ValueError("factor selects axis 1 or 2")
    if samples < 1:
        raise ValueError("need at least one sample")
    if kernel.n != 1 or kernel.m != 1 or params.n != 1 or params.m != 1:
        raise NotImplementedError("box-combination checker is 1+1 dimensional")
    if cube.grid.dim != 1:
        raise ValueError("cube must come from a one-dimensional grid")
    spec = spec if spec is not None else QuadratureSpec()
    if factor == 2:
        kernel = _swap_kernel(kernel)
        params = replace(
            params,
            alpha=params.beta,
            beta=params.alpha,
            lambda1=params.lambda2,
            lambda2=params.lambda1,
        )
    ((lo, hi),) = cube.box()
    ell = cube.side
    t_lo = max(spec.t_min, ell * 2.0**-24)
    if t_lo >= ell:
        raise ValueError("cube side is below the quadrature scale floor")
    lam = params.n * params.lambda1
    beta = kernel.beta

    tensor = kernel.tensor_parts is not None
    carl = None
    if tensor:
        first = kernel.tensor_parts[0]
        carl = _box_carl(
            lambda t, u: first.cell_integral(t, u, lo, hi), lam, lo, hi, t_lo, spec
        )

    z_nodes, z_weights = segment_nodes(
        np.linspace(lo, hi, 33), spec.points_per_cell, spec.rule
    )

    ratios = []
    rows = _fixed_axis_samples(ell, samples, seed)
    for t2, w2, z2, gap, gdir in rows:
        if mode == "size":
            rhs = t2**beta / (t2 + abs(w2)) ** (1.0 + beta)
        else:
            rhs = gap**beta / (t2 + abs(w2)) ** (1.0 + beta)
        if tensor:
            other = kernel.tensor_parts[1]
            if mode == "size":
                num = abs(float(other.profile(t2, abs(w2))))
            else:
                num = abs(
                    float(other.profile(t2, abs(w2)))
                    - float(other.profile(t2, abs(w2 - gap * gdir)))
                )
            lhs = math.sqrt(carl) * num
        else:
            u2 = z2 + w2

            def z_average(t, u, _t2=t2, _u2=u2, _z2=z2, _gap=gap, _gdir=gdir):
                shape = (u.size, z_nodes.size)
                xx = np.empty(shape + (2,))
                xx[..., 0] = u[:, None]
                xx[..., 1] = _u2
                yy = np.empty(shape + (2,))
                yy[..., 0] = z_nodes[None, :]
                yy[..., 1] = _z2
                vals = _grid_eval(kernel, t, _t2, xx, yy, shape)
                if mode == "holder":
                    yy2 = yy.copy()
                    yy2[..., 1] = _z2 + _gap * _gdir
                    vals = vals - _grid_eval(kernel, t, _t2, xx, yy2, shape)
                return vals @ z_weights

            lhs = math.sqrt(_box_carl(z_average, lam, lo, hi, t_lo, spec))
        ratios.append(lhs / (math.sqrt(ell) * rhs))

    ratios = np.asarray(ratios)
    i = int(np.argmax(ratios))
    worst = {
        "t2": rows[i][0],
        "w2": rows[i][1],
        "gap": rows[i][3] if mode == "holder" else None,
        "ratio": float(ratios[i]),
    }
    notes = f"factor={factor}, mode={mode}" + (
        f", box_integral={carl:.6g}" if carl is not None else ""
    )
    return _mk_report(f"carleson_{mode}", ratios, worst, cap, notes)
