"""End-to-end experiments tying the quadrature kit to the structural claims.

Every run in here returns an :class:`ExperimentReport`: a name, the exact
configuration that produced it, per-trial records, summary statistics, and a
pass flag.  Reports are reproducible bit for bit from (name, params, seed,
spec) -- wall-clock time is carried separately so serializers can drop it.

The runs are deliberately opinionated about their default configurations;
every default was frozen after a refinement study, and the notes field of
each report says what was truncated and how hard.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import (
    Params,
    QuadratureSpec,
    StepFunction,
    default_params,
    graded_axis_edges,
    octave_nodes,
    segment_nodes,
)
from .dyadic import (
    DyadicCube,
    ShiftedGrid,
    estimate_pi_good,
    is_good,
    pi_good_exact,
    schur_coeff,
)
from .gstar import (
    _axis_gram,
    _grid_t_range,
    gstar_sq_norm,
    k_quantity,
    q_quantity,
)
from .haar import HaarIndex, expand
from .kernels import (
    AssumptionReport,
    ConvolutionFactor,
    Kernel,
    _tensor_evaluate,
    check_holder,
    check_mixed,
    check_size,
    make_cancellative,
    make_size_only,
    rescale,
)
from .carleson import carleson_check, carleson_sum, random_open_set

__all__ = [
    "ExperimentReport",
    "Lemma32Config",
    "NamedIntegrand",
    "make_mixed",
    "run_averaging",
    "run_boundratio",
    "run_carleson",
    "run_cases",
    "run_kdecay",
    "run_lemma32",
    "run_schur",
    "sample_lemma32_configs",
    "white_noise_family",
]


# ---------------------------------------------------------------------------
# report container


@dataclass(frozen=True)
class ExperimentReport:
    """Outcome of one experiment run.

    ``records`` holds per-trial (or per-configuration) rows as plain dicts;
    ``summary`` the fitted constants, estimates and intervals.  Everything
    except ``wall_time`` is a pure function of the run's inputs.
    """

    name: str
    params: Mapping[str, object]
    seed: int
    records: tuple
    summary: Mapping[str, object]
    passed: bool
    wall_time: float
    notes: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("a report needs a name")
        if self.wall_time < 0.0:
            raise ValueError("wall time cannot be negative")
        object.__setattr__(self, "records", tuple(self.records))

    def to_dict(self, include_timing: bool = False) -> dict:
        """Plain-dict form; timing is opt-in so reruns compare byte-equal."""
        out = {
            "name": self.name,
            "params": dict(self.params),
            "seed": self.seed,
            "records": [dict(r) for r in self.records],
            "summary": dict(self.summary),
            "passed": self.passed,
            "notes": self.notes,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


def _snapshot(params: Params, **extra) -> dict:
    out = {
        "n": params.n,
        "m": params.m,
        "lambda1": params.lambda1,
        "lambda2": params.lambda2,
        "r": params.r,
        "gamma_n": params.gamma_n,
        "gamma_m": params.gamma_m,
    }
    out.update(extra)
    return out


def _spec_snapshot(spec: QuadratureSpec) -> dict:
    return {
        "points_per_cell": spec.points_per_cell,
        "t_points_per_octave": spec.t_points_per_octave,
        "t_min": spec.t_min,
        "t_max": spec.t_max,
        "rule": spec.rule,
    }


# ---------------------------------------------------------------------------
# averaging identity


@dataclass(frozen=True)
class NamedIntegrand:
    """Separable integrand F(x, t) = x_part(x) * 1_(t_lo, t_hi](t) / t.

    The x factor is a one-dimensional step function, so its integral over any
    interval is exact, and the t factor integrates in closed form over any
    scale band.  That makes the full integral and every Whitney-region piece
    exact up to float summation -- the partition check needs no quadrature.
    """

    name: str
    x_part: StepFunction
    t_lo: float
    t_hi: float

    def __post_init__(self) -> None:
        if len(self.x_part.shape) != 1:
            raise ValueError("the position factor must be one-dimensional")
        if self.x_part.tail != 0.0:
            raise ValueError("the position factor must vanish at infinity")
        if not 0.0 < self.t_lo < self.t_hi:
            raise ValueError("need 0 < t_lo < t_hi")

    @classmethod
    def unit_box(cls) -> "NamedIntegrand":
        """1_[0,1)(x) 1_(1/2,1](t)/t; integrates to ln 2 exactly."""
        return cls("unit_box", StepFunction(0, (0,), np.ones(1)), 0.5, 1.0)

    @classmethod
    def zero(cls) -> "NamedIntegrand":
        return cls("zero", StepFunction(0, (0,), np.zeros(1)), 0.5, 1.0)

    def x_integral(self) -> float:
        return self.x_part.integral()

    def band_log(self, lo: float, hi: float) -> float:
        """Integral of dt/t over (lo, hi] intersected with (t_lo, t_hi]."""
        a, b = max(lo, self.t_lo), min(hi, self.t_hi)
        return math.log(b / a) if b > a else 0.0


def _interval_integral(f: StepFunction, a: Fraction, b: Fraction) -> float:
    """Exact integral of the 1-d step function over [a, b)."""
    level = f.level
    k0 = f.lo[0]
    cell = Fraction(1, 2 ** level) if level >= 0 else Fraction(2 ** -level)
    parts = []
    for i, v in enumerate(f.values):
        if v == 0.0:
            continue
        lo = (k0 + i) * cell
        hi = lo + cell
        w = min(b, hi) - max(a, lo)
        if w > 0:
            parts.append(float(w) * float(v))
    return math.fsum(parts)


def _band_levels(integrand: NamedIntegrand) -> list[int]:
    """Grid levels whose Whitney band meets the integrand's t support."""
    lo_lev = math.floor(-math.log2(integrand.t_hi))
    hi_lev = math.ceil(-math.log2(integrand.t_lo))
    out = []
    for lev in range(lo_lev, hi_lev + 1):
        if integrand.band_log(2.0 ** -(lev + 1), 2.0 ** -lev) > 0.0:
            out.append(lev)
    return out


def run_averaging(
    params: Params,
    integrand: Optional[NamedIntegrand] = None,
    trials: int = 1000,
    seed: int = 7,
    *,
    octaves: int = 12,
    pi_trials: int = 20000,
    threads: int = 1,
) -> ExperimentReport:
    """Whitney-partition identity plus its randomized good-cube version.

    Deterministic half: for every sampled shift the Whitney regions tile the
    scale strip, so the sum of per-region integrals reproduces the closed
    form exactly (float summation only).  Stochastic half: restrict to good
    cubes, divide by the per-level good-cube probability, and average over
    shifts; the mean must recover the same closed form within its own CI.

    The good-cube probability is estimated at the same truncation depth the
    trial grids use (``octaves`` qualifying ancestor generations).  When that
    probability is statistically indistinguishable from zero the stochastic
    estimator has no usable normalization and the run aborts rather than
    report noise.
    """
    t0 = time.perf_counter()
    integrand = integrand or NamedIntegrand.unit_box()
    if trials < 1:
        raise ValueError("need at least one trial")
    levels = _band_levels(integrand)
    if not levels:
        raise ValueError("the integrand's scale band misses every level")
    j_min = min(levels) - params.r - (octaves - 1)
    j_max = max(levels) + 1
    closed = integrand.x_integral() * math.log(integrand.t_hi / integrand.t_lo)
    zero_run = closed == 0.0

    # per-level good-cube probability at the matching truncation
    pi_hat: dict[int, tuple[float, float]] = {}
    for lev in levels:
        est, half = estimate_pi_good(
            params, pi_trials, lev, seed + 900_001 + lev, j_min=j_min
        )
        pi_hat[lev] = (est, half)
        if not zero_run and est - half <= 0.0:
            raise RuntimeError(
                "goodness-starved configuration: the good-cube probability "
                f"at level {lev} is {est:.3g} +/- {half:.3g} over {pi_trials} "
                "draws (CI touches zero), so the averaged sum cannot be "
                "normalized; raise r or lower the truncation depth"
            )

    (a_supp, b_supp), = integrand.x_part.box_fractions()

    def one_trial(trial: int) -> tuple[float, float]:
        grid = ShiftedGrid.random(1, j_min, j_max, seed, trial=trial)
        full = []
        good = 0.0
        for lev in levels:
            blog = integrand.band_log(2.0 ** -(lev + 1), 2.0 ** -lev)
            shift, = grid.shift_fraction(lev)
            scale = Fraction(2) ** lev
            k_lo = math.floor((a_supp - shift) * scale)
            k_hi = math.ceil((b_supp - shift) * scale)
            inv_pi = 0.0 if zero_run else 1.0 / pi_hat[lev][0]
            for k in range(k_lo, k_hi):
                cube = grid.cube(lev, (k,))
                (clo, chi), = cube.box_fractions()
                w = _interval_integral(integrand.x_part, clo, chi) * blog
                full.append(w)
                if w != 0.0 and is_good(cube, grid, params):
                    good += w * inv_pi
        det = math.fsum(full)
        rel = abs(det - closed) / abs(closed) if closed else abs(det)
        return rel, good

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_trial, range(trials)))
    else:
        results = [one_trial(t) for t in range(trials)]

    rels = np.array([r for r, _ in results])
    sums = np.array([s for _, s in results])
    estimate = float(np.mean(sums))
    sd = float(np.std(sums, ddof=1)) if trials > 1 else 0.0
    se_mc = sd / math.sqrt(trials)
    # fold the normalization uncertainty into the interval
    se_pi = 0.0
    if not zero_run:
        worst = max(h / e for e, h in pi_hat.values())
        se_pi = abs(estimate) * worst / 1.96
    ci95 = 1.96 * math.hypot(se_mc, se_pi)
    rel_err = abs(estimate - closed) / abs(closed) if closed else abs(estimate)
    partition_worst = float(np.max(rels))
    stochastic_ok = abs(estimate - closed) <= max(ci95, 1e-15)
    passed = partition_worst <= 1e-10 and stochastic_ok

    records = tuple(
        {"trial": t, "partition_rel": float(rels[t]), "good_sum": float(sums[t])}
        for t in range(min(trials, 100))
    )
    gamma = Fraction(params.gamma_n).limit_denominator(1000)
    summary = {
        "integrand": integrand.name,
        "closed_total": closed,
        "partition_worst_rel": partition_worst,
        "estimate": estimate,
        "ci95": ci95,
        "rel_err": rel_err,
        "trials": trials,
        "pi_hat": {str(l): list(v) for l, v in pi_hat.items()},
        "pi_exact": {
            str(l): float(pi_good_exact(gamma, params.r, octaves)) for l in levels
        },
    }
    notes = (
        f"trial grids span levels [{j_min}, {j_max}]; band levels {levels}; "
        f"{octaves} qualifying octaves per cube; partial scale bands "
        "integrate in closed form, so the partition check carries no "
        "quadrature error"
    )
    return ExperimentReport(
        name="averaging",
        params=_snapshot(params, integrand=integrand.name, octaves=octaves,
                         trials=trials, pi_trials=pi_trials),
        seed=seed,
        records=records,
        summary=summary,
        passed=passed,
        wall_time=time.perf_counter() - t0,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# coupling-matrix norm growth


def _draw_collection(scheme: str, size: int, seed: int) -> list[DyadicCube]:
    """Nested random cube families; prefixes of one stream are the nesting."""
    rng = np.random.default_rng((seed, 0x5C))
    if scheme == "multiscale":
        grid = ShiftedGrid.random(1, -10, 24, seed, trial=0)
        out: list[DyadicCube] = []
        seen = set()
        while len(out) < size:
            lev = int(rng.integers(0, 9))
            idx = int(rng.integers(0, 4 * 2 ** lev))
            if (lev, idx) not in seen:
                seen.add((lev, idx))
                out.append(grid.cube(lev, (idx,)))
        return out
    if scheme == "singlescale":
        grid = ShiftedGrid.random(1, -10, 24, seed, trial=1)
        order: list[int] = []
        block = 8
        start = 0
        while len(order) < size:
            chunk = list(range(start, start + block))
            rng.shuffle(chunk)
            order.extend(chunk)
            start += block
            block = start  # doubles the window each round
        return [grid.cube(0, (k,)) for k in order[:size]]
    raise ValueError(f"unknown collection scheme {scheme!r}")


def _perron(a: np.ndarray, tol: float = 1e-12, iters: int = 50_000) -> float:
    n = a.shape[0]
    v = np.full(n, n ** -0.5)
    for _ in range(iters):
        w = a @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v2 = w / norm
        if float(np.linalg.norm(v2 - v)) < tol:
            return norm
        v = v2
    raise RuntimeError("power iteration did not converge within the budget")


def run_schur(
    params: Params,
    collection_sizes: Sequence[int] = (8, 16, 32, 64, 128, 256, 512),
    seed: int = 23,
    *,
    alpha: float = 0.5,
    scheme: str = "multiscale",
    draws: int = 1000,
) -> ExperimentReport:
    """Operator-norm growth of the coupling matrix over nested collections.

    The entries couple two dyadic intervals through the long distance; the
    bilinear form is bounded over arbitrary families, and the power-iteration
    norm of nested sections should stabilize as the family saturates.  The
    fitted norm then certifies the quadratic inequality on random nonnegative
    vectors, and the one-cube family has the closed-form norm 2^(-3/2).

    Scheme "multiscale" draws levels and positions uniformly -- the faithful
    family, whose norm provably keeps growing at desk sizes (the depth
    direction saturates geometrically, about 2^(-alpha/2) per added level,
    and the width direction like W^(-alpha)).  Scheme "singlescale" widens a
    fully populated single-level window, which does saturate by 512 cubes.
    """
    t0 = time.perf_counter()
    sizes = sorted(set(int(s) for s in collection_sizes))
    if not sizes or sizes[0] < 1:
        raise ValueError("collection sizes must be positive")
    cubes = _draw_collection(scheme, sizes[-1], seed)

    big = np.empty((sizes[-1], sizes[-1]))
    for i, ci in enumerate(cubes):
        for j, cj in enumerate(cubes):
            big[i, j] = schur_coeff(ci, cj, alpha)

    lambdas = {}
    for s in sizes:
        lambdas[s] = _perron(big[:s, :s])
    growths = {
        f"{a}->{b}": lambdas[b] / lambdas[a] - 1.0
        for a, b in zip(sizes, sizes[1:])
    }
    final_growth = lambdas[sizes[-1]] / lambdas[sizes[-2]] - 1.0 if len(sizes) > 1 else 0.0
    saturated = final_growth < 0.05

    # quadratic inequality with the fitted constant
    rng = np.random.default_rng((seed, 0xA1))
    lam = lambdas[sizes[-1]]
    worst = 0.0
    for _ in range(draws):
        x = np.abs(rng.standard_normal(sizes[-1]))
        y = np.abs(rng.standard_normal(sizes[-1]))
        num = float(x @ big @ y) ** 2
        den = lam ** 2 * float(x @ x) * float(y @ y)
        worst = max(worst, num / den)
    ineq_ok = worst <= 1.0 + 1e-9

    single_grid = ShiftedGrid.standard(1, -2, 4)
    singleton = schur_coeff(single_grid.cube(0, (0,)), single_grid.cube(0, (0,)), alpha)
    singleton_ok = singleton == 2.0 ** -1.5

    passed = saturated and ineq_ok and singleton_ok
    records = tuple(
        {"size": s, "norm": lambdas[s],
         "growth": growths.get(f"{ps}->{s}")}
        for ps, s in zip([None] + sizes[:-1], sizes)
    )
    summary = {
        "scheme": scheme,
        "alpha": alpha,
        "norms": {str(s): lambdas[s] for s in sizes},
        "final_growth": final_growth,
        "saturated": saturated,
        "fitted_constant": lam ** 2,
        "bilinear_worst_ratio": worst,
        "bilinear_draws": draws,
        "singleton": singleton,
        "singleton_ok": singleton_ok,
    }
    notes = (
        "growth per doubling decays geometrically in added depth "
        "(about 2^(-alpha/2) per level) and like W^(-alpha) in added width; "
        "pushing both directions below 5% needs on the order of 2^17 cubes, "
        "far beyond a dense 512-cube section"
    )
    return ExperimentReport(
        name="schur",
        params=_snapshot(params, alpha=alpha, scheme=scheme,
                         sizes=list(sizes), draws=draws),
        seed=seed,
        records=records,
        summary=summary,
        passed=passed,
        wall_time=time.perf_counter() - t0,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# one-factor tail estimate


@dataclass(frozen=True)
class Lemma32Config:
    """One probe configuration: target interval, Whitney interval, and a
    scale point inside the latter's Whitney region."""

    i1: tuple[float, float]
    i2: tuple[float, float]
    x1: float
    t1: float
    alpha: float = 0.5


def sample_lemma32_configs(count: int = 120, seed: int = 5) -> list[Lemma32Config]:
    """The fixed center configuration first, then seeded random ones."""
    out = [Lemma32Config((0.0, 1.0), (0.0, 1.0), 0.5, 0.75)]
    rng = np.random.default_rng((seed, 0x32))
    while len(out) < count:
        lev1 = int(rng.integers(0, 7))
        lev2 = int(rng.integers(0, 7))
        s1, s2 = 2.0 ** -lev1, 2.0 ** -lev2
        k1 = int(rng.integers(-2 * 2 ** lev1, 4 * 2 ** lev1))
        k2 = int(rng.integers(0, 4 * 2 ** lev2))
        lo1, lo2 = k1 * s1, k2 * s2
        u = float(rng.uniform(0.05, 0.95))
        v = float(rng.uniform(0.501, 1.0))
        out.append(Lemma32Config((lo1, lo1 + s1), (lo2, lo2 + s2),
                                 lo2 + u * s2, v * s2))
    return out[:count]


def _lemma32_lhs(cfg: Lemma32Config, lam: float, spec: QuadratureSpec) -> tuple[float, float]:
    """Quadrature of the weighted square integral; returns (value, tail_rel)."""
    lo1, hi1 = cfg.i1
    x1, t1, a = cfg.x1, cfg.t1, cfg.alpha
    factor = ConvolutionFactor(1, a, "size")
    span = max(t1, hi1 - lo1, abs(x1 - lo1), abs(x1 - hi1), 1.0)
    radius = 64.0 * span
    fine = min(2.0 ** -16, t1 / (16.0 * radius))
    edges = graded_axis_edges(-radius, radius, (0.0, x1 - hi1, x1 - lo1),
                              rel_finest=fine)
    y, dy = segment_nodes(edges, spec.points_per_cell, spec.rule)
    inner = factor.cell_integral(t1, x1 - y, lo1, hi1) / t1 ** a
    weight = (t1 / (t1 + np.abs(y))) ** lam
    contrib = inner ** 2 * weight * dy / t1
    total = float(np.sum(contrib))
    edge = float(contrib[0] + contrib[-1])
    tail_rel = edge / total if total > 0 else 0.0
    return math.sqrt(total), tail_rel


def run_lemma32(
    params: Params,
    configs: Optional[Sequence[Lemma32Config]] = None,
    spec: Optional[QuadratureSpec] = None,
) -> ExperimentReport:
    """Tail estimate for the one-factor interval response.

    For each configuration, the square root of the weighted square integral
    of the interval response is compared with |I1| / (l(I2) + d)^(1+alpha);
    the ratio must stay finite and move by less than 10% when the quadrature
    is refined twofold.
    """
    t0 = time.perf_counter()
    spec = spec or QuadratureSpec()
    if configs is None:
        configs = sample_lemma32_configs()
    lam = params.n * params.lambda1
    a_cap = params.n * (params.lambda1 - 2.0) / 2.0
    fine_spec = spec.refined(2)

    records = []
    worst_ratio = 0.0
    worst_drift = 0.0
    worst_tail = 0.0
    for cfg in configs:
        lo2, hi2 = cfg.i2
        ell2 = hi2 - lo2
        if not (lo2 <= cfg.x1 < hi2 and ell2 / 2.0 < cfg.t1 <= ell2):
            raise ValueError("the probe point must lie in the Whitney region "
                             "of its interval")
        if not 0.0 < cfg.alpha <= a_cap:
            raise ValueError("exponent outside the admissible band for this "
                             "weight")
        lo1, hi1 = cfg.i1
        gap = max(0.0, lo2 - hi1, lo1 - hi2)
        rhs = (hi1 - lo1) / (ell2 + gap) ** (1.0 + cfg.alpha)
        lhs, tail = _lemma32_lhs(cfg, lam, spec)
        lhs2, _ = _lemma32_lhs(cfg, lam, fine_spec)
        ratio, ratio2 = lhs / rhs, lhs2 / rhs
        drift = abs(ratio2 / ratio - 1.0) if ratio > 0 else 0.0
        worst_ratio = max(worst_ratio, ratio2)
        worst_drift = max(worst_drift, drift)
        worst_tail = max(worst_tail, tail)
        records.append({
            "i1": list(cfg.i1), "i2": list(cfg.i2), "x1": cfg.x1,
            "t1": cfg.t1, "ratio": ratio, "ratio_refined": ratio2,
            "drift": drift,
        })

    passed = (not configs) or (math.isfinite(worst_ratio) and worst_drift < 0.10)
    summary = {
        "configs": len(records),
        "max_ratio": worst_ratio,
        "max_refinement_drift": worst_drift,
        "max_boundary_share": worst_tail,
        "spec": _spec_snapshot(spec),
    }
    notes = (
        "position integral truncated at 64x the configuration span with a "
        "mesh graded toward the weight peak and the interval edges; the "
        "boundary cells carry at most the reported share of the integral"
    )
    return ExperimentReport(
        name="lemma32",
        params=_snapshot(params, configs=len(records)),
        seed=0,
        records=tuple(records),
        summary=summary,
        passed=passed,
        wall_time=time.perf_counter() - t0,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# ancestor-ladder decay


def _ladder_cube(grid: ShiftedGrid, base: DyadicCube, k: int) -> DyadicCube:
    """A cube at base's level sitting at a typical good position inside its
    k-th ancestor: offset ~2^(k/2) cells from the ancestor's edge, clamped
    inside the (k-1)-st ancestor."""
    if k < 1:
        raise ValueError("need k >= 1")
    off = min(math.ceil(2.0 ** (k / 2.0)), 2 ** (k - 1) - 1) if k > 1 else 0
    block = (base.index[0] >> (k - 1)) << (k - 1)
    return grid.cube(base.level, (block + off,))


def _kdecay_slope(alpha: float, grid: ShiftedGrid, base: DyadicCube,
                  ks: Sequence[int], params: Params,
                  spec: QuadratureSpec) -> float:
    factor = ConvolutionFactor(1, alpha, "size")
    vals = []
    for k in ks:
        cube = _ladder_cube(grid, base, k)
        (lo, hi), = cube.box()
        x1 = 0.5 * (lo + hi)
        vals.append(k_quantity(factor, cube, k, x1, 0.75 * cube.side, params, spec))
    return float(np.polyfit(np.asarray(ks, dtype=float),
                            np.log2(vals), 1)[0])


def run_kdecay(
    params: Params,
    i: Optional[DyadicCube] = None,
    k_range: Sequence[int] = tuple(range(1, 15)),
    spec: Optional[QuadratureSpec] = None,
    *,
    alpha: float = 0.5,
    beta: float = 0.5,
    plateau_upto: int = 8,
    side_runs: bool = True,
) -> ExperimentReport:
    """Decay ladders of the complement response and the modified-pattern
    response in the ancestor generation k.

    Both ladders place the probe cube at a typical good position inside its
    k-th ancestor (offset ~2^(k/2) cells).  The complement response is
    dimensionless and should sit at Theta(1) for k up to r, then decay like
    2^(-alpha k/2).  The modified-pattern response carries the ancestor's
    normalization |I^(k)|^(-1/2); that factor is divided out before the fit,
    and the constant second-axis factor is absorbed into the Theta(1) band.
    """
    t0 = time.perf_counter()
    spec = spec or QuadratureSpec(t_min=2.0 ** -10, t_max=2.0 ** 4)
    grid = ShiftedGrid.standard(1, -10, 8)
    base = i if i is not None else grid.cube(4, (0,))
    if i is not None:
        grid = base.grid
    ks = sorted(int(k) for k in k_range)
    kernel = make_size_only(1, 1, alpha, beta)
    factor = kernel.tensor_parts[0]
    j1 = grid.cube(1, (0,))
    x2, t2 = 0.3, 0.375

    records = []
    k_vals, q_vals = {}, {}
    for k in ks:
        cube = _ladder_cube(grid, base, k)
        (lo, hi), = cube.box()
        x1 = 0.5 * (lo + hi)
        t1 = 0.75 * cube.side
        kv = k_quantity(factor, cube, k, x1, t1, params, spec)
        qv = q_quantity(kernel, cube, k, j1, (x1, x2), t1, t2, params, spec)
        qn = qv * math.sqrt(cube.side * 2.0 ** k)   # ancestor scale factor out
        k_vals[k], q_vals[k] = kv, qn
        records.append({"k": k, "offset": cube.index[0] - base.index[0],
                        "k_value": kv, "q_value": qv, "q_scaled": qn})

    plateau_ks = [k for k in ks if k <= plateau_upto]
    slope_ks = [k for k in ks if k > plateau_upto]
    window = (-alpha / 2.0 - 0.1, -alpha / 2.0 + 0.1)

    def fit(vals: dict) -> float:
        return float(np.polyfit(np.asarray(slope_ks, dtype=float),
                                [math.log2(vals[k]) for k in slope_ks], 1)[0])

    k_slope = fit(k_vals)
    q_slope = fit(q_vals)
    k_plateau = (min(k_vals[k] for k in plateau_ks),
                 max(k_vals[k] for k in plateau_ks)) if plateau_ks else None
    q_plateau = (min(q_vals[k] for k in plateau_ks),
                 max(q_vals[k] for k in plateau_ks)) if plateau_ks else None

    def in_band(rng_pair) -> bool:
        return rng_pair is None or (rng_pair[0] >= 0.1 and rng_pair[1] <= 10.0)

    slopes_ok = (window[0] <= k_slope <= window[1]
                 and window[0] <= q_slope <= window[1])
    plateaus_ok = in_band(k_plateau) and in_band(q_plateau)

    side = {}
    side_ok = True
    if side_runs and slope_ks:
        s_half = _kdecay_slope(alpha / 2.0, grid, base, slope_ks, params, spec)
        s_quarter = _kdecay_slope(alpha / 4.0, grid, base, slope_ks, params, spec)
        doubling = k_slope / s_half if s_half != 0.0 else float("inf")
        side = {
            "slope_alpha": k_slope,
            "slope_half_alpha": s_half,
            "slope_quarter_alpha": s_quarter,
            "doubling_ratio": doubling,
        }
        side_ok = (1.5 <= doubling <= 2.5
                   and abs(s_quarter) < abs(s_half) < abs(k_slope))

    passed = slopes_ok and plateaus_ok and side_ok
    summary = {
        "alpha": alpha,
        "k_slope": k_slope,
        "q_slope": q_slope,
        "slope_window": list(window),
        "slope_ks": slope_ks,
        "k_plateau": list(k_plateau) if k_plateau else None,
        "q_plateau": list(q_plateau) if q_plateau else None,
        "side_runs": side,
    }
    notes = (
        "modified-pattern values are reported raw and with the ancestor "
        "scale factor divided out; the fit uses the scaled series, whose "
        "second-axis factor is constant across k"
    )
    return ExperimentReport(
        name="kdecay",
        params=_snapshot(params, alpha=alpha, beta=beta,
                         base_level=base.level, ks=list(ks)),
        seed=0,
        records=tuple(records),
        summary=summary,
        passed=passed,
        wall_time=time.perf_counter() - t0,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# packing dichotomy


def make_mixed(n: int, m: int, alpha: float, beta: float) -> Kernel:
    """Tensor kernel with a cancellative first factor and a size-only second
    factor; applied to the constant it vanishes, so it packs like the
    cancellative family despite the one-sided positivity."""
    f1 = ConvolutionFactor(n, alpha, "cancellative")
    f2 = ConvolutionFactor(m, beta, "size")
    return Kernel(
        _tensor_evaluate(f1, f2, n),
        alpha,
        beta,
        n,
        m,
        (f1, f2),
        label=f"mixed(n={n},m={m},a={alpha:g},b={beta:g})",
    )


def run_carleson(
    params: Params,
    kernels: Optional[Sequence[Kernel]] = None,
    omega_count: int = 4,
    levels: int = 3,
    seed: int = 11,
    spec: Optional[QuadratureSpec] = None,
    *,
    cap: float = 50.0,
) -> ExperimentReport:
    """Packing dichotomy across a kernel family.

    Cancellative factors zero out the box quantity, so those kernels pass any
    finite packing cap; the size-only kernel's ratio grows like the squared
    rectangle-depth count and must be flagged.  The expected verdict pattern
    is part of the run: a flip in either direction fails the experiment.
    """
    t0 = time.perf_counter()
    if kernels is None:
        kernels = (
            make_size_only(params.n, params.m, 0.5, 0.5),
            make_cancellative(params.n, params.m, 0.5, 0.5),
            make_mixed(params.n, params.m, 0.5, 0.5),
        )
    expected = {k.label: (k.tensor_parts is not None
                          and any(f.flavor == "cancellative"
                                  for f in k.tensor_parts))
                for k in kernels}

    omegas = []
    gps = []
    for i in range(omega_count):
        gp = (ShiftedGrid.random(1, -6, 10, seed, trial=2 * i),
              ShiftedGrid.random(1, -6, 10, seed, trial=2 * i + 1))
        gps.append(gp)
        rng = np.random.default_rng((seed, i))
        omegas.append(random_open_set(gp, rng, n_rects=4, level_range=(0, 2)))

    records = []
    verdicts = {}
    law_rel = None
    for kernel in kernels:
        verdict, reps = carleson_check(kernel, omegas, levels, cap, params, spec)
        verdicts[kernel.label] = verdict
        for om, (rep, rep2) in zip(omegas, reps):
            records.append({
                "kernel": kernel.label,
                "measure": rep.measure,
                "ratio": rep.ratio,
                "ratio_deeper": rep2.ratio,
                "levels": rep.levels,
            })
        if kernel.tensor_parts is not None and all(
                f.flavor == "size" for f in kernel.tensor_parts):
            # closed-form growth law on the unit square
            std = (ShiftedGrid.standard(1, -6, 10),
                   ShiftedGrid.standard(1, -6, 10))
            unit = random_open_set(std, np.random.default_rng(0),
                                   n_rects=1, level_range=(0, 0),
                                   box=(0.0, 1.0))
            rep = carleson_sum(kernel, unit, levels, params, spec)
            c_unit = 256.0 * math.log(2.0) ** 2
            law = c_unit * (levels + 1) ** 2
            law_rel = abs(rep.ratio / law - 1.0)
            records.append({"kernel": kernel.label, "measure": rep.measure,
                            "ratio": rep.ratio, "ratio_deeper": law,
                            "levels": levels})

    pattern_ok = all(verdicts[lbl] == expected[lbl] for lbl in verdicts)
    law_ok = law_rel is None or law_rel < 0.05
    passed = pattern_ok and law_ok
    summary = {
        "verdicts": verdicts,
        "expected": expected,
        "pattern_ok": pattern_ok,
        "unit_square_law_rel_err": law_rel,
        "cap": cap,
        "levels": levels,
        "omega_count": omega_count,
    }
    notes = (
        "packing ratios compare total box mass against the set measure at "
        f"rectangle depth {levels} and {levels + 1}; the size-only family "
        "grows with depth squared and is expected to fail the cap"
    )
    return ExperimentReport(
        name="carleson",
        params=_snapshot(params, levels=levels, cap=cap,
                         kernels=[k.label for k in kernels]),
        seed=seed,
        records=tuple(records),
        summary=summary,
        passed=passed,
        wall_time=time.perf_counter() - t0,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# norm-ratio saturation


def white_noise_family(rng: np.random.Generator, level: int) -> StepFunction:
    """Seeded standard normal on every lattice cell of the unit square,
    normalized to unit L2 norm."""
    n = 2 ** level
    vals = rng.standard_normal((n, n))
    vals /= math.sqrt(float(np.sum(vals ** 2)) * 4.0 ** -level)
    return StepFunction(level, (0, 0), vals)


def run_boundratio(
    params: Params,
    kernel: Optional[Kernel] = None,
    function_family: Callable[[np.random.Generator, int], StepFunction] = white_noise_family,
    count: int = 200,
    levels: Sequence[int] = (4, 5, 6, 7),
    seed: int = 41,
    spec: Optional[QuadratureSpec] = None,
) -> ExperimentReport:
    """Largest observed norm ratio per refinement level.

    The kernel must pass the assumption checkers before anything runs.  The
    ratio max ||g* f|| / ||f|| over seeded random step functions should
    stabilize between the two finest levels, and multiplying the kernel by a
    constant must scale every ratio exactly.
    """
    t0 = time.perf_counter()
    kernel = kernel or make_cancellative(params.n, params.m, 0.5, 0.5)
    spec = spec or QuadratureSpec()
    if kernel.tensor_parts is None:
        raise NotImplementedError("the ratio sweep runs on the gram fast "
                                  "path, which needs a tensor kernel")
    checks = (check_size(kernel, params), check_holder(kernel, params),
              check_mixed(kernel, params))
    if not all(c.passed for c in checks):
        failing = "; ".join(c.summary() for c in checks if not c.passed)
        raise RuntimeError(f"kernel assumption checks failed: {failing}")

    grid = ShiftedGrid.standard(1, -12, 12)
    lam1 = params.n * params.lambda1
    lam2 = params.m * params.lambda2
    t_range = _grid_t_range(grid, spec)
    f1, f2 = kernel.tensor_parts

    def grams(kern: Kernel, level: int) -> tuple[np.ndarray, np.ndarray]:
        g1, g2 = kern.tensor_parts
        m1 = _axis_gram(g1, level, 2 ** level, lam1, t_range, spec)
        m2 = _axis_gram(g2, level, 2 ** level, lam2, t_range, spec)
        return m1, m2

    def ratio_from(m1: np.ndarray, m2: np.ndarray, f: StepFunction) -> float:
        vals = f.values * f.cell_side ** 2
        return math.sqrt(max(float(np.sum((m1 @ vals @ m2) * vals)), 0.0))

    levels = sorted(int(l) for l in levels)
    records = []
    mx: dict[int, float] = {}
    for lev in levels:
        m1, m2 = grams(kernel, lev)
        best = 0.0
        for trial in range(count):
            f = function_family(np.random.default_rng((seed, lev, trial)), lev)
            rho = ratio_from(m1, m2, f)
            if trial == 0:
                # keep the private contraction honest against the public path
                direct = gstar_sq_norm(kernel, f, params, (grid, grid), spec,
                                       route="gram")
                rel = abs(rho ** 2 - direct) / max(direct, 1e-300)
                if rel > 1e-9:
                    raise RuntimeError("gram contraction disagrees with the "
                                       f"norm route (rel {rel:.2e})")
            best = max(best, rho)
        mx[lev] = best
        records.append({"level": lev, "max_ratio": best, "count": count})

    growth = mx[levels[-1]] / mx[levels[-2]] - 1.0 if len(levels) > 1 else 0.0

    # exact amplitude homogeneity on a handful of functions
    scaled = rescale(kernel, 2.0)
    lev = levels[min(1, len(levels) - 1)]
    m1, m2 = grams(kernel, lev)
    s1, s2 = grams(scaled, lev)
    homo_dev = 0.0
    for trial in range(5):
        f = function_family(np.random.default_rng((seed, lev, trial)), lev)
        r0 = ratio_from(m1, m2, f)
        r1 = ratio_from(s1, s2, f)
        homo_dev = max(homo_dev, abs(r1 / (2.0 * r0) - 1.0))

    passed = abs(growth) < 0.10 and homo_dev <= 1e-12
    summary = {
        "kernel": kernel.label,
        "max_ratios": {str(l): mx[l] for l in levels},
        "top_growth": growth,
        "homogeneity_dev": homo_dev,
        "checker_estimates": {c.condition: c.estimate for c in checks},
        "count": count,
    }
    notes = (
        "scale strip (2^-13, 2^6] on a level-(-12..12) grid pair; the strip "
        "bottom sits at least five octaves under the finest lattice, so the "
        "truncated sub-cell response moves the top ratio by a few percent "
        "per level at most"
    )
    return ExperimentReport(
        name="boundratio",
        params=_snapshot(params, kernel=kernel.label, count=count,
                         levels=list(levels)),
        seed=seed,
        records=tuple(records),
        summary=summary,
        passed=passed,
        wall_time=time.perf_counter() - t0,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# case decomposition


def _containing_cube(grid: ShiftedGrid, lo: Fraction, hi: Fraction) -> DyadicCube:
    """Coarsest-needed grid interval containing [lo, hi)."""
    level = 0
    while True:
        cube = grid.cube_at(level, (float(lo) + 1e-12,))
        (a, b), = cube.box_fractions()
        if a <= lo and hi <= b:
            return cube
        level -= 1
        if level < grid.j_min:
            raise ValueError("support does not fit inside the grid truncation")


def _axis_members(expansion, slot: int) -> list[HaarIndex]:
    seen: dict = {}
    for i1, i2 in expansion.indices():
        idx = (i1, i2)[slot]
        key = (idx.cube.level, idx.cube.index, idx.eta)
        if key not in seen:
            seen[key] = idx
    return list(seen.values())


def _member_theta(factor: ConvolutionFactor, idx: HaarIndex, t: float,
                  u: np.ndarray) -> np.ndarray:
    """Response of one Haar member under the convolution factor at scale t."""
    (lo, hi), = idx.cube.box()
    scale = idx.cube.side ** -0.5
    if idx.cancellative:
        mid = 0.5 * (lo + hi)
        return scale * (factor.cell_integral(t, u, lo, mid)
                        - factor.cell_integral(t, u, mid, hi))
    return scale * factor.cell_integral(t, u, lo, hi)


def _whitney_gram(factor: ConvolutionFactor, members: Sequence[HaarIndex],
                  w_cube: DyadicCube, lam: float,
                  spec: QuadratureSpec) -> np.ndarray:
    """Gram matrix of member responses over one Whitney region.

    Integrates theta h_i (x - y) theta h_j (x - y) against the scale weight
    over y, the region's cube in x, and its scale band in t.  All the case
    quantities over this region are quadratic forms in this matrix, so every
    split of the coefficient matrix is evaluated on the same nodes.
    """
    (wlo, whi), = w_cube.box()
    side = w_cube.side
    tn, tw = octave_nodes(side / 2.0, side, spec.t_points_per_octave, spec.rule)
    xs, xw = segment_nodes(np.array([wlo, whi]), spec.points_per_cell, spec.rule)
    edges = sorted({b for m in members for b in
                    (m.cube.box()[0][0], m.cube.box()[0][1],
                     0.5 * sum(m.cube.box()[0]))})
    gram = np.zeros((len(members), len(members)))
    for t, wt in zip(tn, tw):
        span = max(whi - wlo, 1.0)
        radius = 48.0 * max(t, span)
        for x, wx in zip(xs, xw):
            anchors = tuple(x - e for e in edges) + (0.0,)
            fine = min(2.0 ** -16, t / (8.0 * radius))
            mesh = graded_axis_edges(-radius, radius, anchors, rel_finest=fine)
            y, dy = segment_nodes(mesh, 2, spec.rule)
            u = x - y
            theta = np.stack([_member_theta(factor, m, t, u) for m in members])
            weight = (t / (t + np.abs(y))) ** lam * dy / t
            gram += (wt / t * wx) * ((theta * weight) @ theta.T)
    return gram


def _pair_tag(side1: float, side2: float, gap: float, r: int,
              gamma: float) -> str:
    tau = side2 ** gamma * side1 ** (1.0 - gamma)
    if gap > tau:
        return "separated"
    if side1 > 2 ** r * side2:
        return "nested"
    return "adjacent"


def run_cases(
    params: Params,
    kernel: Optional[Kernel] = None,
    f: Optional[StepFunction] = None,
    grid_pair_seed: int = 13,
    spec: Optional[QuadratureSpec] = None,
    *,
    whitney_levels: tuple[int, int] = (-1, 3),
    pad: float = 2.0,
) -> ExperimentReport:
    """Good-region quadrature split by coefficient side-length comparisons.

    The full good-Whitney quantity and its four side-length pieces evaluate
    as quadratic forms of the same per-region gram matrices, so the quadratic
    inequality (full <= 4 x sum of pieces) holds on the shared nodes exactly,
    up to float roundoff.  Coefficient-interval pairs with the wider interval
    on the coefficient side split into separated / nested / adjacent classes;
    the classes must cover each pair exactly once, and nested pairs against a
    good region interval must be genuine ancestors.
    """
    t0 = time.perf_counter()
    kernel = kernel or make_size_only(params.n, params.m, 0.5, 0.5)
    spec = spec or QuadratureSpec(points_per_cell=3, t_points_per_octave=4)
    if kernel.tensor_parts is None:
        raise NotImplementedError("the case split needs a tensor kernel")
    if f is None:
        rng = np.random.default_rng((grid_pair_seed, 0x99))
        vals = rng.standard_normal((4, 4))
        vals /= math.sqrt(float(np.sum(vals ** 2)) * 4.0 ** -2)
        f = StepFunction(2, (0, 0), vals)
    if f.tail != 0.0:
        raise ValueError("the case split needs a compactly supported input")

    g1 = ShiftedGrid.random(1, -13, 6, grid_pair_seed, trial=0)
    g2 = ShiftedGrid.random(1, -13, 6, grid_pair_seed, trial=1)
    (alo, ahi), (blo, bhi) = f.box_fractions()
    q1 = _containing_cube(g1, alo, ahi)
    q2 = _containing_cube(g2, blo, bhi)
    expansion = expand(f, (q1, q2), f.level)
    members1 = _axis_members(expansion, 0)
    members2 = _axis_members(expansion, 1)
    coeff = np.array([[expansion.coefficient(m1, m2) for m2 in members2]
                      for m1 in members1])
    keep1 = np.abs(coeff).sum(axis=1) > 0.0
    keep2 = np.abs(coeff).sum(axis=0) > 0.0
    members1 = [m for m, k in zip(members1, keep1) if k]
    members2 = [m for m, k in zip(members2, keep2) if k]
    coeff = coeff[np.ix_(keep1, keep2)]
    norm_sq = float(np.sum(coeff ** 2))

    lam1 = params.n * params.lambda1
    lam2 = params.m * params.lambda2
    fac1, fac2 = kernel.tensor_parts

    def region_grams(grid, members, fac, lam):
        out = {}
        lo_lev, hi_lev = whitney_levels
        for lev in range(lo_lev, hi_lev + 1):
            shift = grid.shift_fraction(lev)
            scale = Fraction(2) ** lev
            k_lo = math.floor((Fraction(0) - pad - shift) * scale)
            k_hi = math.ceil((Fraction(1) + pad - shift) * scale)
            for k in range(k_lo, k_hi):
                cube = grid.cube(lev, (k,))
                if is_good(cube, grid, params):
                    out[cube] = _whitney_gram(fac, members, cube, lam, spec)
        return out

    grams1 = region_grams(g1, members1, fac1, lam1)
    grams2 = region_grams(g2, members2, fac2, lam2)
    if not grams1 or not grams2:
        raise RuntimeError("no good region interval survived the goodness "
                           "filter; pick another grid seed")

    sides1 = np.array([m.cube.side for m in members1])
    sides2 = np.array([m.cube.side for m in members2])

    def split_masks(sides: np.ndarray, w_side: float):
        lt = sides < w_side
        return {"lt": lt, "ge": ~lt}

    piece_keys = [(\
        a, b) for a in ("lt", "ge") for b in ("lt", "ge")]
    total_full = 0.0
    piece_totals = {k: 0.0 for k in piece_keys}
    identity_ok = True
    tag_totals = {"separated": 0.0, "nested": 0.0, "adjacent": 0.0}
    tag_counts = {"separated": 0, "nested": 0, "adjacent": 0}
    nested_violations = 0
    gamma = params.gamma_n

    def form(c: np.ndarray, m1: np.ndarray, m2: np.ndarray) -> float:
        return float(np.sum((c.T @ m1 @ c) * m2))

    for w1, m1 in grams1.items():
        masks1 = split_masks(sides1, w1.side)
        # classify coefficient intervals against this region interval
        tags = []
        for mem, wide in zip(members1, masks1["ge"]):
            if not wide:
                tags.append(None)
                continue
            (l1, h1), = mem.cube.box()
            (wl, wh), = w1.box()
            gap = max(0.0, wl - h1, l1 - wh)
            tag = _pair_tag(mem.cube.side, w1.side, gap, params.r, gamma)
            tags.append(tag)
            tag_counts[tag] += 1
            if tag == "nested":
                gens = w1.level - mem.cube.level
                if gens < 1 or ancestor(w1, gens) != mem.cube:
                    nested_violations += 1
        for w2, m2 in grams2.items():
            masks2 = split_masks(sides2, w2.side)
            full = form(coeff, m1, m2)
            pieces = {}
            for a, b in piece_keys:
                c = coeff * masks1[a][:, None] * masks2[b][None, :]
                pieces[(a, b)] = form(c, m1, m2)
            total_full += full
            bound = 4.0 * sum(pieces.values())
            if full > bound + 1e-9 * max(1.0, abs(bound)):
                identity_ok = False
            for k in piece_keys:
                piece_totals[k] += pieces[k]
            for tag in ("separated", "nested", "adjacent"):
                sel = np.array([tg == tag for tg in tags])
                if sel.any():
                    c = coeff * sel[:, None] * masks2["lt"][None, :]
                    tag_totals[tag] += form(c, m1, m2)

    n_wide_pairs = int(np.sum([np.sum(sides1 >= w.side) for w in grams1]))
    counts_ok = sum(tag_counts.values()) == n_wide_pairs
    passed = identity_ok and counts_ok and nested_violations == 0

    tag_sum = sum(tag_totals.values())
    shares = {k: (v / tag_sum if tag_sum > 0 else 0.0)
              for k, v in tag_totals.items()}
    records = tuple(
        {"piece": f"{a},{b}", "value": piece_totals[(a, b)],
         "share": piece_totals[(a, b)] / max(sum(piece_totals.values()), 1e-300)}
        for a, b in piece_keys
    )
    summary = {
        "kernel": kernel.label,
        "full_quantity": total_full,
        "pieces": {f"{a},{b}": piece_totals[(a, b)] for a, b in piece_keys},
        "identity_ok": identity_ok,
        "norm_sq": norm_sq,
        "full_over_norm": total_full / norm_sq if norm_sq else 0.0,
        "tag_counts": tag_counts,
        "tag_shares": shares,
        "counts_reconcile": counts_ok,
        "nested_ancestor_violations": nested_violations,
        "good_regions": (len(grams1), len(grams2)),
    }
    notes = (
        f"region intervals span levels {whitney_levels} within {pad} units "
        "of the support; the region sum is truncated there and the "
        "inequality is evaluated pairwise on shared quadrature nodes"
    )
    return ExperimentReport(
        name="cases",
        params=_snapshot(params, kernel=kernel.label,
                         whitney_levels=list(whitney_levels), pad=pad,
                         f_level=f.level),
        seed=grid_pair_seed,
        records=records,
        summary=summary,
        passed=passed,
        wall_time=time.perf_counter() - t0,
        notes=notes,
    )
