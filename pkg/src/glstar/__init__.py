"""Numerical toolkit for bi-parameter square-function estimates.

Random shifted dyadic grids, Haar systems with exact rational arithmetic,
kernel-assumption checkers, Whitney-region quadrature for the weighted square
function, Carleson packing tests, and the experiment drivers tying them
together.
"""

from .core import (
    Params,
    QuadratureSpec,
    StepFunction,
    default_params,
    integrate_box,
    integrate_halfspace,
    read_step,
    truncation_radius,
    write_step,
)
from .dyadic import (
    CarlesonBox,
    DyadicCube,
    ShiftedGrid,
    WhitneyRegion,
    estimate_pi_good,
    is_good,
    pi_good_exact,
    strong_maximal_dyadic,
    trial_stream,
)
from .carleson import (
    CarlesonReport,
    DyadicOpenSet,
    c_ij,
    carleson_check,
    carleson_sum,
    random_open_set,
    shadow_sets,
)
from .gstar import (
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
from .haar import HaarExpansion, HaarIndex, expand, haar_function, reconstruct
from .kernels import (
    AssumptionReport,
    ConvolutionFactor,
    Kernel,
    check_carleson_combo,
    check_holder,
    check_mixed,
    check_size,
    make_broken,
    make_cancellative,
    make_size_only,
    rescale,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "CarlesonBox",
    "CarlesonReport",
    "ConvolutionFactor",
    "DyadicOpenSet",
    "DyadicCube",
    "GStarValue",
    "HaarExpansion",
    "HaarIndex",
    "Kernel",
    "Params",
    "QuadratureSpec",
    "ShiftedGrid",
    "StepFunction",
    "WhitneyRegion",
    "check_carleson_combo",
    "check_holder",
    "check_mixed",
    "check_size",
    "apply_theta",
    "c_ij",
    "carleson_check",
    "carleson_sum",
    "default_params",
    "estimate_pi_good",
    "expand",
    "gstar_pointwise",
    "gstar_sq_norm",
    "haar_function",
    "integrate_box",
    "integrate_halfspace",
    "is_good",
    "k_quantity",
    "make_broken",
    "make_cancellative",
    "make_size_only",
    "p_quantity",
    "pi_good_exact",
    "q_quantity",
    "r_quantity",
    "random_open_set",
    "read_step",
    "reconstruct",
    "rescale",
    "shadow_sets",
    "strong_maximal_dyadic",
    "trial_stream",
    "weight_total",
    "write_step",
    "__version__",
]
