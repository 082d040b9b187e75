"""Variational calculus in Wasserstein space over finitely supported measures."""

from .constraints import FullSpace, SecondMomentBall, Sublevel, WassersteinBall, activity, normal_element
from .errors import WasserCalcError
from .functionals import (
    Composition,
    ExpectedValue,
    GaussianMixtureNLL,
    Interaction,
    LinearCombination,
    MeanVariance,
    OTDiscrepancy,
    Variance,
    W2Squared,
    evaluate,
    fd_directional,
    subgradient_element,
)
from .measures import (
    DiscreteMeasure,
    canonicalize,
    dirac,
    expected_value,
    measure,
    pushforward,
    second_moment,
    variance,
)
from .optimality import StationarityReport, fermat_residual, kkt_residual
from .tangent import (
    Variation,
    apply,
    coupled_sum,
    from_plan,
    is_tangent,
    local_distance,
    local_inner,
    local_norm,
    local_zero,
    min_sum_norm,
    scale,
)
from .transport import TransportPlan, brute_force_ot, solve_ot, verify_optimality, w2

__version__ = "0.1.0"

__all__ = [
    "Composition",
    "DiscreteMeasure",
    "ExpectedValue",
    "FullSpace",
    "GaussianMixtureNLL",
    "Interaction",
    "LinearCombination",
    "MeanVariance",
    "OTDiscrepancy",
    "SecondMomentBall",
    "StationarityReport",
    "Sublevel",
    "TransportPlan",
    "Variance",
    "Variation",
    "W2Squared",
    "WasserCalcError",
    "WassersteinBall",
    "activity",
    "apply",
    "brute_force_ot",
    "canonicalize",
    "coupled_sum",
    "dirac",
    "evaluate",
    "expected_value",
    "fd_directional",
    "fermat_residual",
    "from_plan",
    "is_tangent",
    "kkt_residual",
    "local_distance",
    "local_inner",
    "local_norm",
    "local_zero",
    "measure",
    "min_sum_norm",
    "normal_element",
    "pushforward",
    "scale",
    "second_moment",
    "solve_ot",
    "subgradient_element",
    "variance",
    "verify_optimality",
    "w2",
    "__version__",
]
