"""Posterior concentration under model misspecification: projections, tests, covers and rates."""
from .divergence import (
    hellinger,
    hellinger_sq,
    hellinger_transform,
    kl_divergence,
    misspec_margin,
    transform_curve,
    weighted_hellinger_sq,
)
from .entropy import covering_number, local_cover_for_testing, mixture_entropy_curve
from .measures import DensityHandle, MixingDistribution, derive_seed, make_rng, mixture_density, normal, q_of_p
from .projection import project_mixture, project_parametric, project_regression
from .testing import iid_power_bound, lr_test, test_risk

__version__ = "0.1.0"

__all__ = [
    "DensityHandle",
    "MixingDistribution",
    "covering_number",
    "derive_seed",
    "hellinger",
    "hellinger_sq",
    "hellinger_transform",
    "iid_power_bound",
    "kl_divergence",
    "local_cover_for_testing",
    "lr_test",
    "make_rng",
    "misspec_margin",
    "mixture_density",
    "mixture_entropy_curve",
    "normal",
    "project_mixture",
    "project_parametric",
    "project_regression",
    "q_of_p",
    "test_risk",
    "transform_curve",
    "weighted_hellinger_sq",
]
