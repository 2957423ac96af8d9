"""darktraj - quantum trajectories, dark subspaces and invariant measures of Kraus ensembles."""

from .channel import KrausEnsemble, fixed_point, period, validate_ensemble
from .darkspace import DarkAtlas, EmpiricalDarkMeasure, discover_maximal_dark, estimate_chi_inv, is_dark, s_of_n
from .errors import DarkTrajError
from .family import (
    IsometryFamily,
    UnitaryGroupClosure,
    build_smart_family,
    classify_transitivity,
    group_closure,
    invariance_residual,
    sample_ergodic_measure,
)
from .linalg import DensityMatrix, Ray, Subspace
from .measures import EmpiricalMeasure, wasserstein1
from .trajectory import run_trajectory

__version__ = "0.2.0"

__all__ = [
    "DarkAtlas",
    "DarkTrajError",
    "DensityMatrix",
    "EmpiricalDarkMeasure",
    "EmpiricalMeasure",
    "IsometryFamily",
    "KrausEnsemble",
    "Ray",
    "Subspace",
    "UnitaryGroupClosure",
    "build_smart_family",
    "classify_transitivity",
    "discover_maximal_dark",
    "estimate_chi_inv",
    "fixed_point",
    "group_closure",
    "invariance_residual",
    "is_dark",
    "period",
    "run_trajectory",
    "s_of_n",
    "sample_ergodic_measure",
    "validate_ensemble",
    "wasserstein1",
]
