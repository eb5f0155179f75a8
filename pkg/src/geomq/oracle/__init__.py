"""Brute-force 3D tube oracle."""

from .discretization import (
    DiskHardWall,
    Harmonic,
    ResourceLimitError,
    SquareHardWall,
    TubeDiscretization,
    TubeOperator,
    assemble_apply,
    cross_section_from_dict,
    cross_section_to_dict,
)
from .eigen import EigenResult, StagnationError, lowest_eigenpairs
from .study import (
    BranchFit,
    OracleResult,
    convergence_study,
    extract_gauge_shift,
    extrapolate_eps2,
    fit_parabola,
    make_cross_section,
    resolve_threads,
)

__all__ = [
    "DiskHardWall",
    "Harmonic",
    "ResourceLimitError",
    "SquareHardWall",
    "TubeDiscretization",
    "TubeOperator",
    "assemble_apply",
    "cross_section_from_dict",
    "cross_section_to_dict",
    "EigenResult",
    "StagnationError",
    "lowest_eigenpairs",
    "BranchFit",
    "OracleResult",
    "convergence_study",
    "extract_gauge_shift",
    "extrapolate_eps2",
    "fit_parabola",
    "make_cross_section",
    "resolve_threads",
]
