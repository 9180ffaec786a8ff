"""Maximum consensus LiDAR localization.

Registers a sparse scan against a dense reference map by exhaustive search
over a planar pose grid, scoring each pose either by the number of
l-infinity matches or by the Helmert point-error score of the matched
map normals.
"""
from ._backend import BACKENDS, DEFAULT_BACKEND
from .core import (
    GridIndex,
    MapCloud,
    MatchMode,
    Point3,
    Pose2,
    ScanCloud,
    SearchSpec,
    UnitNormal3,
    cell_of,
    se2_apply,
)
from .objectives import (
    Accumulator,
    NormalEquations2,
    Objective,
    helmert_score,
    helmert_score_reference,
    match_weight,
)
from .search import (
    EmptyConsensusError,
    LocalizationResult,
    brute_force_oracle,
    maximum_consensus,
)

__version__ = "0.1.0"

__all__ = [
    "BACKENDS",
    "DEFAULT_BACKEND",
    "Accumulator",
    "EmptyConsensusError",
    "GridIndex",
    "LocalizationResult",
    "MapCloud",
    "MatchMode",
    "NormalEquations2",
    "Objective",
    "Point3",
    "Pose2",
    "ScanCloud",
    "SearchSpec",
    "UnitNormal3",
    "brute_force_oracle",
    "cell_of",
    "helmert_score",
    "helmert_score_reference",
    "match_weight",
    "maximum_consensus",
    "se2_apply",
]
