"""Geodesic image morphing in combined color / deep-feature spaces."""

from .energy import AnisotropyParams, ElasticParams
from .features import FeatureMap, assemble_feature, load_tensor, save_tensor
from .grid import GridDims
from .multilevel import MorphResult, build_schedule, solve_deep, solve_rgb
from .optimizer import IpalmParams, PathState, ipalm_level

__all__ = [
    "AnisotropyParams",
    "ElasticParams",
    "FeatureMap",
    "GridDims",
    "IpalmParams",
    "MorphResult",
    "PathState",
    "assemble_feature",
    "build_schedule",
    "ipalm_level",
    "load_tensor",
    "save_tensor",
    "solve_deep",
    "solve_rgb",
]
