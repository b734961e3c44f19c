"""Plane-parametrized depth estimation and completion toolkit."""
from .errors import (DomainError, EmptyValidSetError, FormatError, InsufficientDataError,
                     ParameterError, PlaneDepthError, SceneSpecError, ShapeError)
from .types import (CameraIntrinsics, DepthMap, DistanceMap, MaskedMap, NormalMap, PointCloud,
                    UncertaintyMap)
from .geometry import (backproject, depth_from_normal_distance, distance_from_depth_normal,
                       normals_from_depth)
from .plane_seg import (EdgeWeightGraph, SegmentLabelMap, felzenszwalb_segment,
                        geometric_dissimilarity, planar_mask, segment_planes)
from .losses import (LossReport, LossWeights, distance_l1_loss, l1l2_depth_loss,
                     normal_cosine_loss, overall_loss, plane_consistency_loss,
                     silog_depth_loss, uncertainty_loss, uncertainty_target)
from .refine import (AffinityField, ConvGruWeights, average_final, complementary_map,
                     convgru_cell, convgru_gates, fuse_by_uncertainty, spn_refine, spn_step)
from .completion import (SparseSamples, SpnConfig, complete_depth, planar_fill, sample_sparse,
                         sparse_nd_from_sparse_depth)
from .metrics import MetricsReport, NormalMetricsReport, depth_metrics, normal_metrics
from .synth import PlanarSceneSpec, generate_planar_scene, random_scene_spec

__version__ = "0.1.0"

__all__ = [
    "AffinityField",
    "CameraIntrinsics",
    "ConvGruWeights",
    "DepthMap",
    "DistanceMap",
    "DomainError",
    "EdgeWeightGraph",
    "EmptyValidSetError",
    "FormatError",
    "InsufficientDataError",
    "LossReport",
    "LossWeights",
    "MaskedMap",
    "MetricsReport",
    "NormalMap",
    "NormalMetricsReport",
    "ParameterError",
    "PlanarSceneSpec",
    "PlaneDepthError",
    "PointCloud",
    "SceneSpecError",
    "SegmentLabelMap",
    "ShapeError",
    "SparseSamples",
    "SpnConfig",
    "UncertaintyMap",
    "average_final",
    "backproject",
    "complementary_map",
    "complete_depth",
    "convgru_cell",
    "convgru_gates",
    "depth_from_normal_distance",
    "depth_metrics",
    "distance_from_depth_normal",
    "distance_l1_loss",
    "felzenszwalb_segment",
    "fuse_by_uncertainty",
    "generate_planar_scene",
    "geometric_dissimilarity",
    "l1l2_depth_loss",
    "normal_cosine_loss",
    "normal_metrics",
    "normals_from_depth",
    "overall_loss",
    "planar_fill",
    "planar_mask",
    "plane_consistency_loss",
    "random_scene_spec",
    "sample_sparse",
    "segment_planes",
    "silog_depth_loss",
    "sparse_nd_from_sparse_depth",
    "spn_refine",
    "spn_step",
    "uncertainty_loss",
    "uncertainty_target",
]
