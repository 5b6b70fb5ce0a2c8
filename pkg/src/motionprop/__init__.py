"""Guided dense-motion propagation at desk scale: flow quantization and
watershed guidance sampling, a from-scratch CNN trained to recover
quantized flow from an image plus sparse velocity hints, and an
interactive annotation service driven by the trained model."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .flow import (
    FlowField,
    FlowImage,
    QuantizedFlow,
    dequantize_flow,
    flow_to_color,
    quantize_flow,
    read_flo,
    resize_flow,
    warp_image,
    write_flo,
)
from .guidance import (
    GuidancePoint,
    GuidanceSet,
    SamplingConfig,
    SparseGuidanceMap,
    WatershedMap,
    grid_points,
    motion_edges,
    nms_keypoints,
    rasterize_guidance,
    sample_guidance,
    watershed_distance_map,
)
from .model import ArchConfig, MotionPropNet, Prediction, normalize_image

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "FlowField",
    "FlowImage",
    "GuidancePoint",
    "GuidanceSet",
    "KERNEL_BACKEND",
    "MotionPropNet",
    "Prediction",
    "QuantizedFlow",
    "SamplingConfig",
    "SparseGuidanceMap",
    "WatershedMap",
    "dequantize_flow",
    "flow_to_color",
    "grid_points",
    "motion_edges",
    "nms_keypoints",
    "normalize_image",
    "quantize_flow",
    "rasterize_guidance",
    "read_flo",
    "resize_flow",
    "sample_guidance",
    "warp_image",
    "watershed_distance_map",
    "write_flo",
]
