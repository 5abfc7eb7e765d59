"""Discriminative localization heatmaps from KL-divergence gradients.

The pipeline: build a Student-t joint over predicted raw class scores and a
perplexity-calibrated Gaussian joint over the ground-truth label, take the
analytic gradient of their KL divergence with respect to the scores,
standardize it, and weight the network's feature maps by the absolute
standardized gradient into a localization heatmap.
"""

from .affinity import (
    AFFINITY_FLOOR,
    AffinityMatrix,
    DEFAULT_PERPLEXITY,
    GroundTruth,
    PerplexityCalibration,
    ScoreVector,
    calibrate_perplexity,
    gaussian_joint,
    pairwise_sq_dists,
    studentt_joint,
)
from .errors import (
    DegenerateGradient,
    KLSaliencyError,
    MalformedContainer,
    ShapeMismatch,
    TargetOutOfRange,
    UnsupportedDType,
    ValueOutOfRange,
)
from .klgrad import AlphaVector, GradientVector, kl_divergence, kl_gradient, standardize
from .npyio import load_npy, npy_read, npy_write, save_npy
from .saliency import (
    FeatureStack,
    RenderedHeatmap,
    SaliencyMap,
    combine_literal,
    combine_matched,
    finalize_map,
    overlay,
    render,
    salient_area_fraction,
)
from .tensor import Tensor, minmax_normalize, resize_bilinear
from .tinycnn import (
    ForwardResult,
    ModelManifest,
    conv2d,
    forward,
    load_manifest,
    maxpool2,
)

__version__ = "0.1.0"

__all__ = [
    "AFFINITY_FLOOR",
    "AffinityMatrix",
    "AlphaVector",
    "DEFAULT_PERPLEXITY",
    "DegenerateGradient",
    "FeatureStack",
    "ForwardResult",
    "GradientVector",
    "GroundTruth",
    "KLSaliencyError",
    "MalformedContainer",
    "ModelManifest",
    "PerplexityCalibration",
    "RenderedHeatmap",
    "SaliencyMap",
    "ScoreVector",
    "ShapeMismatch",
    "Tensor",
    "TargetOutOfRange",
    "UnsupportedDType",
    "ValueOutOfRange",
    "calibrate_perplexity",
    "combine_literal",
    "combine_matched",
    "conv2d",
    "finalize_map",
    "forward",
    "gaussian_joint",
    "kl_divergence",
    "kl_gradient",
    "load_manifest",
    "load_npy",
    "maxpool2",
    "minmax_normalize",
    "npy_read",
    "npy_write",
    "overlay",
    "pairwise_sq_dists",
    "render",
    "resize_bilinear",
    "salient_area_fraction",
    "save_npy",
    "standardize",
    "studentt_joint",
]
