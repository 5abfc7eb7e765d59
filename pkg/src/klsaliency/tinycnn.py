"""Minimal deterministic inference-only CNN.

Just enough network to exercise the full pipeline without an ML framework:
3x3 valid convolutions at stride 1, ReLU, 2x2 max pooling, and a final
dense layer over the flattened activations. A JSON manifest names the layer
sequence and the NPY weight files; shape consistency is validated once at
load so the forward pass itself stays check-free.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .affinity import ScoreVector
from .errors import MalformedContainer, ShapeMismatch
from .npyio import load_npy
from .saliency import FeatureStack
from .tensor import Tensor


def conv2d(input: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid cross-correlation: (C,H,W) x (F,C,3,3) + bias -> (F,H-2,W-2)."""
    x = input.array
    k = kernels.array
    b = bias.array
    if x.ndim != 3:
        raise ShapeMismatch(f"conv input must be (C, H, W), got {x.shape}")
    if k.ndim != 4 or k.shape[2:] != (3, 3):
        raise ShapeMismatch(f"kernels must be (F, C, 3, 3), got {k.shape}")
    if k.shape[1] != x.shape[0]:
        raise ShapeMismatch(
            f"kernel expects {k.shape[1]} input channels, image has {x.shape[0]}"
        )
    if b.ndim != 1 or b.shape[0] != k.shape[0]:
        raise ShapeMismatch(f"bias must be (F,) = ({k.shape[0]},), got {b.shape}")
    if x.shape[1] < 3 or x.shape[2] < 3:
        raise ShapeMismatch(f"spatial extent {x.shape[1:]} too small for 3x3 kernels")
    windows = sliding_window_view(x, (3, 3), axis=(1, 2))
    out = np.einsum("chwuv,fcuv->fhw", windows, k) + b[:, None, None]
    return Tensor(out)


def relu(input: Tensor) -> Tensor:
    return Tensor(np.maximum(input.array, 0.0))


def maxpool2(input: Tensor) -> Tensor:
    """2x2 window max at stride 2, truncating odd trailing rows/columns."""
    x = input.array
    if x.ndim != 3:
        raise ShapeMismatch(f"pool input must be (C, H, W), got {x.shape}")
    c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeMismatch(f"spatial extent ({h}, {w}) too small for 2x2 pooling")
    h2, w2 = h // 2, w // 2
    trimmed = x[:, : h2 * 2, : w2 * 2]
    return Tensor(trimmed.reshape(c, h2, 2, w2, 2).max(axis=(2, 4)))


def dense(input: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Flatten row-major, then weights @ x + bias."""
    flat = input.data
    w = weights.array
    b = bias.array
    if w.ndim != 2 or w.shape[1] != flat.size:
        raise ShapeMismatch(
            f"dense weights {w.shape} incompatible with flattened input ({flat.size},)"
        )
    if b.ndim != 1 or b.shape[0] != w.shape[0]:
        raise ShapeMismatch(f"dense bias must be ({w.shape[0]},), got {b.shape}")
    return Tensor(w @ flat + b)


@dataclass(frozen=True)
class ConvSpec:
    weights: Tensor
    bias: Tensor

    kind = "conv"


@dataclass(frozen=True)
class ReluSpec:
    kind = "relu"


@dataclass(frozen=True)
class MaxPoolSpec:
    kind = "maxpool"


@dataclass(frozen=True)
class DenseSpec:
    weights: Tensor
    bias: Tensor

    kind = "dense"


LayerSpec = ConvSpec | ReluSpec | MaxPoolSpec | DenseSpec


@dataclass(frozen=True)
class ModelManifest:
    """Validated layer chain with loaded weights.

    ``feature_layer`` indexes the layer whose (post-activation) output is
    captured as the FeatureStack; it must produce a 3-D activation.
    """

    input_shape: tuple[int, int, int]
    num_classes: int
    feature_layer: int
    layers: tuple[LayerSpec, ...]
    feature_shape: tuple[int, int, int]


@dataclass(frozen=True)
class ForwardResult:
    features: FeatureStack
    logits: ScoreVector


def _trace_shapes(
    input_shape: tuple[int, int, int], layers: tuple[LayerSpec, ...]
) -> list[tuple[int, ...]]:
    """Compute each layer's output shape, raising ShapeMismatch on breaks."""
    shape: tuple[int, ...] = input_shape
    trace = []
    for idx, layer in enumerate(layers):
        if isinstance(layer, ConvSpec):
            if len(shape) != 3:
                raise ShapeMismatch(f"layer {idx}: conv needs a 3-D input, has {shape}")
            f, c, _, _ = layer.weights.shape
            if c != shape[0]:
                raise ShapeMismatch(
                    f"layer {idx}: conv expects {c} channels, chain carries {shape[0]}"
                )
            if shape[1] < 3 or shape[2] < 3:
                raise ShapeMismatch(f"layer {idx}: input {shape} too small for 3x3 conv")
            shape = (f, shape[1] - 2, shape[2] - 2)
        elif isinstance(layer, ReluSpec):
            pass
        elif isinstance(layer, MaxPoolSpec):
            if len(shape) != 3 or shape[1] < 2 or shape[2] < 2:
                raise ShapeMismatch(f"layer {idx}: cannot 2x2-pool shape {shape}")
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        elif isinstance(layer, DenseSpec):
            n_in = 1
            for extent in shape:
                n_in *= extent
            if layer.weights.shape[1] != n_in:
                raise ShapeMismatch(
                    f"layer {idx}: dense weights {layer.weights.shape} "
                    f"incompatible with flattened input ({n_in},)"
                )
            shape = (layer.weights.shape[0],)
        trace.append(shape)
    return trace


def load_manifest(path) -> ModelManifest:
    """Parse a manifest JSON, load its weight tensors, validate the chain."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedContainer(f"cannot parse manifest {path}: {exc}") from exc
    try:
        input_shape = tuple(int(n) for n in doc["input_shape"])
        num_classes = int(doc["classes"])
        feature_layer = int(doc["feature_layer"])
        layer_docs = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedContainer(f"manifest {path} missing or bad field: {exc}") from exc
    if len(input_shape) != 3 or any(n < 1 for n in input_shape):
        raise MalformedContainer(f"input_shape must be 3 positive extents, got {input_shape}")
    if num_classes < 2:
        raise MalformedContainer("classes must be >= 2")

    base = path.parent

    def _weight(name) -> Tensor:
        if not isinstance(name, str):
            raise MalformedContainer(f"weight reference must be a filename, got {name!r}")
        file = base / name
        if not file.is_file():
            raise MalformedContainer(f"weight file {file} does not exist")
        return load_npy(file)

    layers: list[LayerSpec] = []
    for i, entry in enumerate(layer_docs):
        kind = entry.get("type") if isinstance(entry, dict) else None
        if kind == "conv":
            layers.append(ConvSpec(_weight(entry["weights"]), _weight(entry["bias"])))
        elif kind == "relu":
            layers.append(ReluSpec())
        elif kind == "maxpool":
            layers.append(MaxPoolSpec())
        elif kind == "dense":
            layers.append(DenseSpec(_weight(entry["weights"]), _weight(entry["bias"])))
        else:
            raise MalformedContainer(f"layer {i}: unknown type {kind!r}")

    trace = _trace_shapes(input_shape, tuple(layers))
    if trace[-1] != (num_classes,):
        raise ShapeMismatch(
            f"final layer produces {trace[-1]}, manifest declares {num_classes} classes"
        )
    if not 0 <= feature_layer < len(layers):
        raise MalformedContainer(f"feature_layer {feature_layer} out of range")
    feature_shape = trace[feature_layer]
    if len(feature_shape) != 3:
        raise ShapeMismatch(
            f"feature_layer {feature_layer} yields shape {feature_shape}, need 3-D maps"
        )
    return ModelManifest(
        input_shape=input_shape,
        num_classes=num_classes,
        feature_layer=feature_layer,
        layers=tuple(layers),
        feature_shape=feature_shape,
    )


def forward(m: ModelManifest, image: Tensor) -> ForwardResult:
    """Single deterministic forward pass capturing features and raw logits."""
    if image.shape != m.input_shape:
        raise ShapeMismatch(
            f"image shape {image.shape} does not match manifest input {m.input_shape}"
        )
    x = image
    features = None
    for idx, layer in enumerate(m.layers):
        if isinstance(layer, ConvSpec):
            x = conv2d(x, layer.weights, layer.bias)
        elif isinstance(layer, ReluSpec):
            x = relu(x)
        elif isinstance(layer, MaxPoolSpec):
            x = maxpool2(x)
        else:
            x = dense(x, layer.weights, layer.bias)
        if idx == m.feature_layer:
            features = FeatureStack(x.array)
    assert features is not None  # load_manifest guarantees the index
    return ForwardResult(features=features, logits=ScoreVector(x.array))
