"""Run a pretrained torchvision classifier and dump an activation bundle.

The bundle is the on-disk seam the saliency CLI consumes: ``features.npy``
(M, H, W float32, the chosen layer's post-forward output), ``logits.npy``
(K float32, pre-softmax), and ``meta.json`` recording network, layer, and
preprocessing for provenance. NPY files are written v1.0 via np.save.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision.models import (
    AlexNet_Weights,
    VGG16_Weights,
    alexnet,
    vgg16,
)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
RESIZE_SHORTER = 256
CROP = 224


class ExporterError(Exception):
    pass


class UnsupportedNetwork(ExporterError):
    """Requested network is not in the supported set."""


class LayerNotFound(ExporterError):
    """Named layer does not exist in the chosen network."""


# Default layers are the last conv-stage activations that the saliency
# method expects: vgg16's final conv ReLU (512x14x14) and alexnet's
# feature-extractor output (256x6x6).
_NETWORKS = {
    "vgg16": (vgg16, VGG16_Weights.IMAGENET1K_V1, "features.29"),
    "alexnet": (alexnet, AlexNet_Weights.IMAGENET1K_V1, "features.12"),
}


@dataclass(frozen=True)
class ExportConfig:
    network: str
    image: Path
    out_dir: Path
    layer: str | None = None  # None -> network default
    pretrained: bool = True


@dataclass(frozen=True)
class ExportedBundle:
    features_path: Path
    logits_path: Path
    meta_path: Path
    features_shape: tuple[int, ...]
    logits_shape: tuple[int, ...]


def default_layer(network: str) -> str:
    if network not in _NETWORKS:
        raise UnsupportedNetwork(
            f"network {network!r} not supported (choose from {sorted(_NETWORKS)})"
        )
    return _NETWORKS[network][2]


def build_model(network: str, pretrained: bool = True) -> torch.nn.Module:
    if network not in _NETWORKS:
        raise UnsupportedNetwork(
            f"network {network!r} not supported (choose from {sorted(_NETWORKS)})"
        )
    builder, weights, _ = _NETWORKS[network]
    # Download/IO failures from the weight fetch propagate verbatim.
    model = builder(weights=weights if pretrained else None)
    model.eval()
    return model


def preprocess(image_path) -> torch.Tensor:
    """Resize shorter side to 256, center-crop 224, scale, normalize."""
    with Image.open(image_path) as img:
        rgb = img.convert("RGB")
        w, h = rgb.size
        scale = RESIZE_SHORTER / min(w, h)
        resized = rgb.resize(
            (max(1, round(w * scale)), max(1, round(h * scale))), Image.BILINEAR
        )
        rw, rh = resized.size
        left = (rw - CROP) // 2
        top = (rh - CROP) // 2
        cropped = resized.crop((left, top, left + CROP, top + CROP))
    arr = np.asarray(cropped, dtype=np.float32) / 255.0
    arr = (arr - np.array(IMAGENET_MEAN, dtype=np.float32)) / np.array(
        IMAGENET_STD, dtype=np.float32
    )
    chw = np.moveaxis(arr, -1, 0)
    return torch.from_numpy(np.ascontiguousarray(chw)).unsqueeze(0)


def export(cfg: ExportConfig) -> ExportedBundle:
    """Forward one image through the network, capture the layer, write files."""
    layer_name = cfg.layer or default_layer(cfg.network)
    model = build_model(cfg.network, pretrained=cfg.pretrained)

    modules = dict(model.named_modules())
    if layer_name not in modules or layer_name == "":
        raise LayerNotFound(
            f"layer {layer_name!r} not found in {cfg.network}; "
            f"try one of {[n for n in modules if n][:8]}..."
        )

    captured: dict[str, torch.Tensor] = {}

    def _hook(_module, _inputs, output):
        captured["features"] = output.detach()

    handle = modules[layer_name].register_forward_hook(_hook)
    try:
        batch = preprocess(cfg.image)
        with torch.no_grad():
            logits = model(batch)
    finally:
        handle.remove()

    features = captured["features"].squeeze(0)
    if features.ndim != 3:
        raise LayerNotFound(
            f"layer {layer_name!r} output has shape {tuple(features.shape)}; "
            "need a spatial (C, H, W) activation"
        )
    logits = logits.squeeze(0)

    features_np = features.cpu().numpy().astype(np.float32)
    logits_np = logits.cpu().numpy().astype(np.float32)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    features_path = out / "features.npy"
    logits_path = out / "logits.npy"
    meta_path = out / "meta.json"
    np.save(features_path, features_np)
    np.save(logits_path, logits_np)
    meta = {
        "network": cfg.network,
        "layer": layer_name,
        "pretrained": cfg.pretrained,
        "image": Path(cfg.image).name,
        "input_size": [3, CROP, CROP],
        "features_shape": list(features_np.shape),
        "logits_shape": list(logits_np.shape),
        "dtype": "float32",
        "logits_stage": "pre-softmax",
        "preprocessing": {
            "resize_shorter": RESIZE_SHORTER,
            "center_crop": CROP,
            "scale": "1/255",
            "mean": list(IMAGENET_MEAN),
            "std": list(IMAGENET_STD),
        },
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return ExportedBundle(
        features_path=features_path,
        logits_path=logits_path,
        meta_path=meta_path,
        features_shape=tuple(features_np.shape),
        logits_shape=tuple(logits_np.shape),
    )
