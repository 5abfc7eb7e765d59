"""Weighting feature maps into a localization heatmap, plus rendering.

Two combination modes ship side by side:

* ``literal`` - the plain double loop: every map is scaled by the sum of
  all |alpha| weights, so the normalized map factorizes to the plain map sum
  and is identical for any label. That consequence is asserted in tests, not
  hidden.
* ``matched`` - per-index weighting |alpha_i| * x_i, defined only when the
  map count equals the class count; this is the reading under which the map
  actually discriminates between labels.

Weight arguments accept either an :class:`~klsaliency.klgrad.AlphaVector`
or any finite 1-D vector (selector-style weights are valid inputs here even
though they are not standardized).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, ValueOutOfRange
from .klgrad import AlphaVector
from .tensor import RANGE_EPS, Tensor, as_tensor, minmax_normalize, resize_bilinear

MODE_LITERAL = "literal"
MODE_MATCHED = "matched"
COLORMAPS = ("gray", "jet")


@dataclass(frozen=True)
class FeatureStack:
    """M >= 1 feature maps sharing one H x W grid."""

    maps: np.ndarray

    def __post_init__(self):
        arr = np.array(self.maps, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ValueError("maps must be a 3-D stack (M, H, W) with M >= 1")
        if not np.isfinite(arr).all():
            raise ValueError("feature maps must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "maps", arr)

    @property
    def count(self) -> int:
        return int(self.maps.shape[0])

    @property
    def grid(self) -> tuple[int, int]:
        return int(self.maps.shape[1]), int(self.maps.shape[2])


def as_feature_stack(f) -> FeatureStack:
    return f if isinstance(f, FeatureStack) else FeatureStack(f)


@dataclass(frozen=True)
class SaliencyMap:
    """Raw localization map plus its min-max-normalized form."""

    raw: np.ndarray
    normalized: np.ndarray
    mode: str

    @classmethod
    def from_raw(cls, raw: np.ndarray, mode: str) -> "SaliencyMap":
        raw = np.asarray(raw, dtype=np.float64)
        normalized = minmax_normalize(Tensor(raw)).array
        return cls(raw=raw, normalized=normalized, mode=mode)

    @property
    def is_constant(self) -> bool:
        """True when the raw map had no spread (normalized to all zeros)."""
        return float(self.raw.max() - self.raw.min()) < RANGE_EPS


@dataclass(frozen=True)
class RenderedHeatmap:
    """8-bit RGB pixels with the colormap id and optional blend factor."""

    pixels: np.ndarray
    colormap: str
    blend: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise ValueError("pixels must be uint8 with shape (H, W, 3)")
        object.__setattr__(self, "pixels", arr)


def _weight_values(a) -> np.ndarray:
    if isinstance(a, AlphaVector):
        return a.values
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("weights must be a nonempty 1-D vector")
    if not np.isfinite(arr).all():
        raise ValueError("weights must be finite")
    return arr


def combine_literal(f, a) -> SaliencyMap:
    """Double-loop combination: raw = sum_i sum_j x_i * |alpha_j|.

    No shape coupling between maps and weights; the loops run in fixed
    order (map index ascending, weight index ascending).
    """
    maps = as_feature_stack(f).maps
    weights = np.abs(_weight_values(a))
    raw = np.zeros(maps.shape[1:])
    for x in maps:
        temp = np.zeros_like(raw)
        for w in weights:
            temp += x * w
        raw += temp
    return SaliencyMap.from_raw(raw, MODE_LITERAL)


def combine_matched(f, a) -> SaliencyMap:
    """Per-index combination: raw = sum_i |alpha_i| * x_i; needs M == K."""
    maps = as_feature_stack(f).maps
    weights = np.abs(_weight_values(a))
    if maps.shape[0] != weights.size:
        raise ShapeMismatch(
            f"matched mode needs one weight per map: M={maps.shape[0]}, K={weights.size}"
        )
    raw = np.zeros(maps.shape[1:])
    for w, x in zip(weights, maps):
        raw += w * x
    return SaliencyMap.from_raw(raw, MODE_MATCHED)


def combine(f, a, mode: str) -> SaliencyMap:
    if mode == MODE_LITERAL:
        return combine_literal(f, a)
    if mode == MODE_MATCHED:
        return combine_matched(f, a)
    raise ValueError(f"unknown combination mode {mode!r}")


def finalize_map(m: SaliencyMap, out_h: int, out_w: int) -> Tensor:
    """Min-max normalize, then bilinear-resize to the output grid."""
    return resize_bilinear(Tensor(m.normalized), out_h, out_w)


def _quantize(x: np.ndarray) -> np.ndarray:
    # Round half up: bit-exact golden images need one fixed rule.
    return np.floor(255.0 * x + 0.5).astype(np.uint8)


def render(h, colormap: str = "jet") -> RenderedHeatmap:
    """Map a [0, 1] heat tensor to 8-bit RGB via gray or jet."""
    t = as_tensor(h).array
    if t.ndim != 2:
        raise ShapeMismatch(f"render needs a 2-D tensor, got shape {t.shape}")
    if float(t.min()) < 0.0 or float(t.max()) > 1.0:
        raise ValueOutOfRange("heat values must lie in [0, 1]")
    if colormap == "gray":
        byte = _quantize(t)
        pixels = np.stack([byte, byte, byte], axis=-1)
    elif colormap == "jet":
        r = np.clip(np.minimum(4.0 * t - 1.5, -4.0 * t + 4.5), 0.0, 1.0)
        g = np.clip(np.minimum(4.0 * t - 0.5, -4.0 * t + 3.5), 0.0, 1.0)
        b = np.clip(np.minimum(4.0 * t + 0.5, -4.0 * t + 2.5), 0.0, 1.0)
        pixels = np.stack([_quantize(r), _quantize(g), _quantize(b)], axis=-1)
    else:
        raise ValueError(f"unknown colormap {colormap!r}")
    return RenderedHeatmap(pixels=pixels, colormap=colormap)


def overlay(img, heat: RenderedHeatmap, blend: float) -> RenderedHeatmap:
    """Blend a base image with a rendered heatmap of the same size."""
    if not 0.0 <= blend <= 1.0:
        raise ValueOutOfRange("blend must lie in [0, 1]")
    base = np.asarray(img)
    if base.shape != heat.pixels.shape:
        raise ShapeMismatch(
            f"image shape {base.shape} does not match heatmap {heat.pixels.shape}"
        )
    mixed = (1.0 - blend) * base.astype(np.float64) + blend * heat.pixels.astype(
        np.float64
    )
    return RenderedHeatmap(
        pixels=np.floor(mixed + 0.5).astype(np.uint8),
        colormap=heat.colormap,
        blend=blend,
    )


def salient_area_fraction(h, tau: float = 0.5) -> float:
    """Fraction of heat entries at or above the threshold tau."""
    t = as_tensor(h).array
    return float(np.count_nonzero(t >= tau)) / float(t.size)
