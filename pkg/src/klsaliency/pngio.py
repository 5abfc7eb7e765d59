"""PNG image I/O: 8-bit RGB out, RGB or grayscale in."""

import io

import numpy as np
from PIL import Image

from .errors import MalformedContainer
from .tensor import Tensor


def png_bytes(pixels: np.ndarray) -> bytes:
    """Encode uint8 (H, W, 3) pixels as PNG bytes."""
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def read_png_rgb(path) -> np.ndarray:
    """Load a PNG as uint8 (H, W, 3), converting grayscale to RGB."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise MalformedContainer(f"cannot read image {path}: {exc}") from exc


def read_png_chw(path, channels: int) -> Tensor:
    """Load a PNG as a (C, H, W) tensor scaled to [0, 1].

    channels=1 converts to grayscale; channels=3 keeps RGB.
    """
    if channels not in (1, 3):
        raise ValueError("channels must be 1 or 3")
    try:
        with Image.open(path) as img:
            converted = img.convert("L" if channels == 1 else "RGB")
            arr = np.asarray(converted, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise MalformedContainer(f"cannot read image {path}: {exc}") from exc
    if channels == 1:
        arr = arr[None, :, :]
    else:
        arr = np.moveaxis(arr, -1, 0)
    return Tensor(arr)
