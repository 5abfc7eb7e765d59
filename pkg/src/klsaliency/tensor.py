"""Dense float64 tensor value type plus the shared numeric utilities.

Everything downstream (affinities, gradients, heatmaps, the toy CNN) moves
data around as :class:`Tensor`. Keeping a single immutable, finite-only,
row-major carrier means no other module ever re-checks for NaN or layout.
"""

import numpy as np

from .errors import ShapeMismatch

# Below this spread the input is treated as constant and normalizes to zeros.
RANGE_EPS = 1e-12


class Tensor:
    """Immutable dense n-dimensional array of 64-bit reals.

    Values are stored row-major (C order). Construction rejects NaN and
    infinity, and empty extents, so downstream arithmetic never has to.
    """

    __slots__ = ("_array",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, order="C")
        if arr.size == 0:
            raise ValueError("tensor must be nonempty")
        if not np.isfinite(arr).all():
            raise ValueError("tensor values must all be finite")
        arr.setflags(write=False)
        self._array = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def ndim(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def array(self) -> np.ndarray:
        """Read-only ndarray view of the stored values."""
        return self._array

    @property
    def data(self) -> np.ndarray:
        """Flat row-major read-only view."""
        return self._array.reshape(-1)

    def __eq__(self, other) -> bool:
        # Bitwise identity, not numeric closeness; used by round-trip tests.
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self._array.tobytes() == other._array.tobytes()
        )

    __hash__ = None  # mutable-free but identity-hashing would mislead

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape!r})"


def as_tensor(values) -> Tensor:
    """Coerce array-likes to Tensor, passing Tensor instances through."""
    return values if isinstance(values, Tensor) else Tensor(values)


def minmax_normalize(t: Tensor) -> Tensor:
    """Rescale values to [0, 1] by the min/max spread.

    A (near-)constant input, spread below ``RANGE_EPS``, maps to all zeros:
    a flat map carries no evidence and must render as such.
    """
    arr = as_tensor(t).array
    lo = float(arr.min())
    hi = float(arr.max())
    if hi - lo < RANGE_EPS:
        return Tensor(np.zeros_like(arr))
    return Tensor((arr - lo) / (hi - lo))


def _source_coords(n_out: int, n_in: int) -> np.ndarray:
    # Align-corners mapping; single row/column on either side replicates.
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out, dtype=np.float64)
    return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))


def resize_bilinear(t: Tensor, out_h: int, out_w: int) -> Tensor:
    """Align-corners bilinear resize of a 2-D tensor.

    Output pixel (r, c) samples source coordinate
    (r*(H-1)/(out_h-1), c*(W-1)/(out_w-1)); outputs are convex combinations
    of the four surrounding source values, so global bounds are preserved.
    """
    t = as_tensor(t)
    if t.ndim != 2:
        raise ShapeMismatch(f"resize_bilinear needs a 2-D tensor, got shape {t.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("output extents must be positive")

    src = t.array
    h, w = src.shape
    ry = _source_coords(out_h, h)
    rx = _source_coords(out_w, w)
    y0 = np.floor(ry).astype(np.intp)
    x0 = np.floor(rx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ry - y0
    fx = rx - x0

    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy)[:, None] + bottom * fy[:, None]
    return Tensor(out)
