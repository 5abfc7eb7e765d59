"""KL cost between class-affinity joints and its analytic score gradient.

The cost is C = sum_{i != j} p_ij ln(p_ij / q_ij) with P the ground-truth
joint and Q the Student-t joint over predictions. Its gradient with respect
to the raw scores,

    z_i = 4 * sum_{j != i} (p_ij - q_ij) (k_i - k_j) (1 + (k_i - k_j)^2)^-1,

is exact for that P/Q split (the factor 4 belongs to the natural-log cost).
Standardizing z to zero mean and unit variance yields the alpha weights that
feed the saliency combination.
"""

from dataclasses import dataclass

import numpy as np

from .affinity import AffinityMatrix, as_score_vector
from .errors import DegenerateGradient, ShapeMismatch

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class GradientVector:
    """Cost gradient z with respect to each raw class score; sums to zero."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("gradient must be 1-D with K >= 2 entries")
        if not np.isfinite(arr).all():
            raise ValueError("gradient entries must be finite")
        if abs(float(arr.sum())) > 1e-9:
            raise ValueError("gradient components must sum to zero")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class AlphaVector:
    """Standardized gradient weights, with the source statistics retained."""

    values: np.ndarray
    mean: float
    std: float

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("alpha must be 1-D with K >= 2 entries")
        if abs(float(arr.mean())) > 1e-9:
            raise ValueError("alpha must have zero mean")
        if abs(float(np.sqrt(np.mean((arr - arr.mean()) ** 2))) - 1.0) > 1e-9:
            raise ValueError("alpha must have unit population variance")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def l1(self) -> float:
        return float(np.abs(self.values).sum())


def _entries(m) -> np.ndarray:
    """Accept AffinityMatrix or raw K x K arrays (shape checked by callers)."""
    if isinstance(m, AffinityMatrix):
        return m.entries
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {arr.shape}")
    return arr


def kl_divergence(p, q) -> float:
    """C = sum over ordered pairs i != j of p_ij ln(p_ij / q_ij).

    Both inputs must be floored (no nonpositive off-diagonal entries);
    the result is nonnegative up to roundoff.
    """
    pm = _entries(p)
    qm = _entries(q)
    if pm.shape != qm.shape:
        raise ShapeMismatch(f"affinity shapes differ: {pm.shape} vs {qm.shape}")
    off = ~np.eye(pm.shape[0], dtype=bool)
    pv = pm[off]
    qv = qm[off]
    if pv.min() <= 0.0 or qv.min() <= 0.0:
        raise ValueError("kl_divergence needs floored inputs (no zero mass)")
    return float(np.sum(pv * np.log(pv / qv)))


def kl_gradient(p, q, s) -> GradientVector:
    """Analytic gradient of the KL cost with respect to the raw scores.

    Assumes q came from ``studentt_joint(s)``; the pairwise terms are
    antisymmetric, so the components sum to zero.
    """
    pm = _entries(p)
    qm = _entries(q)
    k = as_score_vector(s).values
    if pm.shape != qm.shape:
        raise ShapeMismatch(f"affinity shapes differ: {pm.shape} vs {qm.shape}")
    if pm.shape[0] != k.size:
        raise ShapeMismatch(
            f"affinity is {pm.shape[0]}x{pm.shape[0]} but scores have K={k.size}"
        )
    diff = k[:, None] - k[None, :]
    terms = (pm - qm) * diff / (1.0 + diff * diff)
    np.fill_diagonal(terms, 0.0)
    return GradientVector(4.0 * terms.sum(axis=1))


def standardize(z) -> AlphaVector:
    """alpha = (z - mean(z)) / popstd(z).

    Raises DegenerateGradient when the population deviation is below
    ``STD_FLOOR``: a constant gradient carries no per-class signal.
    """
    values = z.values if isinstance(z, GradientVector) else np.asarray(z, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("need a 1-D vector with K >= 2 entries")
    mu = float(values.mean())
    sigma = float(np.sqrt(np.mean((values - mu) ** 2)))
    if sigma < STD_FLOOR:
        raise DegenerateGradient(
            f"gradient deviation {sigma:.3e} is below {STD_FLOOR:g}"
        )
    return AlphaVector(values=(values - mu) / sigma, mean=mu, std=sigma)
