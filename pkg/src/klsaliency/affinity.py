"""Joint-probability distributions over class-score pairs.

Two K x K joints drive the method: a heavy-tailed Student-t joint over the
predicted raw scores, and a Gaussian joint over the ground-truth encoding
whose per-row bandwidths are calibrated by bisection against a perplexity
target (the effective neighbor count, 2^entropy).

Scores are scalars per class, so the squared pairwise "distance" between
classes i and j is simply (k_i - k_j)^2. Both joints are floored at
``AFFINITY_FLOOR`` so the KL terms downstream never touch log(0).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import TargetOutOfRange
from .tensor import Tensor, as_tensor

log = logging.getLogger(__name__)

AFFINITY_FLOOR = 1e-12
DEFAULT_PERPLEXITY = 30.0
ENTROPY_TOL_BITS = 1e-5
MAX_SEARCH_STEPS = 64

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class ScoreVector:
    """Raw per-class classifier scores (logits), K >= 2, all finite."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("need a 1-D vector of at least two class scores")
        if not np.isfinite(arr).all():
            raise ValueError("class scores must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)


def as_score_vector(s) -> ScoreVector:
    return s if isinstance(s, ScoreVector) else ScoreVector(s)


@dataclass(frozen=True)
class GroundTruth:
    """Class label plus its (optionally smoothed) one-hot encoding."""

    label: int
    encoding: np.ndarray

    def __post_init__(self):
        enc = np.array(self.encoding, dtype=np.float64)
        if enc.ndim != 1 or enc.size < 2:
            raise ValueError("encoding must be 1-D with K >= 2 entries")
        if not np.isfinite(enc).all() or enc.min() < 0.0:
            raise ValueError("encoding entries must be finite and nonnegative")
        if abs(float(enc.sum()) - 1.0) > 1e-9:
            raise ValueError("encoding must sum to one")
        if not 0 <= self.label < enc.size:
            raise ValueError(f"label {self.label} outside [0, {enc.size})")
        enc.setflags(write=False)
        object.__setattr__(self, "encoding", enc)

    @classmethod
    def one_hot(cls, label: int, num_classes: int, smoothing: float = 0.0):
        """Build the encoding: mass ``smoothing`` spread uniformly, rest on label."""
        if num_classes < 2:
            raise ValueError("need at least two classes")
        if not 0 <= label < num_classes:
            raise ValueError(f"label {label} outside [0, {num_classes})")
        if not 0.0 <= smoothing <= 1.0:
            raise ValueError("smoothing must lie in [0, 1]")
        enc = np.full(num_classes, smoothing / num_classes, dtype=np.float64)
        enc[label] += 1.0 - smoothing
        return cls(label=label, encoding=enc)

    @property
    def num_classes(self) -> int:
        return int(self.encoding.size)


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric zero-diagonal joint distribution over ordered class pairs.

    ``clamped_rows`` records conditional rows whose perplexity target was
    unreachable during calibration (empty for Student-t joints).
    """

    entries: np.ndarray
    clamped_rows: tuple[int, ...] = ()

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 2:
            raise ValueError("entries must be K x K with K >= 2")
        if not np.isfinite(arr).all():
            raise ValueError("entries must be finite")
        if float(np.abs(arr - arr.T).max()) > 1e-12:
            raise ValueError("entries must be symmetric")
        if np.any(np.diag(arr) != 0.0):
            raise ValueError("diagonal must be exactly zero")
        off = ~np.eye(arr.shape[0], dtype=bool)
        if float(arr[off].min()) < AFFINITY_FLOOR:
            raise ValueError("off-diagonal entries must respect the probability floor")
        if abs(float(arr[off].sum()) - 1.0) > 1e-9:
            raise ValueError("off-diagonal mass must sum to one")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "clamped_rows", tuple(int(i) for i in self.clamped_rows))

    @property
    def num_classes(self) -> int:
        return int(self.entries.shape[0])


def pairwise_sq_dists(s) -> Tensor:
    """d_ij = (k_i - k_j)^2: symmetric, zero diagonal."""
    k = as_score_vector(s).values
    diff = k[:, None] - k[None, :]
    return Tensor(diff * diff)


def _floor_and_renormalize(p: np.ndarray) -> np.ndarray:
    """Clip off-diagonal mass at the floor, rescale to total 1, re-clip.

    The second clip restores the exact floor after rescaling; it perturbs
    total mass by at most K^2 * AFFINITY_FLOOR, far inside the 1e-9 budget.
    """
    off = ~np.eye(p.shape[0], dtype=bool)
    q = p.copy()
    q[off] = np.maximum(q[off], AFFINITY_FLOOR)
    q /= q[off].sum()
    q[off] = np.maximum(q[off], AFFINITY_FLOOR)
    np.fill_diagonal(q, 0.0)
    return q


def studentt_joint(s) -> AffinityMatrix:
    """Student-t joint over raw scores.

    p_ij = (1 + d_ij)^-1 / sum_{u != v} (1 + d_uv)^-1 over ordered pairs,
    zero diagonal, floored and renormalized.
    """
    d = pairwise_sq_dists(s).array
    w = 1.0 / (1.0 + d)
    np.fill_diagonal(w, 0.0)
    p = w / w.sum()
    return AffinityMatrix(_floor_and_renormalize(p))


@dataclass(frozen=True)
class PerplexityCalibration:
    """Per-row Gaussian precisions beta with achieved entropies and flags.

    ``clamped[i]`` is True when row i could not reach the target entropy
    within tolerance; beta[i] then holds the best bracket endpoint found.
    """

    beta: np.ndarray
    entropy_bits: np.ndarray
    clamped: np.ndarray

    @property
    def clamped_rows(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.clamped))


def _row_entropy_bits(shifted: np.ndarray, beta: float) -> float:
    """Shannon entropy (bits) of exp(-beta*d)/sum over a min-shifted row.

    Uses H = log2(S) + beta * E[d] / ln 2 with S = sum exp(-beta*d).
    Shifting by the row minimum leaves the distribution unchanged but makes
    equidistant rows evaluate to log2(m) exactly and keeps S >= 1.
    """
    w = np.exp(-beta * shifted)
    s = float(w.sum())
    return math.log2(s) + beta * float((shifted * w).sum()) / (s * _LN2)


def _conditional_row(shifted: np.ndarray, beta: float) -> np.ndarray:
    w = np.exp(-beta * shifted)
    return w / w.sum()


def _calibrate_row(
    row: np.ndarray, target_bits: float, tol: float, max_iter: int
) -> tuple[float, float, bool]:
    """Bisect beta for one row; returns (beta, entropy_bits, converged)."""
    shifted = row - row.min()

    beta = 1.0
    h = _row_entropy_bits(shifted, beta)
    best_beta, best_h = beta, h
    if abs(h - target_bits) <= tol:
        return beta, h, True

    # Entropy is non-increasing in beta. Expand a bracket toward the target:
    # H too high -> grow beta, H too low -> shrink it.
    lo = hi = None  # lo: small-beta side (H >= target), hi: the opposite
    if h > target_bits:
        lo = beta
        for _ in range(max_iter):
            beta *= 2.0
            h = _row_entropy_bits(shifted, beta)
            if abs(h - target_bits) < abs(best_h - target_bits):
                best_beta, best_h = beta, h
            if abs(h - target_bits) <= tol:
                return beta, h, True
            if h < target_bits:
                hi = beta
                break
            lo = beta
    else:
        hi = beta
        for _ in range(max_iter):
            beta *= 0.5
            h = _row_entropy_bits(shifted, beta)
            if abs(h - target_bits) < abs(best_h - target_bits):
                best_beta, best_h = beta, h
            if abs(h - target_bits) <= tol:
                return beta, h, True
            if h > target_bits:
                lo = beta
                break
            hi = beta

    if lo is None or hi is None:
        # Bracket never straddled the target: clamp to the best endpoint.
        return best_beta, best_h, False

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        h = _row_entropy_bits(shifted, mid)
        if abs(h - target_bits) < abs(best_h - target_bits):
            best_beta, best_h = mid, h
        if abs(h - target_bits) <= tol:
            return mid, h, True
        if h > target_bits:
            lo = mid
        else:
            hi = mid
    return best_beta, best_h, False


def calibrate_perplexity(
    d,
    target: float,
    tol: float = ENTROPY_TOL_BITS,
    max_iter: int = MAX_SEARCH_STEPS,
) -> PerplexityCalibration:
    """Choose per-row precisions so each conditional row hits the target.

    Row i's conditional is p_{j|i} = exp(-beta_i d_ij) / sum_{k != i}
    exp(-beta_i d_ik); beta_i is found by bracketed bisection so the row's
    Shannon entropy satisfies |H_i - log2(target)| <= tol. Rows whose target
    is unreachable (one-hot distance structures bound the entropy) keep the
    best bracket endpoint and are flagged, never silently wrong.
    """
    dist = as_tensor(d).array
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] < 2:
        raise ValueError("distance matrix must be K x K with K >= 2")
    if dist.min() < 0.0:
        raise ValueError("distances must be nonnegative")
    k = dist.shape[0]
    if not 1.0 <= target <= k - 1:
        raise TargetOutOfRange(f"perplexity target {target} outside [1, {k - 1}]")

    target_bits = math.log2(target)
    beta = np.empty(k)
    entropy = np.empty(k)
    clamped = np.zeros(k, dtype=bool)
    for i in range(k):
        row = np.delete(dist[i], i)
        beta[i], entropy[i], converged = _calibrate_row(row, target_bits, tol, max_iter)
        clamped[i] = not converged
    if clamped.any():
        log.warning(
            "perplexity target %g unreachable for %d of %d rows; clamped",
            target,
            int(clamped.sum()),
            k,
        )
    return PerplexityCalibration(beta=beta, entropy_bits=entropy, clamped=clamped)


def conditional_rows(d, calibration: PerplexityCalibration) -> np.ndarray:
    """K x K matrix of conditionals p_{j|i} for calibrated precisions."""
    dist = as_tensor(d).array
    k = dist.shape[0]
    cond = np.zeros((k, k))
    idx = np.arange(k)
    for i in range(k):
        row = np.delete(dist[i], i)
        cond[i, idx != i] = _conditional_row(row - row.min(), float(calibration.beta[i]))
    return cond


def gaussian_joint(
    g: GroundTruth,
    target: float,
    tol: float = ENTROPY_TOL_BITS,
    max_iter: int = MAX_SEARCH_STEPS,
) -> AffinityMatrix:
    """Perplexity-calibrated Gaussian joint over the ground-truth encoding.

    Symmetrizes the calibrated conditionals as p_ij = (p_{j|i} + p_{i|j})
    / (2K), then floors and renormalizes. Rows whose target was unreachable
    are reported through ``clamped_rows`` on the result.
    """
    d = pairwise_sq_dists(g.encoding)
    calibration = calibrate_perplexity(d, target, tol=tol, max_iter=max_iter)
    cond = conditional_rows(d, calibration)
    joint = (cond + cond.T) / (2.0 * g.num_classes)
    return AffinityMatrix(
        _floor_and_renormalize(joint), clamped_rows=calibration.clamped_rows
    )
