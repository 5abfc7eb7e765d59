"""Command-line pipeline: activations in, heatmaps and metrics out.

Three commands cover the workflow: ``explain`` consumes a pre-exported
activation bundle (feature maps + logits as NPY, optional base image),
``forward-explain`` runs the bundled toy CNN first, and ``compare`` runs
``explain`` on two bundles and reports both salient-area fractions.

Every failure maps to exit code 2 (input/shape problems) or 3 (degenerate
gradient) with a message naming the pipeline stage; outputs are written
atomically; identical inputs and flags produce byte-identical outputs.
"""

import json
import logging
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from .affinity import (
    DEFAULT_PERPLEXITY,
    GroundTruth,
    ScoreVector,
    gaussian_joint,
    studentt_joint,
)
from .errors import DegenerateGradient, KLSaliencyError, ShapeMismatch
from .klgrad import kl_divergence, kl_gradient, standardize
from .npyio import load_npy, npy_write
from .pngio import png_bytes, read_png_chw, read_png_rgb
from .saliency import (
    COLORMAPS,
    FeatureStack,
    MODE_LITERAL,
    MODE_MATCHED,
    combine,
    finalize_map,
    overlay,
    render,
    salient_area_fraction,
)
from .tinycnn import forward, load_manifest

log = logging.getLogger(__name__)

HEATMAP_NAME = "heatmap.png"
OVERLAY_NAME = "overlay.png"
METRICS_NAME = "metrics.json"
COMPARISON_NAME = "comparison.json"


@dataclass(frozen=True)
class ActivationBundle:
    """On-disk seam between any network and the method."""

    features_path: Path
    logits_path: Path
    image_path: Path | None = None
    metadata: dict | None = None


@dataclass(frozen=True)
class ExplainOptions:
    mode: str = MODE_LITERAL
    perplexity: float = DEFAULT_PERPLEXITY
    tau: float = 0.5
    colormap: str = "jet"
    blend: float = 0.5


@dataclass(frozen=True)
class MetricsReport:
    kl_value: float
    alpha_l1: float
    mode: str
    perplexity: float
    clamped_rows: int
    tau: float
    salient_area_fraction: float
    degenerate_gradient: bool
    constant_map: bool

    def __post_init__(self):
        for name in ("kl_value", "alpha_l1", "perplexity", "tau", "salient_area_fraction"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"metrics field {name} must be finite")
        if not 0.0 <= self.salient_area_fraction <= 1.0:
            raise ValueError("salient_area_fraction must lie in [0, 1]")

    def to_json(self) -> str:
        # Fixed key order keeps the report byte-reproducible.
        doc = {
            "kl_value": self.kl_value,
            "alpha_l1": self.alpha_l1,
            "mode": self.mode,
            "perplexity": self.perplexity,
            "clamped_rows": self.clamped_rows,
            "tau": self.tau,
            "salient_area_fraction": self.salient_area_fraction,
            "degenerate_gradient": self.degenerate_gradient,
            "constant_map": self.constant_map,
        }
        return json.dumps(doc, indent=2) + "\n"


class StageFailure(KLSaliencyError):
    """A pipeline stage failed; carries the stage name and original error."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage}: {cause}")


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageFailure:
        raise
    except Exception as exc:
        raise StageFailure(name, exc) from exc


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _clamp_perplexity(perplexity: float, num_classes: int) -> float:
    lo, hi = 1.0, float(num_classes - 1)
    clamped = min(max(perplexity, lo), hi)
    if clamped != perplexity:
        log.warning(
            "perplexity %g clamped to %g for K=%d", perplexity, clamped, num_classes
        )
    return clamped


def _load_bundle(bundle: ActivationBundle):
    features_t = load_npy(bundle.features_path)
    if features_t.ndim != 3:
        raise ShapeMismatch(
            f"features must be 3-D (M, H, W), got shape {features_t.shape}"
        )
    logits_t = load_npy(bundle.logits_path)
    if logits_t.ndim != 1:
        raise ShapeMismatch(f"logits must be 1-D (K,), got shape {logits_t.shape}")
    image = read_png_rgb(bundle.image_path) if bundle.image_path else None
    return FeatureStack(features_t.array), ScoreVector(logits_t.array), image


def _explain_core(
    features: FeatureStack,
    logits: ScoreVector,
    label: int,
    opts: ExplainOptions,
    out_dir: Path,
    image: np.ndarray | None,
) -> MetricsReport:
    """Shared pipeline behind explain and forward-explain.

    On a degenerate gradient the metrics report (with the flag set) is still
    written before the failure propagates, so comparisons never lose a side.
    """
    with _stage("write-outputs"):
        out_dir.mkdir(parents=True, exist_ok=True)

    k = len(logits)
    if not 0 <= label < k:
        raise StageFailure(
            "load-inputs", ValueError(f"label {label} outside [0, {k})")
        )

    with _stage("affinity"):
        perplexity = _clamp_perplexity(opts.perplexity, k)
        q = studentt_joint(logits)
        p = gaussian_joint(GroundTruth.one_hot(label, k), perplexity)

    with _stage("gradient"):
        kl_value = kl_divergence(p, q)
        z = kl_gradient(p, q, logits)

    try:
        alpha = standardize(z)
    except DegenerateGradient as exc:
        report = MetricsReport(
            kl_value=kl_value,
            alpha_l1=0.0,
            mode=opts.mode,
            perplexity=perplexity,
            clamped_rows=len(p.clamped_rows),
            tau=opts.tau,
            salient_area_fraction=0.0,
            degenerate_gradient=True,
            constant_map=True,
        )
        _atomic_write(out_dir / METRICS_NAME, report.to_json().encode())
        raise StageFailure("standardize", exc) from exc

    with _stage("combine"):
        saliency = combine(features, alpha, opts.mode)

    with _stage("finalize"):
        if image is not None:
            out_h, out_w = image.shape[0], image.shape[1]
        else:
            out_h, out_w = saliency.normalized.shape
        heat = finalize_map(saliency, out_h, out_w)
        fraction = salient_area_fraction(heat, opts.tau)

    with _stage("render"):
        rendered = render(heat, opts.colormap)
        blended = overlay(image, rendered, opts.blend) if image is not None else None

    report = MetricsReport(
        kl_value=kl_value,
        alpha_l1=alpha.l1,
        mode=opts.mode,
        perplexity=perplexity,
        clamped_rows=len(p.clamped_rows),
        tau=opts.tau,
        salient_area_fraction=fraction,
        degenerate_gradient=False,
        constant_map=saliency.is_constant,
    )

    with _stage("write-outputs"):
        _atomic_write(out_dir / HEATMAP_NAME, png_bytes(rendered.pixels))
        if blended is not None:
            _atomic_write(out_dir / OVERLAY_NAME, png_bytes(blended.pixels))
        _atomic_write(out_dir / METRICS_NAME, report.to_json().encode())
    return report


def explain(
    bundle: ActivationBundle, label: int, opts: ExplainOptions, out_dir
) -> MetricsReport:
    """Full pipeline on a pre-exported bundle; writes heatmap + metrics."""
    with _stage("load-inputs"):
        features, logits, image = _load_bundle(bundle)
    return _explain_core(features, logits, label, opts, Path(out_dir), image)


def forward_explain(
    manifest_path, image_path, label: int, opts: ExplainOptions, out_dir
) -> MetricsReport:
    """Run the toy CNN on an image, then explain the resulting activations."""
    with _stage("model-load"):
        manifest = load_manifest(manifest_path)
    with _stage("load-inputs"):
        image_t = read_png_chw(image_path, channels=manifest.input_shape[0])
        if image_t.shape != manifest.input_shape:
            raise ShapeMismatch(
                f"image shape {image_t.shape} does not match manifest input "
                f"{manifest.input_shape}"
            )
        image_rgb = read_png_rgb(image_path)
    with _stage("forward"):
        result = forward(manifest, image_t)
    return _explain_core(
        result.features, result.logits, label, opts, Path(out_dir), image_rgb
    )


@dataclass(frozen=True)
class ComparisonResult:
    report_a: MetricsReport
    report_b: MetricsReport
    ratio: float | None


def compare(
    bundle_a: ActivationBundle,
    bundle_b: ActivationBundle,
    label: int,
    opts: ExplainOptions,
    out_dir,
) -> ComparisonResult:
    """Explain both bundles and quantify which attends to a smaller area.

    The comparison JSON carries both salient-area fractions and their ratio;
    it passes no judgment beyond the numbers. A degenerate side contributes
    fraction 0.0 (its flag is set in the per-side metrics) and the failure
    is re-raised after the comparison is written.
    """
    out_dir = Path(out_dir)
    reports: dict[str, MetricsReport] = {}
    failures: dict[str, StageFailure] = {}
    for side, bundle in (("a", bundle_a), ("b", bundle_b)):
        try:
            reports[side] = explain(bundle, label, opts, out_dir / side)
        except StageFailure as exc:
            if isinstance(exc.cause, DegenerateGradient):
                # Metrics with the degenerate flag were already written.
                reports[side] = _read_metrics(out_dir / side / METRICS_NAME)
                failures[side] = exc
            else:
                raise StageFailure(f"bundle {side.upper()} {exc.stage}", exc.cause) from exc

    fraction_a = reports["a"].salient_area_fraction
    fraction_b = reports["b"].salient_area_fraction
    ratio = fraction_a / fraction_b if fraction_b > 0.0 else None
    doc = {
        "label": label,
        "tau": opts.tau,
        "salient_area_fraction_a": fraction_a,
        "salient_area_fraction_b": fraction_b,
        "ratio": ratio,
        "degenerate_a": reports["a"].degenerate_gradient,
        "degenerate_b": reports["b"].degenerate_gradient,
    }
    with _stage("write-outputs"):
        _atomic_write(
            out_dir / COMPARISON_NAME, (json.dumps(doc, indent=2) + "\n").encode()
        )
    for side, exc in failures.items():
        raise StageFailure(f"bundle {side.upper()} {exc.stage}", exc.cause) from exc
    return ComparisonResult(
        report_a=reports["a"], report_b=reports["b"], ratio=ratio
    )


def _read_metrics(path: Path) -> MetricsReport:
    doc = json.loads(path.read_text())
    return MetricsReport(**doc)


def _fail(command: str, err: StageFailure):
    click.echo(f"{command}: error at {err.stage}: {err.cause}", err=True)
    code = 3 if isinstance(err.cause, DegenerateGradient) else 2
    sys.exit(code)


def _bundle_from_flags(features, logits, image) -> ActivationBundle:
    return ActivationBundle(
        features_path=Path(features),
        logits_path=Path(logits),
        image_path=Path(image) if image else None,
    )


_shared_options = [
    click.option("--label", type=int, required=True, help="Ground-truth class index."),
    click.option(
        "--mode",
        type=click.Choice([MODE_LITERAL, MODE_MATCHED]),
        default=MODE_LITERAL,
        show_default=True,
        help="Feature-map combination rule.",
    ),
    click.option(
        "--perplexity",
        type=float,
        default=DEFAULT_PERPLEXITY,
        show_default=True,
        help="Ground-truth affinity target; clamped to [1, K-1].",
    ),
    click.option("--tau", type=float, default=0.5, show_default=True,
                 help="Salient-area threshold."),
    click.option(
        "--colormap",
        type=click.Choice(list(COLORMAPS)),
        default="jet",
        show_default=True,
    ),
    click.option("--blend", type=float, default=0.5, show_default=True,
                 help="Overlay blend factor."),
    click.option(
        "--out-dir",
        type=click.Path(path_type=Path),
        required=True,
        help="Directory for heatmap/metrics outputs.",
    ),
]


def _with_shared_options(f):
    for option in reversed(_shared_options):
        f = option(f)
    return f


def _opts_from_flags(mode, perplexity, tau, colormap, blend) -> ExplainOptions:
    return ExplainOptions(
        mode=mode, perplexity=perplexity, tau=tau, colormap=colormap, blend=blend
    )


@click.group()
def main():
    """Localization heatmaps from KL-divergence gradients over class scores."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")


@main.command("explain")
@click.option("--features", type=click.Path(path_type=Path), required=True,
              help="NPY file with (M, H, W) feature maps.")
@click.option("--logits", type=click.Path(path_type=Path), required=True,
              help="NPY file with (K,) raw class scores.")
@click.option("--image", type=click.Path(path_type=Path), default=None,
              help="Optional base image for the overlay.")
@_with_shared_options
def explain_cmd(features, logits, image, label, mode, perplexity, tau, colormap, blend, out_dir):
    """Explain one activation bundle."""
    bundle = _bundle_from_flags(features, logits, image)
    opts = _opts_from_flags(mode, perplexity, tau, colormap, blend)
    try:
        report = explain(bundle, label, opts, out_dir)
    except StageFailure as err:
        _fail("explain", err)
    click.echo(f"heatmap written to {Path(out_dir) / HEATMAP_NAME}")
    click.echo(f"salient_area_fraction={report.salient_area_fraction:.6f}")


@main.command("compare")
@click.option("--features-a", type=click.Path(path_type=Path), required=True)
@click.option("--logits-a", type=click.Path(path_type=Path), required=True)
@click.option("--image-a", type=click.Path(path_type=Path), default=None)
@click.option("--features-b", type=click.Path(path_type=Path), required=True)
@click.option("--logits-b", type=click.Path(path_type=Path), required=True)
@click.option("--image-b", type=click.Path(path_type=Path), default=None)
@_with_shared_options
def compare_cmd(features_a, logits_a, image_a, features_b, logits_b, image_b,
                label, mode, perplexity, tau, colormap, blend, out_dir):
    """Explain two bundles and report their salient-area fractions."""
    bundle_a = _bundle_from_flags(features_a, logits_a, image_a)
    bundle_b = _bundle_from_flags(features_b, logits_b, image_b)
    opts = _opts_from_flags(mode, perplexity, tau, colormap, blend)
    try:
        result = compare(bundle_a, bundle_b, label, opts, out_dir)
    except StageFailure as err:
        _fail("compare", err)
    click.echo(f"comparison written to {Path(out_dir) / COMPARISON_NAME}")
    click.echo(
        "fractions: a={:.6f} b={:.6f}".format(
            result.report_a.salient_area_fraction,
            result.report_b.salient_area_fraction,
        )
    )


@main.command("forward-explain")
@click.option("--manifest", type=click.Path(path_type=Path), required=True,
              help="Model manifest JSON.")
@click.option("--image", type=click.Path(path_type=Path), required=True,
              help="Input image (PNG).")
@_with_shared_options
def forward_explain_cmd(manifest, image, label, mode, perplexity, tau, colormap, blend, out_dir):
    """Run the toy CNN on an image, then explain its activations."""
    opts = _opts_from_flags(mode, perplexity, tau, colormap, blend)
    try:
        report = forward_explain(manifest, image, label, opts, out_dir)
    except StageFailure as err:
        _fail("forward-explain", err)
    click.echo(f"heatmap written to {Path(out_dir) / HEATMAP_NAME}")
    click.echo(f"salient_area_fraction={report.salient_area_fraction:.6f}")


def export_bundle(features: FeatureStack, logits: ScoreVector, out_dir) -> ActivationBundle:
    """Write in-memory activations as an on-disk bundle (test/tooling seam)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .tensor import Tensor

    features_path = out_dir / "features.npy"
    logits_path = out_dir / "logits.npy"
    _atomic_write(features_path, npy_write(Tensor(features.maps)))
    _atomic_write(logits_path, npy_write(Tensor(logits.values)))
    return ActivationBundle(features_path=features_path, logits_path=logits_path)


if __name__ == "__main__":
    main()
