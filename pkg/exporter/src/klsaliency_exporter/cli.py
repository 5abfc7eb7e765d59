"""CLI wrapper: one export per invocation."""

import sys
from pathlib import Path

import click

from .export import ExportConfig, ExporterError, export


@click.command()
@click.option("--network", type=click.Choice(["vgg16", "alexnet"]), required=True)
@click.option("--layer", default=None,
              help="Module name to capture (default: the network's last conv activation).")
@click.option("--image", type=click.Path(exists=True, path_type=Path), required=True,
              help="Input image (png/jpg).")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output directory for features.npy / logits.npy / meta.json.")
@click.option("--pretrained/--no-pretrained", default=True, show_default=True,
              help="Load published weights (downloads on first use).")
def main(network, layer, image, out, pretrained):
    """Export one image's activations as a klsaliency bundle."""
    cfg = ExportConfig(
        network=network, layer=layer, image=image, out_dir=out, pretrained=pretrained
    )
    try:
        bundle = export(cfg)
    except ExporterError as exc:
        click.echo(f"export: {exc}", err=True)
        sys.exit(2)
    # Download/IO failures intentionally propagate verbatim.
    click.echo(
        f"features {bundle.features_shape} and logits {bundle.logits_shape} "
        f"written to {out}"
    )


if __name__ == "__main__":
    main()
