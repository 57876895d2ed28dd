"""The atn-export command."""

from __future__ import annotations

import click

from .backbone import BLOCK_MODULES
from .errors import ExportError
from .export import export, parse_blocks


@click.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--time-step", default=100, show_default=True, type=int,
              help="Denoising time step for the single forward pass.")
@click.option("--attn-size", default=128, show_default=True, type=int,
              help="Attention grid side; the image is resized to 8x this.")
@click.option("--blocks", default=None,
              help=f"Comma list from {sorted(BLOCK_MODULES)}; equal weights. "
                   "Default: up0,up1 at 0.5 each.")
def main(image_path, out_path, time_step, attn_size, blocks):
    """Run one denoising step on IMAGE and write its attention stack."""
    try:
        weights = parse_blocks(blocks)
        path = export(image_path, out_path, time_step=time_step,
                      attn_size=attn_size, blocks=weights)
    except ExportError as e:
        raise click.ClickException(str(e))
    click.echo(f"wrote {path} (blocks: {', '.join(sorted(weights))})")
