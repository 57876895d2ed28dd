"""Turn one image into one ATN1 attention file.

Pipeline: load and resize the image to the backbone's pixel size (8x the
attention grid), run one deterministic denoising step, sum attention heads
per block, resize every block's 4-D tensor to the common target grid,
renormalize rows, and write the file with the chosen per-block weights.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import zoom

from .atn1 import write_atn1
from .backbone import BLOCK_MODULES, DEFAULT_BLOCKS, BackboneRunner, MODEL_ID, load_sd_backbone
from .errors import ExportError

LATENT_DOWNSAMPLE = 8  # backbone pixels per latent cell


def load_image(path, side: int) -> np.ndarray:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((side, side), Image.BILINEAR)
    except (OSError, ValueError) as e:
        raise ExportError(f"cannot read image {path}: {e}")
    return np.asarray(rgb, dtype=np.float32) / 255.0


def sum_heads(per_head: np.ndarray) -> np.ndarray:
    """Collapse (heads, n, n) to row-stochastic (n, n)."""
    if per_head.ndim != 3 or per_head.shape[1] != per_head.shape[2]:
        raise ExportError(f"expected (heads, n, n) attention, got {per_head.shape}")
    summed = per_head.sum(axis=0, dtype=np.float64)
    rows = summed.sum(axis=1, keepdims=True)
    if (rows <= 0).any() or not np.isfinite(rows).all():
        raise ExportError("attention rows do not renormalize (zero or non-finite mass)")
    return summed / rows


def resize_grid(matrix: np.ndarray, grid: int) -> np.ndarray:
    """Resize an (n, n) cell-to-cell matrix onto a grid x grid cell layout.

    The matrix is viewed as (g, g, g, g) over (query row, query col, key row,
    key col) and linearly interpolated along all four axes, then rows are
    renormalized.  Identity when the source grid already matches.
    """
    n = matrix.shape[0]
    g = int(round(np.sqrt(n)))
    if g * g != n:
        raise ExportError(f"attention with {n} tokens is not a square grid")
    four = matrix.reshape(g, g, g, g)
    if g != grid:
        four = zoom(four, grid / g, order=1, grid_mode=True, mode="nearest")
    four = np.clip(four, 0.0, None)
    flat = four.reshape(grid * grid, grid * grid)
    rows = flat.sum(axis=1, keepdims=True)
    if (rows <= 0).any():
        raise ExportError("resized attention has an empty row")
    return (flat / rows).reshape(grid, grid, grid, grid)


def parse_blocks(spec: str | None) -> dict[str, float]:
    """Comma list of block names -> equal weights; None -> the default pair."""
    if spec is None:
        return dict(DEFAULT_BLOCKS)
    names = [s.strip() for s in spec.split(",") if s.strip()]
    if not names:
        raise ExportError("empty block list")
    unknown = sorted(set(names) - set(BLOCK_MODULES))
    if unknown:
        raise ExportError(
            f"unknown blocks {unknown}; available: {sorted(BLOCK_MODULES)}"
        )
    if len(set(names)) != len(names):
        raise ExportError(f"duplicate block names in {names}")
    return {name: 1.0 / len(names) for name in names}


def export(
    image_path,
    out_path,
    time_step: int = 100,
    attn_size: int = 128,
    blocks: dict[str, float] | None = None,
    runner: BackboneRunner | None = None,
) -> Path:
    """Write the ATN1 file for one image and return its path."""
    if attn_size < 2:
        raise ExportError(f"attn_size must be >= 2, got {attn_size}")
    if not 0 <= time_step < 1000:
        raise ExportError(f"time_step must be in [0, 1000), got {time_step}")
    weights = dict(blocks) if blocks is not None else dict(DEFAULT_BLOCKS)
    if runner is None:
        runner = load_sd_backbone()

    side = attn_size * LATENT_DOWNSAMPLE
    image = load_image(image_path, side)
    try:
        per_block = runner.run(image, time_step)
    except MemoryError as e:
        raise ExportError(f"backbone ran out of memory ({e}); try a smaller --attn-size")
    missing = sorted(set(weights) - set(per_block))
    if missing:
        raise ExportError(
            f"backbone produced no attention for blocks {missing} "
            f"(got {sorted(per_block)})"
        )

    tensors = {
        name: resize_grid(sum_heads(np.asarray(per_block[name], dtype=np.float64)), attn_size)
        for name in weights
    }
    meta = {
        "exporter": "atn-export",
        "model": MODEL_ID,
        "time_step": str(time_step),
        "attn_size": str(attn_size),
        "noise": "none",
        "prompt": "empty",
        "head_reduction": "sum-renormalized",
        "grid_resample": "linear-4d",
        "source_image_ref": Path(image_path).name,
    }
    for name in sorted(weights):
        meta[f"block:{name}"] = BLOCK_MODULES[name]
    write_atn1(out_path, tensors, weights, attn_size, attn_size, meta)
    return Path(out_path)
