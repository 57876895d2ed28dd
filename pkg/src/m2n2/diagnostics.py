"""Diagnostic emitters: chain snapshots, partial maps, score curves, previews."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .markov import MarkovGrid, MarkovParams, chain_states, markov_map
from .segmenter import SessionContext, score_curve


def save_grayscale(arr: np.ndarray, path, vmax: float | None = None) -> Path:
    """Write an array as an 8-bit grayscale PNG, scaled by its max by default."""
    from PIL import Image

    a = np.asarray(arr, dtype=np.float64)
    peak = float(a.max()) if vmax is None else float(vmax)
    if peak <= 0:
        peak = 1.0
    img = np.clip(a / peak, 0.0, 1.0)
    path = Path(path)
    Image.fromarray((img * 255).astype(np.uint8), mode="L").save(path)
    return path


def export_chain_frames(ctx: SessionContext, cell: int, steps, out_dir) -> list[Path]:
    """Grayscale p_t snapshots of the chain started at one attention cell."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    states = chain_states(ctx.matrix, cell, steps, ctx.params)
    return [
        save_grayscale(state, out_dir / f"chain_t{t:04d}.png")
        for t, state in sorted(states.items())
    ]


def export_partial_maps(grid: MarkovGrid, steps, out_dir) -> list[Path]:
    """Saturation maps truncated at each requested step: min(values, t)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in sorted(set(int(s) for s in steps)):
        if t <= 0:
            continue
        partial = np.minimum(grid.values, float(t))
        paths.append(save_grayscale(partial, out_dir / f"partial_t{t:04d}.png", vmax=t))
    return paths


def export_score_curves(ctx: SessionContext, out_csv) -> Path:
    """Per-point score components over the whole lambda grid, one CSV."""
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["point_id", "lambda", "s_prior", "s_edge", "s_pos", "s_neg", "total"])
        for p in ctx.points:
            m = ctx.cache.get(p.id)
            if m is None:
                continue
            curve = score_curve(m, ctx.points, p.id, ctx.lambda_grid_size)
            total = curve.total
            for j in range(len(curve.lam)):
                writer.writerow(
                    [
                        p.id,
                        f"{curve.lam[j]:.6f}",
                        f"{curve.s_prior[j]:.6f}",
                        f"{curve.s_edge[j]:.6f}",
                        f"{curve.s_pos[j]:.6f}",
                        f"{curve.s_neg[j]:.6f}",
                        f"{total[j]:.6f}",
                    ]
                )
    return out_csv


def export_point_diagnostics(ctx: SessionContext, lambdas: dict[int, float], out_dir) -> list[Path]:
    """Per-point map images and segment previews at the chosen thresholds."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for p in ctx.points:
        m = ctx.cache.get(p.id)
        if m is None:
            continue
        paths.append(save_grayscale(m, out_dir / f"map_point{p.id}.png", vmax=1.0))
        lam = lambdas.get(p.id)
        if lam is not None:
            preview = (m <= lam).astype(np.float64)
            paths.append(
                save_grayscale(preview, out_dir / f"segment_point{p.id}.png", vmax=1.0)
            )
    return paths


def export_markov_grid(ctx: SessionContext, cell: int) -> MarkovGrid:
    """Fresh saturation grid for one cell (diagnostic use; bypasses the cache)."""
    params = ctx.params or MarkovParams()
    return markov_map(ctx.matrix, cell, params)
