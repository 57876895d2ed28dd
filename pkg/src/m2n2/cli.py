"""Command-line entry points: the m2n2 tool and the bench harness."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .errors import M2N2Error
from .evaluation import (
    EvalConfig,
    METHODS,
    build_method_session,
    format_report,
    import_davis,
    load_image,
    run_benchmark,
    write_report,
)
from .segmenter import PromptPoint, add_point, segment
from .tensor_io import (
    SyntheticSpec,
    generate_synthetic_stack,
    guillotine_partition,
    read_attention_file,
    synthetic_guide_image,
    write_attention_file,
)

_LABELS = {"fg": 1, "bg": 0, "1": 1, "0": 0}


def _parse_clicks(text: str) -> list[tuple[int, int, int]]:
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [p.strip() for p in chunk.split(",")]
        if len(parts) != 3 or parts[2].lower() not in _LABELS:
            raise click.BadParameter(
                f"bad click {chunk!r}; expected x,y,fg or x,y,bg"
            )
        out.append((int(parts[0]), int(parts[1]), _LABELS[parts[2].lower()]))
    if not out:
        raise click.BadParameter("no clicks given")
    return out


def _save_mask_png(mask: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)


@click.group()
def main():
    """Interactive point-prompt segmentation from attention tensors."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--ttl", default=3600.0, show_default=True, type=float, help="Session TTL seconds.")
def serve(host: str, port: int, ttl: float):
    """Run the HTTP segmentation service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(ttl_seconds=ttl), host=host, port=port)


@main.command("segment")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--attn", "attn_path", required=True, type=click.Path(exists=True))
@click.option("--clicks", required=True, help='Semicolon-separated clicks "x,y,fg;x,y,bg".')
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--method", default="m2n2", show_default=True, type=click.Choice(METHODS))
def segment_cmd(image_path, attn_path, clicks, out_path, method):
    """Segment one image with a fixed click list and write the mask PNG."""
    try:
        stack = read_attention_file(attn_path)
        guide = load_image(image_path)
        ctx = build_method_session(method, stack, guide)
        for x, y, label in _parse_clicks(clicks):
            add_point(ctx, PromptPoint(x=x, y=y, label=label))
        seg = segment(ctx)
    except M2N2Error as e:
        raise click.ClickException(str(e))
    _save_mask_png(seg.mask, out_path)
    for pid, lam in sorted(seg.per_point_lambda.items()):
        click.echo(f"point {pid}: lambda = {lam:.6f}")
    click.echo(f"wrote {out_path}")


@main.command("export-diagnostics")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--attn", "attn_path", required=True, type=click.Path(exists=True))
@click.option("--clicks", required=True, help='Clicks "x,y,fg;x,y,bg".')
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--steps", default="0,1,2,5,10,50", show_default=True,
              help="Chain steps for snapshot/partial-map images.")
def export_diagnostics(image_path, attn_path, clicks, out_dir, steps):
    """Emit chain snapshots, partial maps, score curves, and segment previews."""
    from .diagnostics import (
        export_chain_frames,
        export_partial_maps,
        export_point_diagnostics,
        export_score_curves,
    )
    from .segmenter import point_cell

    step_list = [int(s) for s in steps.split(",") if s.strip()]
    try:
        stack = read_attention_file(attn_path)
        guide = load_image(image_path)
        ctx = build_method_session("m2n2", stack, guide)
        for x, y, label in _parse_clicks(clicks):
            add_point(ctx, PromptPoint(x=x, y=y, label=label))
        seg = segment(ctx)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [export_score_curves(ctx, out / "scores.csv")]
        written += export_point_diagnostics(ctx, seg.per_point_lambda, out)
        first = ctx.points[0]
        cell = point_cell(first, guide.H, guide.W, ctx.matrix.h, ctx.matrix.w)
        written += export_chain_frames(ctx, cell, step_list, out)
        from .markov import markov_map

        grid = markov_map(ctx.matrix, cell, ctx.params)
        written += export_partial_maps(grid, step_list, out)
        _save_mask_png(seg.mask, out / "mask.png")
        written.append(out / "mask.png")
    except M2N2Error as e:
        raise click.ClickException(str(e))
    click.echo(f"wrote {len(written)} files to {out_dir}")


@main.command()
@click.option("--out", "out_path", required=True, type=click.Path(), help="ATN1 output path.")
@click.option("--image-out", type=click.Path(), default=None, help="Optional guide PNG path.")
@click.option("--grid", default=32, show_default=True, type=int, help="Attention grid size.")
@click.option("--regions", default=4, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--mass", default=0.8, show_default=True, type=float, help="In-region row mass.")
@click.option("--size", default=512, show_default=True, type=int, help="Guide image size.")
def synth(out_path, image_out, grid, regions, seed, mass, size):
    """Write a synthetic attention file (and optional matching guide image)."""
    rng = np.random.default_rng(seed)
    partition = guillotine_partition(grid, grid, regions, rng)
    spec = SyntheticSpec(h=grid, w=grid, partition=partition, in_region_mass=mass, noise_seed=seed)
    try:
        stack = generate_synthetic_stack(spec)
        write_attention_file(stack, out_path)
    except M2N2Error as e:
        raise click.ClickException(str(e))
    click.echo(f"wrote {out_path} ({int(partition.max()) + 1} regions)")
    if image_out:
        from PIL import Image

        rgb = synthetic_guide_image(spec, size, size)
        Image.fromarray((rgb * 255).astype(np.uint8)).save(image_out)
        click.echo(f"wrote {image_out}")


@click.group()
def bench():
    """Click-simulation benchmarking."""


@bench.command("run")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True))
@click.option("--method", default="m2n2", show_default=True, type=click.Choice(METHODS))
@click.option("--max-clicks", default=20, show_default=True, type=int)
@click.option("--targets", default="0.85,0.90", show_default=True)
@click.option("--out", "out_csv", default="report.csv", show_default=True, type=click.Path())
@click.option("--stop-at-targets", is_flag=True, default=False,
              help="Stop an instance once every IoU target is met.")
def bench_run(dataset_dir, method, max_clicks, targets, out_csv, stop_at_targets):
    """Evaluate a method over a manifest dataset and write report CSVs."""
    try:
        target_vals = tuple(float(t) for t in targets.split(",") if t.strip())
        config = EvalConfig(
            max_clicks=max_clicks, iou_targets=target_vals, stop_at_targets=stop_at_targets
        )
    except (ValueError, M2N2Error) as e:
        raise click.ClickException(f"bad config: {e}")

    def progress(i, total, outcome):
        status = "ok" if outcome.ok else "FAILED"
        click.echo(f"[{i}/{total}] {outcome.instance_id}: {status}", err=True)

    try:
        report = run_benchmark(dataset_dir, method, config, progress=progress)
    except M2N2Error as e:
        raise click.ClickException(str(e))
    write_report(report, out_csv)
    click.echo(format_report(report))
    click.echo(f"wrote {out_csv}")
    if report.failures:
        sys.exit(1)


@bench.command("import-davis")
@click.argument("src", type=click.Path(exists=True))
@click.argument("dst", type=click.Path())
@click.option("--stride", default=10, show_default=True, type=int)
def bench_import_davis(src, dst, stride):
    """Convert a DAVIS-style tree into the manifest dataset layout."""
    try:
        n = import_davis(src, dst, stride=stride)
    except M2N2Error as e:
        raise click.ClickException(str(e))
    click.echo(f"imported {n} instances into {dst}")
