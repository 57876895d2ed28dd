"""Point-prompt fusion: per-point maps, adaptive thresholds, truncated NN.

A session owns a doubly stochastic transition matrix and a guide image.
Each prompt point gets a full-resolution map: chain saturation times at the
attention grid, upsampled under the guide, flood-filled from the prompt
pixel, and normalized to [0, 1].  A per-point threshold lambda_i is picked
by maximizing a product of four scores over a fixed lambda grid, and the
final mask assigns each pixel to its nearest point in scaled distance
map_i / lambda_i, truncated to background beyond distance 1.

Maps are cached per point id: adding a point computes exactly one new map
and leaves the others untouched, which is what makes the interactive loop
cheap after the first click.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable

import numpy as np
from scipy import ndimage

from .aggregation import TransitionMatrix, aggregate
from .errors import StateError, ValidationError
from .floodfill import flood_fill_minimax
from .jbu import GuideImage, jbu_upsample
from .markov import MarkovParams, apply_temperature, ipf_normalize, markov_map
from .tensor_io import AttentionStack

# segments at or above this fraction of the image are rejected outright
SEGMENT_SIZE_PRIOR = 0.40
# used when every candidate threshold scores zero
FALLBACK_LAMBDA = 0.5


class Label(IntEnum):
    BACKGROUND = 0
    FOREGROUND = 1


@dataclass(frozen=True)
class PromptPoint:
    """One user click: pixel position, class label, insertion index."""

    x: int
    y: int
    label: int
    id: int = -1


# maps an attention cell index to a low-res map plus a chain-iteration count
MapSource = Callable[["SessionContext", int], tuple[np.ndarray, int]]


def _markov_source(ctx: "SessionContext", cell: int) -> tuple[np.ndarray, int]:
    grid = markov_map(ctx.matrix, cell, ctx.params)
    return grid.values, grid.iterations


@dataclass(eq=False)
class SessionContext:
    """Mutable state of one interactive segmentation session.

    Single-writer: add/remove mutate in place.  ``map_source`` swaps the
    low-res map strategy (the chain by default; baselines inject theirs).
    ``chain_iterations`` and ``run_counts`` exist so tests and diagnostics
    can observe cache hits.
    """

    guide: GuideImage
    matrix: TransitionMatrix
    params: MarkovParams = field(default_factory=MarkovParams)
    lambda_grid_size: int = 256
    sigma_spatial: float = 1.0
    sigma_range: float = 0.1
    map_source: MapSource | None = None
    points: list[PromptPoint] = field(default_factory=list)
    cache: dict[int, np.ndarray] = field(default_factory=dict)
    run_counts: dict[int, int] = field(default_factory=dict)
    chain_iterations: int = 0


def build_m2n2_session(
    stack: AttentionStack,
    guide: GuideImage,
    params: MarkovParams | None = None,
    weights: dict[str, float] | None = None,
    lambda_grid_size: int = 256,
) -> SessionContext:
    """Aggregate, temper, and IPF-normalize once; later clicks reuse the matrix."""
    params = params or MarkovParams()
    A = aggregate(stack, weights)
    A = apply_temperature(A, params.temperature, params.epsilon_floor)
    A = ipf_normalize(A, params)
    return SessionContext(
        guide=guide, matrix=A, params=params, lambda_grid_size=lambda_grid_size
    )


def _check_bounds(point: PromptPoint, H: int, W: int) -> None:
    if not (0 <= point.x < W and 0 <= point.y < H):
        raise ValidationError(
            f"point ({point.x}, {point.y}) outside {W}x{H} image"
        )
    if int(point.label) not in (0, 1):
        raise ValidationError(f"label must be 0 or 1, got {point.label}")


def point_cell(point: PromptPoint, H: int, W: int, h: int, w: int) -> int:
    """Flattened attention cell containing a pixel."""
    cy = (point.y * h) // H
    cx = (point.x * w) // W
    return cy * w + cx


def compute_point_map(ctx: SessionContext, point: PromptPoint) -> np.ndarray:
    """Full-res normalized map for one point, cached under its id."""
    if point.id < 0:
        raise ValidationError("point has no session id; add it via add_point")
    cached = ctx.cache.get(point.id)
    if cached is not None:
        return cached
    H, W = ctx.guide.H, ctx.guide.W
    _check_bounds(point, H, W)

    source = ctx.map_source or _markov_source
    low, iters = source(ctx, point_cell(point, H, W, ctx.matrix.h, ctx.matrix.w))
    ctx.chain_iterations += iters

    up = jbu_upsample(low, ctx.guide, ctx.sigma_spatial, ctx.sigma_range)
    filled = flood_fill_minimax(up, (point.y, point.x))
    peak = filled.max()
    if peak > 0:
        filled /= peak
    ctx.cache[point.id] = filled
    ctx.run_counts[point.id] = ctx.run_counts.get(point.id, 0) + 1
    return filled


@dataclass(frozen=True)
class ThresholdScore:
    """Score components of one candidate threshold; total is their product."""

    lam: float
    s_prior: float
    s_edge: float
    s_pos: float
    s_neg: float

    @property
    def total(self) -> float:
        return self.s_prior * self.s_edge * self.s_pos * self.s_neg


def sobel_magnitude(m: np.ndarray) -> np.ndarray:
    """3x3 Sobel gradient magnitude, borders replicated."""
    gx = ndimage.sobel(m, axis=1, mode="nearest")
    gy = ndimage.sobel(m, axis=0, mode="nearest")
    return np.hypot(gx, gy)


def _boundary_pixels(seg: np.ndarray) -> np.ndarray:
    """Segment pixels with at least one 4-neighbor outside the segment."""
    out = ~seg
    b = np.zeros_like(seg)
    b[1:, :] |= out[:-1, :]
    b[:-1, :] |= out[1:, :]
    b[:, 1:] |= out[:, :-1]
    b[:, :-1] |= out[:, 1:]
    return seg & b


def _split_points(points, i):
    me = next((p for p in points if p.id == i), None)
    if me is None:
        raise ValidationError(f"point id {i} not in point list")
    same = [p for p in points if int(p.label) == int(me.label)]
    opp = [p for p in points if int(p.label) != int(me.label)]
    return same, opp


def evaluate_scores(
    m: np.ndarray, lam: float, points: list[PromptPoint], i: int
) -> ThresholdScore:
    """Score one candidate threshold for point i's map (reference path).

    The segment is {q : m[q] <= lam}.  s_prior gates on segment size below
    40% of the image; s_edge is the mean Sobel magnitude of m over the
    segment's boundary pixels (0 if there are none); s_pos is the fraction
    of same-class points inside; s_neg zeroes everything if any
    opposite-class point fell inside.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda {lam} outside [0, 1]")
    same, opp = _split_points(points, i)
    seg = m <= lam
    s_prior = 1.0 if seg.sum() / seg.size < SEGMENT_SIZE_PRIOR else 0.0
    boundary = _boundary_pixels(seg)
    s_edge = float(sobel_magnitude(m)[boundary].mean()) if boundary.any() else 0.0
    s_pos = sum(1 for p in same if seg[p.y, p.x]) / len(same)
    s_neg = 0.0 if any(seg[p.y, p.x] for p in opp) else 1.0
    return ThresholdScore(float(lam), s_prior, s_edge, s_pos, s_neg)


@dataclass(frozen=True)
class ScoreCurve:
    """All four score components over the whole lambda grid."""

    lam: np.ndarray
    s_prior: np.ndarray
    s_edge: np.ndarray
    s_pos: np.ndarray
    s_neg: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.s_prior * self.s_edge * self.s_pos * self.s_neg


def score_curve(
    m: np.ndarray, points: list[PromptPoint], i: int, grid_size: int = 256
) -> ScoreCurve:
    """evaluate_scores over the whole grid at once.

    A pixel q is inside the segment for every lambda >= m[q] and on its
    boundary for lambda in [m[q], max over q's 4-neighbors of m).  Both are
    contiguous index ranges on the sorted grid, so per-lambda segment sizes,
    boundary counts, and boundary Sobel sums all reduce to histogram prefix
    sums; no per-lambda image pass remains.
    """
    same, opp = _split_points(points, i)
    grid = np.arange(1, grid_size + 1, dtype=np.float64) / grid_size
    flat = m.ravel()

    nbr = np.full(m.shape, -np.inf)
    nbr[1:, :] = np.maximum(nbr[1:, :], m[:-1, :])
    nbr[:-1, :] = np.maximum(nbr[:-1, :], m[1:, :])
    nbr[:, 1:] = np.maximum(nbr[:, 1:], m[:, :-1])
    nbr[:, :-1] = np.maximum(nbr[:, :-1], m[:, 1:])
    maxnbr = nbr.ravel()

    G = sobel_magnitude(m).ravel()
    lo = np.searchsorted(grid, flat, side="left")
    hi = np.searchsorted(grid, maxnbr, side="left")
    nbins = grid_size + 1

    size = np.cumsum(np.bincount(lo, minlength=nbins)[:grid_size])
    s_prior = (size / flat.size < SEGMENT_SIZE_PRIOR).astype(np.float64)

    live = hi > lo  # pixels that are ever boundary pixels
    enters = np.bincount(lo[live], minlength=nbins)[:grid_size]
    leaves = np.bincount(hi[live], minlength=nbins)[:grid_size]
    count = np.cumsum(enters - leaves)
    esum = np.cumsum(
        np.bincount(lo[live], weights=G[live], minlength=nbins)[:grid_size]
        - np.bincount(hi[live], weights=G[live], minlength=nbins)[:grid_size]
    )
    s_edge = np.divide(esum, count, out=np.zeros(grid_size), where=count > 0)

    def inside_counts(pts):
        if not pts:
            return np.zeros(grid_size)
        starts = np.searchsorted(grid, [m[p.y, p.x] for p in pts], side="left")
        return np.cumsum(np.bincount(starts, minlength=nbins)[:grid_size])

    s_pos = inside_counts(same) / len(same)
    s_neg = (inside_counts(opp) == 0).astype(np.float64)
    return ScoreCurve(lam=grid, s_prior=s_prior, s_edge=s_edge, s_pos=s_pos, s_neg=s_neg)


def select_lambda(ctx: SessionContext, points: list[PromptPoint], i: int) -> float:
    """Best-scoring threshold for point i; 0.5 when every candidate scores 0."""
    m = ctx.cache.get(i)
    if m is None:
        raise StateError(f"point {i} has no computed map")
    curve = score_curve(m, points, i, ctx.lambda_grid_size)
    totals = curve.total
    if not totals.max() > 0:
        return FALLBACK_LAMBDA
    return float(curve.lam[int(np.argmax(totals))])


@dataclass(frozen=True)
class Segmentation:
    """Binary mask, per-pixel nearest point id (-1 without points), chosen thresholds."""

    mask: np.ndarray  # (H, W) bool
    nearest: np.ndarray  # (H, W) int32
    per_point_lambda: dict[int, float]


def segment(ctx: SessionContext, points: list[PromptPoint] | None = None) -> Segmentation:
    """Truncated nearest neighbor over all points' scaled distance maps."""
    pts = ctx.points if points is None else list(points)
    H, W = ctx.guide.H, ctx.guide.W
    if not pts:
        return Segmentation(
            mask=np.zeros((H, W), dtype=bool),
            nearest=np.full((H, W), -1, dtype=np.int32),
            per_point_lambda={},
        )
    pts = sorted(pts, key=lambda p: p.id)
    for p in pts:
        compute_point_map(ctx, p)
    lambdas = {p.id: select_lambda(ctx, pts, p.id) for p in pts}

    dist = np.stack([ctx.cache[p.id] / lambdas[p.id] for p in pts])
    k = dist.argmin(axis=0)  # first minimum, so ties go to the smaller id
    dmin = np.take_along_axis(dist, k[None], axis=0)[0]
    ids = np.array([p.id for p in pts], dtype=np.int32)
    labels = np.array([int(p.label) for p in pts], dtype=np.int32)
    return Segmentation(
        mask=(labels[k] == int(Label.FOREGROUND)) & (dmin <= 1.0),
        nearest=ids[k],
        per_point_lambda=lambdas,
    )


def add_point(ctx: SessionContext, point: PromptPoint) -> SessionContext:
    """Append a point (id reassigned to the insertion index) and compute its map."""
    _check_bounds(point, ctx.guide.H, ctx.guide.W)
    p = replace(point, id=len(ctx.points))
    ctx.points.append(p)
    compute_point_map(ctx, p)
    return ctx


def remove_last_point(ctx: SessionContext) -> SessionContext:
    """Drop the newest point and evict exactly its cached map."""
    if not ctx.points:
        raise StateError("no points to remove")
    p = ctx.points.pop()
    ctx.cache.pop(p.id, None)
    return ctx
