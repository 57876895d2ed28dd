"""Attention tensor file format (ATN1) and synthetic attention generators.

The ATN1 layout is little-endian throughout:

    magic    4 bytes  b"ATN1"
    version  u32      currently 1
    h, w     u32, u32 attention grid size in cells
    count    u32      number of blocks
    per block:
        id_len   u16      UTF-8 byte length of the block id
        id       bytes    block id
        weight   f32      default aggregation weight
        payload  f32[...] h*w*h*w values, row-major over (k, l, r, c)
    meta_n   u32      number of metadata pairs
    per pair:
        u16-prefixed UTF-8 key, u16-prefixed UTF-8 value

Payload precision is 32-bit float: exporters run their backbone in half
precision and convert up, so f32 is the interchange precision.  Values are
stored exactly as given, which makes write/read a bit-exact round trip.

The synthetic generator builds block-structured attention rows from a region
partition.  It is the backbone-free stand-in used by tests and demos: every
generated row is a probability distribution by construction, with a known
region layout that downstream stages should recover.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

MAGIC = b"ATN1"
VERSION = 1

ROW_SUM_TOL = 1e-4  # exporter f16 -> f32 conversion introduces rounding
WEIGHT_SUM_TOL = 1e-6
GENERATOR_ROW_TOL = 1e-6

# Reserved metadata key used to persist AttentionStack.source_image_ref.
_SOURCE_IMAGE_KEY = "source_image_ref"


@dataclass(frozen=True)
class AttentionBlock:
    """One per-block attention tensor with heads already summed."""

    block_id: str
    tensor: np.ndarray  # (h, w, h, w) float32
    default_weight: float


@dataclass(frozen=True)
class AttentionStack:
    blocks: tuple[AttentionBlock, ...]
    h: int
    w: int
    source_image_ref: str | None = None
    source_meta: dict[str, str] = field(default_factory=dict)

    @property
    def block_ids(self) -> tuple[str, ...]:
        return tuple(b.block_id for b in self.blocks)

    @property
    def default_weights(self) -> dict[str, float]:
        return {b.block_id: b.default_weight for b in self.blocks}


def validate_stack(stack: AttentionStack) -> None:
    """Check all AttentionStack invariants, raising ValidationError on the first failure."""
    if not stack.blocks:
        raise ValidationError("attention stack has no blocks")
    ids = [b.block_id for b in stack.blocks]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate block ids: {dupes}")
    for block in stack.blocks:
        t = block.tensor
        if t.shape != (stack.h, stack.w, stack.h, stack.w):
            raise ValidationError(
                f"block {block.block_id!r} has shape {t.shape}, "
                f"expected {(stack.h, stack.w, stack.h, stack.w)}"
            )
        if not np.isfinite(t).all():
            raise ValidationError(f"block {block.block_id!r} contains non-finite values")
        if (t < 0).any():
            raise ValidationError(f"block {block.block_id!r} contains negative values")
        sums = t.reshape(stack.h * stack.w, -1).sum(axis=1, dtype=np.float64)
        dev = np.abs(sums - 1.0)
        worst = int(np.argmax(dev))
        if dev[worst] > ROW_SUM_TOL:
            k, l = divmod(worst, stack.w)
            raise ValidationError(
                f"block {block.block_id!r} row (k={k}, l={l}) sums to "
                f"{sums[worst]:.6g}, outside 1 +/- {ROW_SUM_TOL}"
            )
    if len(stack.blocks) > 1:
        total = sum(float(b.default_weight) for b in stack.blocks)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(
                f"default weights sum to {total:.9g}, outside 1 +/- {WEIGHT_SUM_TOL}"
            )


def serialize_stack(stack: AttentionStack, validate: bool = True) -> bytes:
    """Serialize a stack to ATN1 bytes.

    ``validate=False`` skips invariant checks and exists so tests can craft
    deliberately broken files; production callers always validate.
    """
    if validate:
        validate_stack(stack)
    elif not stack.blocks:
        raise ValidationError("attention stack has no blocks")

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IIII", VERSION, stack.h, stack.w, len(stack.blocks)))
    for block in stack.blocks:
        ident = block.block_id.encode("utf-8")
        buf.write(struct.pack("<H", len(ident)))
        buf.write(ident)
        buf.write(struct.pack("<f", float(block.default_weight)))
        payload = np.ascontiguousarray(block.tensor, dtype="<f4")
        buf.write(payload.tobytes())

    meta = dict(stack.source_meta)
    if stack.source_image_ref is not None:
        meta[_SOURCE_IMAGE_KEY] = stack.source_image_ref
    buf.write(struct.pack("<I", len(meta)))
    for key, value in meta.items():
        for text in (key, value):
            raw = str(text).encode("utf-8")
            buf.write(struct.pack("<H", len(raw)))
            buf.write(raw)
    return buf.getvalue()


def write_attention_file(stack: AttentionStack, path) -> None:
    """Write the stack to ``path``; bytes are deterministic for identical input."""
    data = serialize_stack(stack)
    with open(path, "wb") as f:
        f.write(data)


class _Reader:
    """Tiny cursor over file bytes that turns short reads into CorruptionError."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptionError(
                f"truncated file: needed {n} bytes for {what}, "
                f"had {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f32(self, what: str) -> float:
        return struct.unpack("<f", self.take(4, what))[0]

    def text(self, what: str) -> str:
        n = self.u16(what + " length")
        return self.take(n, what).decode("utf-8")


def read_attention_file(path) -> AttentionStack:
    """Read and validate an ATN1 file (path or binary file object)."""
    if hasattr(path, "read"):
        data = path.read()
    else:
        with open(path, "rb") as f:
            data = f.read()

    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    r = _Reader(data)
    r.pos = 4
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    h = r.u32("h")
    w = r.u32("w")
    count = r.u32("block count")

    blocks = []
    cells = h * w
    for i in range(count):
        ident = r.text(f"block {i} id")
        weight = r.f32(f"block {i} weight")
        raw = r.take(cells * cells * 4, f"block {ident!r} payload")
        tensor = np.frombuffer(raw, dtype="<f4").reshape(h, w, h, w).copy()
        blocks.append(AttentionBlock(ident, tensor, weight))

    meta: dict[str, str] = {}
    meta_n = r.u32("meta count")
    for i in range(meta_n):
        key = r.text(f"meta key {i}")
        meta[key] = r.text(f"meta value {i}")

    source_ref = meta.pop(_SOURCE_IMAGE_KEY, None)
    stack = AttentionStack(
        blocks=tuple(blocks), h=h, w=w, source_image_ref=source_ref, source_meta=meta
    )
    validate_stack(stack)
    return stack


# ---------------------------------------------------------------------------
# Synthetic attention worlds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Block-structured attention over an integer region partition.

    Row k places ``in_region_mass`` uniformly on cells sharing k's region
    label and the remainder uniformly on all other cells.  If a region spans
    the whole grid, the entire mass goes in-region (rows become uniform).
    """

    h: int
    w: int
    partition: np.ndarray  # (h, w) int region labels
    in_region_mass: float
    noise_seed: int = 0


def _check_partition(spec: SyntheticSpec) -> np.ndarray:
    part = np.asarray(spec.partition)
    if part.size != spec.h * spec.w:
        raise ValidationError(
            f"partition has {part.size} entries, expected {spec.h * spec.w}"
        )
    part = part.reshape(spec.h, spec.w).astype(np.int64)
    labels = np.unique(part)
    expected = np.arange(labels.size)
    if not np.array_equal(labels, expected):
        missing = sorted(set(expected.tolist()) - set(labels.tolist()))
        raise ValidationError(f"region(s) {missing or labels.tolist()} have zero cells")
    if not 0.0 < spec.in_region_mass <= 1.0:
        raise ValidationError(f"in_region_mass {spec.in_region_mass} outside (0, 1]")
    return part


def generate_synthetic_stack(spec: SyntheticSpec) -> AttentionStack:
    """Build a single-block stack whose rows follow the region partition exactly."""
    part = _check_partition(spec)
    n = spec.h * spec.w
    flat = part.ravel()
    q = float(spec.in_region_mass)

    tensor = np.empty((n, n), dtype=np.float64)
    for label in np.unique(flat):
        members = flat == label
        m = int(members.sum())
        row = np.empty(n, dtype=np.float64)
        if m == n:
            row[:] = 1.0 / n
        else:
            row[members] = q / m
            row[~members] = (1.0 - q) / (n - m)
        tensor[members] = row

    block = AttentionBlock(
        "synthetic", tensor.reshape(spec.h, spec.w, spec.h, spec.w).astype(np.float32), 1.0
    )
    meta = {
        "generator": "synthetic",
        "in_region_mass": repr(q),
        "noise_seed": str(spec.noise_seed),
        "regions": str(int(flat.max()) + 1),
    }
    stack = AttentionStack(blocks=(block,), h=spec.h, w=spec.w, source_meta=meta)
    validate_stack(stack)
    return stack


def guillotine_partition(
    h: int, w: int, n_regions: int, rng: np.random.Generator, min_size: int = 3
) -> np.ndarray:
    """Split an h x w grid into axis-aligned rectangles by recursive cuts.

    Returns an (h, w) int label array with labels 0..n_regions-1.  If the grid
    cannot host the requested count at ``min_size``, fewer regions come back.
    """
    rects = [(0, 0, h, w)]  # (top, left, height, width)
    while len(rects) < n_regions:
        # cut the largest rectangle that can still be split
        order = sorted(range(len(rects)), key=lambda i: -rects[i][2] * rects[i][3])
        for idx in order:
            top, left, rh, rw = rects[idx]
            can_h = rh >= 2 * min_size
            can_v = rw >= 2 * min_size
            if not (can_h or can_v):
                continue
            if can_h and can_v:
                horizontal = bool(rng.integers(2)) if rh == rw else rh > rw
            else:
                horizontal = can_h
            if horizontal:
                cut = int(rng.integers(min_size, rh - min_size + 1))
                new = [(top, left, cut, rw), (top + cut, left, rh - cut, rw)]
            else:
                cut = int(rng.integers(min_size, rw - min_size + 1))
                new = [(top, left, rh, cut), (top, left + cut, rh, rw - cut)]
            rects[idx : idx + 1] = new
            break
        else:
            break  # nothing splittable left

    out = np.zeros((h, w), dtype=np.int64)
    for label, (top, left, rh, rw) in enumerate(rects):
        out[top : top + rh, left : left + rw] = label
    return out


# Well-separated RGB anchors for region-colored guide images.
_PALETTE = np.array(
    [
        [0.90, 0.10, 0.10],
        [0.10, 0.45, 0.90],
        [0.15, 0.75, 0.20],
        [0.95, 0.80, 0.10],
        [0.60, 0.20, 0.80],
        [0.95, 0.50, 0.05],
        [0.10, 0.80, 0.80],
        [0.55, 0.35, 0.15],
        [0.85, 0.40, 0.60],
        [0.35, 0.35, 0.40],
        [0.70, 0.90, 0.30],
        [0.25, 0.15, 0.60],
    ],
    dtype=np.float32,
)


def synthetic_guide_image(spec: SyntheticSpec, H: int, W: int) -> np.ndarray:
    """Render the partition as an (H, W, 3) float image, one flat color per region."""
    part = _check_partition(spec)
    n_regions = int(part.max()) + 1
    rng = np.random.default_rng(spec.noise_seed)
    perm = rng.permutation(len(_PALETTE))
    colors = _PALETTE[perm[np.arange(n_regions) % len(_PALETTE)]]
    rows = (np.arange(H) * spec.h) // H
    cols = (np.arange(W) * spec.w) // W
    upscaled = part[np.ix_(rows, cols)]
    return colors[upscaled]


def region_mask(spec: SyntheticSpec, label: int, H: int, W: int) -> np.ndarray:
    """Full-resolution boolean mask of one region of the partition."""
    part = _check_partition(spec)
    rows = (np.arange(H) * spec.h) // H
    cols = (np.arange(W) * spec.w) // W
    return part[np.ix_(rows, cols)] == label
