"""Standalone ATN1 writer.

The ATN1 interchange format, little-endian throughout:

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

This module implements the format directly so the exporter stays decoupled
from any consumer; the consumer's reader is the round-trip check in tests.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"ATN1"
VERSION = 1
ROW_SUM_TOL = 1e-4


def check_block(block_id: str, tensor: np.ndarray, h: int, w: int) -> None:
    if tensor.shape != (h, w, h, w):
        raise ExportError(
            f"block {block_id!r} has shape {tensor.shape}, expected {(h, w, h, w)}"
        )
    if not np.isfinite(tensor).all():
        raise ExportError(f"block {block_id!r} contains non-finite values")
    if (tensor < 0).any():
        raise ExportError(f"block {block_id!r} contains negative values")
    sums = tensor.reshape(h * w, -1).sum(axis=1, dtype=np.float64)
    worst = np.abs(sums - 1.0).max()
    if worst > ROW_SUM_TOL:
        raise ExportError(
            f"block {block_id!r} rows deviate from 1 by {worst:.3g} "
            f"(tolerance {ROW_SUM_TOL})"
        )


def write_atn1(
    path,
    blocks: dict[str, np.ndarray],
    weights: dict[str, float],
    h: int,
    w: int,
    meta: dict[str, str] | None = None,
) -> None:
    """Write blocks (id -> (h,w,h,w) array) in a fixed, reproducible order."""
    if not blocks:
        raise ExportError("no blocks to write")
    if set(blocks) != set(weights):
        raise ExportError(
            f"weight keys {sorted(weights)} do not match block ids {sorted(blocks)}"
        )
    if len(blocks) > 1:
        total = sum(float(v) for v in weights.values())
        if abs(total - 1.0) > 1e-6:
            raise ExportError(f"block weights sum to {total:.9g}, expected 1")

    out = bytearray()
    out += MAGIC
    out += struct.pack("<IIII", VERSION, h, w, len(blocks))
    for block_id in sorted(blocks):  # sorted: byte-identical re-export
        tensor = np.asarray(blocks[block_id])
        check_block(block_id, tensor, h, w)
        ident = block_id.encode("utf-8")
        out += struct.pack("<H", len(ident))
        out += ident
        out += struct.pack("<f", float(weights[block_id]))
        out += np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    meta = meta or {}
    out += struct.pack("<I", len(meta))
    for key in meta:  # caller controls order; dicts preserve insertion
        for text in (key, meta[key]):
            raw = str(text).encode("utf-8")
            out += struct.pack("<H", len(raw))
            out += raw
    Path(path).write_bytes(bytes(out))
