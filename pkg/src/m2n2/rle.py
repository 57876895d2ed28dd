"""Run-length encoding of binary masks for the HTTP wire format.

Counts run over row-major pixels and alternate background/foreground,
always starting with a (possibly zero-length) background run.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def encode_mask(mask: np.ndarray) -> dict:
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2 or m.size == 0:
        raise ValidationError(f"mask must be 2-D and non-empty, got shape {m.shape}")
    flat = m.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(starts).tolist()
    if flat[0]:
        counts = [0] + counts
    return {"h": int(m.shape[0]), "w": int(m.shape[1]), "counts": [int(c) for c in counts]}


def decode_mask(payload: dict) -> np.ndarray:
    try:
        h, w, counts = int(payload["h"]), int(payload["w"]), list(payload["counts"])
    except (KeyError, TypeError) as e:
        raise ValidationError(f"malformed RLE payload: {e}")
    if h < 1 or w < 1:
        raise ValidationError(f"bad mask size {h}x{w}")
    if any((not isinstance(c, int)) or c < 0 for c in counts):
        raise ValidationError("RLE counts must be nonnegative integers")
    if sum(counts) != h * w:
        raise ValidationError(f"RLE counts sum to {sum(counts)}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    val = False
    for c in counts:
        if val:
            flat[pos : pos + c] = True
        pos += c
        val = not val
    return flat.reshape(h, w)
