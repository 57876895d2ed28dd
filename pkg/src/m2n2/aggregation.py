"""Weighted aggregation of attention blocks into one transition matrix.

Blocks are combined as a convex combination and flattened from (h, w, h, w)
to (n, n) with n = h*w, row-major: cell (k, l) maps to index k*w + l.  The
flattening order is fixed here and relied on by every downstream stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError
from .tensor_io import WEIGHT_SUM_TOL, AttentionStack

ROW_STOCHASTIC_TOL = 1e-4


class Stochasticity(Enum):
    ROW = "row_stochastic"
    DOUBLY = "doubly_stochastic"


@dataclass(frozen=True)
class TransitionMatrix:
    """Dense nonnegative transition matrix over flattened grid cells."""

    data: np.ndarray  # (n, n)
    h: int
    w: int
    stochasticity: Stochasticity

    @property
    def n(self) -> int:
        return self.h * self.w

    def __post_init__(self):
        if self.data.shape != (self.n, self.n):
            raise ValidationError(
                f"matrix shape {self.data.shape} does not match grid "
                f"{self.h}x{self.w} (expected {(self.n, self.n)})"
            )


def check_row_stochastic(data: np.ndarray, tol: float = ROW_STOCHASTIC_TOL) -> None:
    if (data < 0).any():
        raise ValidationError("transition matrix contains negative entries")
    sums = data.sum(axis=1, dtype=np.float64)
    worst = int(np.argmax(np.abs(sums - 1.0)))
    if abs(sums[worst] - 1.0) > tol:
        raise ValidationError(
            f"row {worst} sums to {sums[worst]:.6g}, outside 1 +/- {tol}"
        )


def aggregate(
    stack: AttentionStack, weights: dict[str, float] | None = None
) -> TransitionMatrix:
    """Convex-combine the stack's blocks into one row-stochastic (n, n) matrix.

    ``weights`` overrides the stack's default weights; keys must name existing
    blocks and the values must sum to 1.
    """
    ids = stack.block_ids
    if weights is None:
        weights = stack.default_weights
    else:
        unknown = set(weights) - set(ids)
        if unknown:
            raise ValidationError(f"weights given for unknown block(s) {sorted(unknown)}")

    total = sum(float(weights.get(bid, 0.0)) for bid in ids)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ValidationError(f"weights sum to {total:.9g}, outside 1 +/- {WEIGHT_SUM_TOL}")

    n = stack.h * stack.w
    out = np.zeros((n, n), dtype=np.float32)
    # fixed block order (the stack's) keeps float summation deterministic
    for block in stack.blocks:
        wj = float(weights.get(block.block_id, 0.0))
        if wj == 0.0:
            continue
        out += wj * block.tensor.reshape(n, n).astype(np.float32, copy=False)

    check_row_stochastic(out)
    return TransitionMatrix(data=out, h=stack.h, w=stack.w, stochasticity=Stochasticity.ROW)
