"""Temperature rescaling, IPF, and Markov-chain saturation maps.

The pipeline here turns a row-stochastic attention matrix into a doubly
stochastic Markov operator and extracts, per grid cell, the first time the
chain started at a prompt cell "saturates" that cell (relative probability
above tau), with sub-step linear interpolation.

Numerics
--------
All arithmetic runs in float64.  The matrix itself is kept in float64 up to
``F64_CELL_LIMIT`` cells and in float32 above it: a full-scale 128x128 grid
gives a 16384^2 matrix (1 GiB in f32) and doubling that for f64 is not worth
it, while at that size the per-row float32 rounding averages out far below
the mass-conservation budget.  Small matrices are the dangerous regime for
f32 row sums over a 1000-step chain, and they get f64 for free.

IPF alternates row and column normalization but always finishes on a row
pass.  The chain multiplies on the right (p A), so total mass after a step
is the row-sum-weighted mass before it: exact row sums keep ||p_t||_1 = 1
to ~1e-12 over the whole chain, while a column-pass finish would let an
ipf_tolerance-sized row error compound exponentially across 1000 steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aggregation import Stochasticity, TransitionMatrix
from .errors import ContractError, ConvergenceError, NumericError, ValidationError

# Largest cell count for which the doubly stochastic matrix is stored in f64.
F64_CELL_LIMIT = 8192

# |sum(p_t) - 1| allowed during chain iteration.
MASS_TOL = 1e-6

# f64 rows converted per block when multiplying against an f32 matrix.
_BLOCK_BYTES = 1 << 25


@dataclass(frozen=True)
class MarkovParams:
    temperature: float = 0.65
    tau: float = 0.3
    max_iters: int = 1000
    ipf_tolerance: float = 1e-3
    ipf_max_rounds: int = 500
    epsilon_floor: float = 1e-30

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if not 0 < self.tau < 1:
            raise ValidationError(f"tau must be in (0, 1), got {self.tau}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.ipf_tolerance > 0:
            raise ValidationError(f"ipf_tolerance must be > 0, got {self.ipf_tolerance}")
        if self.ipf_max_rounds < 1:
            raise ValidationError(f"ipf_max_rounds must be >= 1, got {self.ipf_max_rounds}")
        if not self.epsilon_floor > 0:
            raise ValidationError(f"epsilon_floor must be > 0, got {self.epsilon_floor}")


@dataclass(frozen=True)
class MarkovGrid:
    """Per-cell saturation times of one chain run.

    ``values`` holds the interpolated times, ``crossing`` the integer step of
    the first ratio above tau (max_iters where it never happened), and
    ``saturated`` is False exactly where the chain ran out of iterations.
    """

    h: int
    w: int
    values: np.ndarray  # (h, w) float64
    crossing: np.ndarray  # (h, w) int32
    saturated: np.ndarray  # (h, w) bool
    iterations: int  # chain steps actually executed


def _matrix_dtype(n: int):
    return np.float64 if n <= F64_CELL_LIMIT else np.float32


def apply_temperature(
    A: TransitionMatrix, T: float, epsilon_floor: float = 1e-30
) -> TransitionMatrix:
    """Sharpen or flatten each row: softmax of (1/T) * log of the row.

    Equivalent to renormalizing p_i^(1/T) within the row, i.e. re-running the
    original attention softmax at a different temperature.  T=1 is identity.
    """
    if not T > 0:
        raise ValidationError(f"temperature must be > 0, got {T}")
    logs = np.log(np.maximum(A.data, epsilon_floor, dtype=np.float64)) / T
    logs -= logs.max(axis=1, keepdims=True)
    out = np.exp(logs)
    out /= out.sum(axis=1, keepdims=True)
    return TransitionMatrix(
        data=out.astype(_matrix_dtype(A.n), copy=False),
        h=A.h,
        w=A.w,
        stochasticity=Stochasticity.ROW,
    )


def ipf_normalize(A: TransitionMatrix, params: MarkovParams | None = None) -> TransitionMatrix:
    """Scale A to doubly stochastic form by alternating row/column passes.

    Each round normalizes rows then columns; the loop stops once the worst
    row or column sum is within half the tolerance and then applies one last
    row pass, so returned row sums are exact (to f64 rounding) and column
    sums stay within the declared tolerance.
    """
    params = params or MarkovParams()
    data = np.asarray(A.data, dtype=np.float64).copy()
    if (data < 0).any():
        raise ValidationError("matrix has negative entries")
    rows = data.sum(axis=1)
    cols = data.sum(axis=0)
    if (rows <= 0).any() or (cols <= 0).any():
        raise ValidationError("matrix has an all-zero row or column")

    target = params.ipf_tolerance / 2
    residual = np.inf
    for _ in range(params.ipf_max_rounds):
        data /= rows[:, None]
        cols = data.sum(axis=0)
        data /= cols[None, :]
        rows = data.sum(axis=1)
        # columns are exact right after their pass, so the row deviation is
        # the full distance from doubly stochastic form
        residual = float(np.abs(rows - 1.0).max())
        if residual < target:
            data /= rows[:, None]
            return TransitionMatrix(
                data=data.astype(_matrix_dtype(A.n), copy=False),
                h=A.h,
                w=A.w,
                stochasticity=Stochasticity.DOUBLY,
            )
    raise ConvergenceError(
        f"IPF did not reach tolerance {params.ipf_tolerance} in "
        f"{params.ipf_max_rounds} rounds",
        residual=residual,
    )


def _step(p: np.ndarray, data: np.ndarray) -> np.ndarray:
    """One chain step p <- p A with float64 accumulation."""
    if data.dtype == np.float64:
        return p @ data
    # f32 matrix: widen row blocks on the fly instead of copying the whole
    # matrix to f64 (which would dwarf the matrix itself at full scale)
    n = data.shape[0]
    rows_per_block = max(1, _BLOCK_BYTES // (8 * n))
    out = np.zeros(n, dtype=np.float64)
    for k0 in range(0, n, rows_per_block):
        k1 = min(k0 + rows_per_block, n)
        out += p[k0:k1] @ data[k0:k1].astype(np.float64)
    return out


def markov_map(
    A: TransitionMatrix, start_cell: int, params: MarkovParams | None = None
) -> MarkovGrid:
    """Run the chain from a one-hot start and record per-cell saturation times.

    Cell k saturates at the first step t with p_t[k] / max(p_t) > tau; the
    stored value refines t by linear interpolation between the bracketing
    ratios.  Cells that never saturate within max_iters get value max_iters.
    """
    params = params or MarkovParams()
    if A.stochasticity is not Stochasticity.DOUBLY:
        raise ContractError(
            f"markov_map needs a doubly stochastic matrix, got {A.stochasticity.value}"
        )
    n = A.n
    if not 0 <= start_cell < n:
        raise ValidationError(f"start cell {start_cell} out of range [0, {n})")

    tau = params.tau
    p = np.zeros(n, dtype=np.float64)
    p[start_cell] = 1.0

    values = np.full(n, float(params.max_iters), dtype=np.float64)
    crossing = np.full(n, params.max_iters, dtype=np.int32)
    done = np.zeros(n, dtype=bool)

    # t = 0: ratios are the one-hot itself, so only the start cell crosses
    values[start_cell] = 0.0
    crossing[start_cell] = 0
    done[start_cell] = True
    prev_ratio = p.copy()

    t = 0
    while t < params.max_iters and not done.all():
        t += 1
        p = _step(p, A.data)
        mass = p.sum()
        if not np.isfinite(mass):
            raise NumericError("chain state became non-finite", iteration=t)
        if abs(mass - 1.0) > MASS_TOL:
            raise NumericError(
                f"chain mass drifted to {mass!r} (|sum - 1| > {MASS_TOL})", iteration=t
            )
        ratio = p / p.max()
        newly = ~done & (ratio > tau)
        if newly.any():
            # r_{t-1} <= tau < r_t on these cells, so the denominator is > 0
            frac = (tau - prev_ratio[newly]) / (ratio[newly] - prev_ratio[newly])
            values[newly] = np.maximum(t - 1 + frac, 0.0)
            crossing[newly] = t
            done[newly] = True
        prev_ratio = ratio

    return MarkovGrid(
        h=A.h,
        w=A.w,
        values=values.reshape(A.h, A.w),
        crossing=crossing.reshape(A.h, A.w),
        saturated=done.reshape(A.h, A.w),
        iterations=t,
    )


def chain_states(
    A: TransitionMatrix, start_cell: int, steps, params: MarkovParams | None = None
) -> dict[int, np.ndarray]:
    """Return chain state p_t at each requested step, as float32 (h, w) grids.

    Diagnostic companion to markov_map; step 0 is the one-hot start.
    """
    params = params or MarkovParams()
    if A.stochasticity is not Stochasticity.DOUBLY:
        raise ContractError(
            f"chain_states needs a doubly stochastic matrix, got {A.stochasticity.value}"
        )
    wanted = sorted(set(int(s) for s in steps))
    if not wanted:
        return {}
    if wanted[0] < 0:
        raise ValidationError(f"negative step {wanted[0]}")
    n = A.n
    if not 0 <= start_cell < n:
        raise ValidationError(f"start cell {start_cell} out of range [0, {n})")

    p = np.zeros(n, dtype=np.float64)
    p[start_cell] = 1.0
    out: dict[int, np.ndarray] = {}
    if wanted[0] == 0:
        out[0] = p.reshape(A.h, A.w).astype(np.float32)
    for t in range(1, wanted[-1] + 1):
        p = _step(p, A.data)
        if t in wanted:
            out[t] = p.reshape(A.h, A.w).astype(np.float32)
    return out
