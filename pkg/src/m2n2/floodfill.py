"""Minimax flood fill: minimum flood threshold to reach each pixel.

For a map M and a start pixel s, the output assigns every pixel y the
smallest lambda such that a 4-connected path from s to y exists whose pixels
all satisfy |M[v] - M[s]| <= lambda.  Equivalently it is the bottleneck
shortest path under max-aggregation, which lifts any local minimum of
|M - M[s]| that is separated from the start by a barrier: the basin at the
start is the unique zero-valued region.

Implemented as best-first search with a binary min-heap.  A pixel's key at
first insertion is already its final value: popped thresholds never decrease
and the pixel-local term |M[y] - M[s]| is fixed, so a later relaxation can
never beat an earlier one.  That removes any need for decrease-key and the
whole run is O(HW log HW), which matters because this stage runs per click
at full image resolution.

The numba kernel carries the heap in flat arrays; a pure-numpy/heapq
fallback (also used when M2N2_DISABLE_NUMBA is set) keeps the module usable
without a JIT.
"""

from __future__ import annotations

import heapq
import os

import numpy as np

from .errors import ValidationError

try:  # pragma: no cover - import probe
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def _use_numba() -> bool:
    return _HAVE_NUMBA and not os.environ.get("M2N2_DISABLE_NUMBA")


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _flood_kernel(m, sy, sx):  # pragma: no cover - exercised via wrapper
        H, W = m.shape
        n = H * W
        out = np.zeros(n, dtype=np.float64)
        seen = np.zeros(n, dtype=np.bool_)
        heap_key = np.empty(n, dtype=np.float64)
        heap_idx = np.empty(n, dtype=np.int64)
        size = 0
        base = m[sy, sx]

        start = sy * W + sx
        seen[start] = True
        heap_key[0] = 0.0
        heap_idx[0] = start
        size = 1

        while size > 0:
            lam = heap_key[0]
            idx = heap_idx[0]
            size -= 1
            # move last element to root and sift down
            heap_key[0] = heap_key[size]
            heap_idx[0] = heap_idx[size]
            i = 0
            while True:
                left = 2 * i + 1
                if left >= size:
                    break
                small = left
                right = left + 1
                if right < size and heap_key[right] < heap_key[left]:
                    small = right
                if heap_key[small] >= heap_key[i]:
                    break
                heap_key[i], heap_key[small] = heap_key[small], heap_key[i]
                heap_idx[i], heap_idx[small] = heap_idx[small], heap_idx[i]
                i = small

            y = idx // W
            x = idx - y * W
            for k in range(4):
                if k == 0:
                    ny, nx = y - 1, x
                elif k == 1:
                    ny, nx = y + 1, x
                elif k == 2:
                    ny, nx = y, x - 1
                else:
                    ny, nx = y, x + 1
                if ny < 0 or ny >= H or nx < 0 or nx >= W:
                    continue
                nidx = ny * W + nx
                if seen[nidx]:
                    continue
                seen[nidx] = True
                d = abs(m[ny, nx] - base)
                key = lam if lam > d else d
                out[nidx] = key
                # sift up
                j = size
                heap_key[j] = key
                heap_idx[j] = nidx
                size += 1
                while j > 0:
                    parent = (j - 1) // 2
                    if heap_key[parent] <= heap_key[j]:
                        break
                    heap_key[parent], heap_key[j] = heap_key[j], heap_key[parent]
                    heap_idx[parent], heap_idx[j] = heap_idx[j], heap_idx[parent]
                    j = parent
        return out.reshape(H, W)


def _flood_python(m: np.ndarray, sy: int, sx: int) -> np.ndarray:
    H, W = m.shape
    out = np.zeros((H, W), dtype=np.float64)
    seen = np.zeros((H, W), dtype=bool)
    base = float(m[sy, sx])
    seen[sy, sx] = True
    counter = 0  # stable tie order in the heap
    q = [(0.0, counter, sy, sx)]
    while q:
        lam, _, y, x = heapq.heappop(q)
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < H and 0 <= nx < W and not seen[ny, nx]:
                seen[ny, nx] = True
                key = max(lam, abs(float(m[ny, nx]) - base))
                out[ny, nx] = key
                counter += 1
                heapq.heappush(q, (key, counter, ny, nx))
    return out


def flood_fill_minimax(M: np.ndarray, start) -> np.ndarray:
    """Minimum flood threshold from ``start`` to every pixel of ``M``.

    ``M`` is a 2-D map (a 1-D array is treated as a single row) and ``start``
    a (y, x) pair, or a plain index for 1-D input.  Output shape matches M.
    """
    m = np.asarray(M, dtype=np.float64)
    squeeze = m.ndim == 1
    if squeeze:
        m = m.reshape(1, -1)
        if np.isscalar(start) or isinstance(start, (int, np.integer)):
            start = (0, int(start))
    if m.ndim != 2 or m.size == 0:
        raise ValidationError(f"expected a non-empty 2-D map, got shape {np.shape(M)}")
    if not np.isfinite(m).all():
        raise ValidationError("map contains non-finite values")
    sy, sx = int(start[0]), int(start[1])
    H, W = m.shape
    if not (0 <= sy < H and 0 <= sx < W):
        raise ValidationError(f"start {(sy, sx)} out of bounds for {H}x{W} map")

    if _use_numba():
        out = _flood_kernel(np.ascontiguousarray(m), sy, sx)
    else:
        out = _flood_python(m, sy, sx)
    return out[0] if squeeze else out
