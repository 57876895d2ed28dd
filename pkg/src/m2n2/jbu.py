"""Joint bilateral upsampling of low-res maps under an RGB guide.

Every output pixel q averages a dense (2r+1)^2 window of low-res cells,
weighted by an unnormalized spatial Gaussian of the cell's distance to q's
low-res position and an isotropic Gaussian of the RGB distance between the
guide at q and the guide sampled (bilinearly) at the cell's exact high-res
center.  Coordinates use the align-centers convention and window indices
clamp at borders (border cells enter the sum more than once).  Bilinear
center sampling keeps the output equivariant under horizontal flips even
when cell centers fall exactly between two pixels.

The numba kernel and the numpy fallback accumulate the 25 taps in the same
order in float64; they agree to within an ulp of exp.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

RADIUS = 2  # window covers +/- 2 sigma_spatial at the default sigma

try:  # pragma: no cover - import probe
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class GuideImage:
    rgb: np.ndarray  # (H, W, 3) floats in [0, 1]

    @property
    def H(self) -> int:
        return self.rgb.shape[0]

    @property
    def W(self) -> int:
        return self.rgb.shape[1]

    def __post_init__(self):
        rgb = self.rgb
        if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[0] < 1 or rgb.shape[1] < 1:
            raise ValidationError(f"guide must be (H, W, 3), got {rgb.shape}")
        if not np.isfinite(rgb).all() or rgb.min() < 0 or rgb.max() > 1:
            raise ValidationError("guide channel values must lie in [0, 1]")


def guide_from_array(img: np.ndarray) -> GuideImage:
    """Build a GuideImage from uint8 or float pixels, grayscale or RGB(A)."""
    a = np.asarray(img)
    if a.dtype == np.uint8:
        a = a.astype(np.float64) / 255.0
    else:
        a = a.astype(np.float64)
    if a.ndim == 2:
        a = np.repeat(a[:, :, None], 3, axis=2)
    elif a.ndim == 3 and a.shape[2] == 4:
        a = a[:, :, :3]
    return GuideImage(rgb=np.clip(a, 0.0, 1.0))


def _center_positions(n_low: int, n_high: int) -> np.ndarray:
    """Exact high-res position of each low cell's center (align-centers)."""
    return (np.arange(n_low) + 0.5) * n_high / n_low - 0.5


def _sample_guide_at_centers(rgb: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinearly sample the guide at every low cell's exact center."""
    H, W = rgb.shape[:2]
    cy = np.clip(_center_positions(h, H), 0.0, H - 1.0)
    cx = np.clip(_center_positions(w, W), 0.0, W - 1.0)
    y0 = np.floor(cy).astype(np.int64)
    x0 = np.floor(cx).astype(np.int64)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    fy = (cy - y0)[:, None, None]
    fx = (cx - x0)[None, :, None]
    top = rgb[np.ix_(y0, x0)] * (1 - fx) + rgb[np.ix_(y0, x1)] * fx
    bot = rgb[np.ix_(y1, x0)] * (1 - fx) + rgb[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def _grid_geometry(h, w, H, W):
    """Per-output-axis low-res positions and window centers."""
    qy = (np.arange(H) + 0.5) * h / H - 0.5
    qx = (np.arange(W) + 0.5) * w / W - 0.5
    cy = np.floor(qy + 0.5).astype(np.int64)
    cx = np.floor(qx + 0.5).astype(np.int64)
    return qy, qx, cy, cx


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _jbu_kernel(low, low_rgb, guide, qy, qx, cy, cx, inv_ss2, inv_sr2):
        # pragma: no cover - exercised via wrapper
        h, w = low.shape
        H, W = guide.shape[0], guide.shape[1]
        out = np.empty((H, W), dtype=np.float64)
        for Y in range(H):
            for X in range(W):
                num = 0.0
                den = 0.0
                for dy in range(-RADIUS, RADIUS + 1):
                    py = cy[Y] + dy
                    if py < 0:
                        py = 0
                    elif py >= h:
                        py = h - 1
                    for dx in range(-RADIUS, RADIUS + 1):
                        px = cx[X] + dx
                        if px < 0:
                            px = 0
                        elif px >= w:
                            px = w - 1
                        ds = (py - qy[Y]) ** 2 + (px - qx[X]) ** 2
                        dr = 0.0
                        for c in range(3):
                            diff = guide[Y, X, c] - low_rgb[py, px, c]
                            dr += diff * diff
                        wgt = np.exp(-0.5 * (ds * inv_ss2 + dr * inv_sr2))
                        num += wgt * low[py, px]
                        den += wgt
                out[Y, X] = num / den
        return out


def _jbu_numpy(low, low_rgb, guide, qy, qx, cy, cx, inv_ss2, inv_sr2):
    h, w = low.shape
    H, W = guide.shape[:2]
    num = np.zeros((H, W), dtype=np.float64)
    den = np.zeros((H, W), dtype=np.float64)
    for dy in range(-RADIUS, RADIUS + 1):
        py = np.clip(cy + dy, 0, h - 1)  # (H,)
        ds_y = (py - qy) ** 2  # (H,)
        for dx in range(-RADIUS, RADIUS + 1):
            px = np.clip(cx + dx, 0, w - 1)  # (W,)
            ds = ds_y[:, None] + (px - qx)[None, :] ** 2
            dr = ((guide - low_rgb[np.ix_(py, px)]) ** 2).sum(axis=2)
            wgt = np.exp(-0.5 * (ds * inv_ss2 + dr * inv_sr2))
            num += wgt * low[np.ix_(py, px)]
            den += wgt
    return num / den


def jbu_upsample(
    low: np.ndarray,
    guide: GuideImage,
    sigma_spatial: float = 1.0,
    sigma_range: float = 0.1,
) -> np.ndarray:
    """Upsample a low-res map to the guide's resolution, edges following the guide."""
    if not (sigma_spatial > 0 and sigma_range > 0):
        raise ValidationError(
            f"sigmas must be > 0, got spatial={sigma_spatial}, range={sigma_range}"
        )
    low = np.asarray(low, dtype=np.float64)
    if low.ndim != 2 or low.size == 0:
        raise ValidationError(f"low-res map must be 2-D and non-empty, got {low.shape}")
    h, w = low.shape
    H, W = guide.H, guide.W
    if h > H or w > W:
        raise ValidationError(f"low-res {h}x{w} exceeds guide {H}x{W}")

    rgb = np.ascontiguousarray(guide.rgb, dtype=np.float64)
    low_rgb = np.ascontiguousarray(_sample_guide_at_centers(rgb, h, w))
    qy, qx, cy, cx = _grid_geometry(h, w, H, W)
    inv_ss2 = 1.0 / (sigma_spatial * sigma_spatial)
    inv_sr2 = 1.0 / (sigma_range * sigma_range)

    if _HAVE_NUMBA and not os.environ.get("M2N2_DISABLE_NUMBA"):
        return _jbu_kernel(
            np.ascontiguousarray(low), low_rgb, rgb, qy, qx, cy, cx, inv_ss2, inv_sr2
        )
    return _jbu_numpy(low, low_rgb, rgb, qy, qx, cy, cx, inv_ss2, inv_sr2)
