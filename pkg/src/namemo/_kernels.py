"""Hot reprojection kernels: numba-jitted with a pure-numpy fallback.

Set NAMEMO_NUMBA=0 to force the numpy path (the jitted path is the default
whenever numba imports). Both implementations share the same math: walk the
canvas pixels inside a tile's footprint, cast each pixel's ray into the
tile camera, bilinear-sample the tile, and feather-accumulate weighted by
distance to the tile border. benchmarks/bench_stitch.py compares the two.
"""

from __future__ import annotations

import os

import numpy as np

WEIGHT_FLOOR = 1e-6  # keeps border pixels visible where only one tile lands


def _numba_requested() -> bool:
    return os.environ.get("NAMEMO_NUMBA", "1").strip().lower() not in (
        "0", "false", "off", "no")


def reproject_tile_numpy(tile, rot, fx, fy, tanh, tanv,
                         az_min, el_max, deg_per_px,
                         x_lo, x_hi, y_lo, y_hi, acc, wsum):
    """Accumulate one tile into (acc, wsum) over the given canvas window."""
    th, tw = tile.shape[0], tile.shape[1]
    xs = np.arange(x_lo, x_hi)
    ys = np.arange(y_lo, y_hi)
    az = np.radians(az_min + (xs + 0.5) * deg_per_px)
    el = np.radians(el_max - (ys + 0.5) * deg_per_px)
    sin_az, cos_az = np.sin(az), np.cos(az)
    sin_el, cos_el = np.sin(el), np.cos(el)

    # world ray components, separable in row/column
    dx = cos_el[:, None] * sin_az[None, :]
    dy = cos_el[:, None] * cos_az[None, :]
    dz = np.broadcast_to(sin_el[:, None], dx.shape)

    cx_cam = dx * rot[0, 0] + dy * rot[1, 0] + dz * rot[2, 0]
    cy_cam = dx * rot[0, 1] + dy * rot[1, 1] + dz * rot[2, 1]
    cz_cam = dx * rot[0, 2] + dy * rot[1, 2] + dz * rot[2, 2]

    with np.errstate(divide="ignore", invalid="ignore"):
        xn = cx_cam / cz_cam
        yn = -cy_cam / cz_cam
    inside = (cz_cam > 0) & (np.abs(xn) <= tanh) & (np.abs(yn) <= tanv)
    if not inside.any():
        return

    tx = tw / 2.0 + xn * fx
    ty = th / 2.0 + yn * fy
    w = np.minimum(np.minimum(tx, tw - tx), np.minimum(ty, th - ty))
    w = np.maximum(w / (0.5 * min(tw, th)), WEIGHT_FLOOR)
    w = np.where(inside, w, 0.0)

    sx = np.clip(tx - 0.5, 0.0, tw - 1.0)
    sy = np.clip(ty - 0.5, 0.0, th - 1.0)
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, tw - 1)
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, th - 1)
    x1 = np.minimum(x0 + 1, tw - 1)
    y1 = np.minimum(y0 + 1, th - 1)
    ax = (sx - x0)[..., None]
    ay = (sy - y0)[..., None]
    t = tile.astype(np.float64)
    sample = ((t[y0, x0] * (1 - ax) + t[y0, x1] * ax) * (1 - ay)
              + (t[y1, x0] * (1 - ax) + t[y1, x1] * ax) * ay)

    acc[y_lo:y_hi, x_lo:x_hi] += sample * w[..., None]
    wsum[y_lo:y_hi, x_lo:x_hi] += w


def _reproject_tile_loops(tile, rot, fx, fy, tanh, tanv,
                          az_min, el_max, deg_per_px,
                          x_lo, x_hi, y_lo, y_hi, acc, wsum):
    th, tw = tile.shape[0], tile.shape[1]
    half = 0.5 * min(tw, th)
    n_x = x_hi - x_lo
    sin_az = np.empty(n_x)
    cos_az = np.empty(n_x)
    for i in range(n_x):
        a = np.radians(az_min + (x_lo + i + 0.5) * deg_per_px)
        sin_az[i] = np.sin(a)
        cos_az[i] = np.cos(a)
    for iy in range(y_lo, y_hi):
        e = np.radians(el_max - (iy + 0.5) * deg_per_px)
        sin_el = np.sin(e)
        cos_el = np.cos(e)
        for i in range(n_x):
            dx = cos_el * sin_az[i]
            dy = cos_el * cos_az[i]
            dz = sin_el
            cz = dx * rot[0, 2] + dy * rot[1, 2] + dz * rot[2, 2]
            if cz <= 0:
                continue
            xn = (dx * rot[0, 0] + dy * rot[1, 0] + dz * rot[2, 0]) / cz
            yn = -(dx * rot[0, 1] + dy * rot[1, 1] + dz * rot[2, 1]) / cz
            if abs(xn) > tanh or abs(yn) > tanv:
                continue
            tx = tw / 2.0 + xn * fx
            ty = th / 2.0 + yn * fy
            w = min(min(tx, tw - tx), min(ty, th - ty)) / half
            if w < WEIGHT_FLOOR:
                w = WEIGHT_FLOOR
            sx = min(max(tx - 0.5, 0.0), tw - 1.0)
            sy = min(max(ty - 0.5, 0.0), th - 1.0)
            x0 = int(sx)
            y0 = int(sy)
            x1 = min(x0 + 1, tw - 1)
            y1 = min(y0 + 1, th - 1)
            ax = sx - x0
            ay = sy - y0
            ix = x_lo + i
            for c in range(3):
                top = tile[y0, x0, c] * (1 - ax) + tile[y0, x1, c] * ax
                bot = tile[y1, x0, c] * (1 - ax) + tile[y1, x1, c] * ax
                acc[iy, ix, c] += (top * (1 - ay) + bot * ay) * w
            wsum[iy, ix] += w


reproject_tile_numba = None
if _numba_requested():
    try:
        from numba import njit
        reproject_tile_numba = njit(cache=True)(_reproject_tile_loops)
    except ImportError:
        pass

USING_NUMBA = reproject_tile_numba is not None
reproject_tile = reproject_tile_numba if USING_NUMBA else reproject_tile_numpy


def finalize_canvas(acc, wsum):
    """Normalize the feather accumulators into a uint8 RGB canvas."""
    out = acc / np.maximum(wsum, WEIGHT_FLOOR * 1e-3)[..., None]
    out[wsum == 0] = 0.0
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
