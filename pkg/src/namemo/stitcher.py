"""Panorama composition from pan-tilt tiles with known angles.

No feature registration: the mount reports pan/tilt, so each tile pixel
maps to a sphere direction in closed form, and the panorama is a linear
(equirectangular) map of azimuth/elevation to canvas x/y. Overlapping tiles
are feather-blended by distance to the tile border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EmptyPlan, OutOfCanvas
from .geometry import (CameraIntrinsics, ScanPlan, TilePose, angles_from_direction,
                       camera_basis, direction_from_angles)


@dataclass(frozen=True)
class PanoramaCanvas:
    az_range_deg: tuple[float, float]
    el_range_deg: tuple[float, float]
    width_px: int
    height_px: int
    pixels: np.ndarray  # (H, W, 3) uint8
    px_per_deg: float

    @property
    def deg_per_px(self) -> float:
        return 1.0 / self.px_per_deg


@dataclass(frozen=True)
class PanoBox:
    x: float
    y: float
    w: float
    h: float
    source_tile: int


def tile_pixel_to_sphere(pose: TilePose, px: tuple[float, float],
                         intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Azimuth/elevation (degrees) of the ray through a tile pixel."""
    xn = (px[0] - intrinsics.image_width_px / 2.0) / intrinsics.fx_px
    yn = (px[1] - intrinsics.image_height_px / 2.0) / intrinsics.fy_px
    rot = camera_basis(pose.pan_deg, pose.tilt_deg)
    d = rot[:, 0] * xn - rot[:, 1] * yn + rot[:, 2]
    az, el = angles_from_direction(d)
    return float(az), float(el)


def sphere_to_tile_pixel(pose: TilePose, az_el: tuple[float, float],
                         intrinsics: CameraIntrinsics) -> tuple[float, float] | None:
    """Inverse of tile_pixel_to_sphere; None for rays behind the camera."""
    d = direction_from_angles(az_el[0], az_el[1])
    cam = d @ camera_basis(pose.pan_deg, pose.tilt_deg)
    if cam[2] <= 0:
        return None
    x = intrinsics.image_width_px / 2.0 + cam[0] / cam[2] * intrinsics.fx_px
    y = intrinsics.image_height_px / 2.0 - cam[1] / cam[2] * intrinsics.fy_px
    return float(x), float(y)


def _pano_xy_unclamped(az, el, canvas: PanoramaCanvas):
    x = (np.asarray(az, dtype=np.float64) - canvas.az_range_deg[0]) * canvas.px_per_deg
    y = (canvas.el_range_deg[1] - np.asarray(el, dtype=np.float64)) * canvas.px_per_deg
    return x, y


def sphere_to_pano(az_el: tuple[float, float], canvas: PanoramaCanvas) -> tuple[float, float]:
    """Map azimuth/elevation to canvas pixel coordinates.

    Linear in both axes; the far edge of the range lands on the last
    pixel column/row. Angles outside the canvas ranges raise OutOfCanvas.
    """
    az, el = az_el
    if not (canvas.az_range_deg[0] <= az <= canvas.az_range_deg[1]
            and canvas.el_range_deg[0] <= el <= canvas.el_range_deg[1]):
        raise OutOfCanvas(f"({az}, {el}) outside canvas ranges")
    x, y = _pano_xy_unclamped(az, el, canvas)
    return (float(np.clip(x, 0, canvas.width_px - 1)),
            float(np.clip(y, 0, canvas.height_px - 1)))


def frustum_angle_bbox(pose: TilePose, intrinsics: CameraIntrinsics,
                       samples_per_edge: int = 32) -> tuple[float, float, float, float]:
    """(az_min, az_max, el_min, el_max) of a tile frustum, by border sampling."""
    W, H = intrinsics.image_width_px, intrinsics.image_height_px
    t = np.linspace(0.0, 1.0, samples_per_edge)
    border = np.concatenate([
        np.stack([t * W, np.zeros_like(t)], axis=1),
        np.stack([t * W, np.full_like(t, H)], axis=1),
        np.stack([np.zeros_like(t), t * H], axis=1),
        np.stack([np.full_like(t, W), t * H], axis=1),
    ])
    xn = (border[:, 0] - W / 2.0) / intrinsics.fx_px
    yn = (border[:, 1] - H / 2.0) / intrinsics.fy_px
    rot = camera_basis(pose.pan_deg, pose.tilt_deg)
    d = (np.outer(xn, rot[:, 0]) - np.outer(yn, rot[:, 1]) + rot[:, 2])
    az, el = angles_from_direction(d)
    return float(az.min()), float(az.max()), float(el.min()), float(el.max())


def canvas_ranges_for_plan(plan: ScanPlan, intrinsics: CameraIntrinsics,
                           pad_deg: float = 0.5):
    boxes = [frustum_angle_bbox(t, intrinsics) for t in plan.tiles]
    az_lo = min(b[0] for b in boxes) - pad_deg
    az_hi = max(b[1] for b in boxes) + pad_deg
    el_lo = min(b[2] for b in boxes) - pad_deg
    el_hi = max(b[3] for b in boxes) + pad_deg
    return (az_lo, az_hi), (el_lo, el_hi)


def empty_canvas(az_range, el_range, px_per_deg: float) -> PanoramaCanvas:
    width = max(1, int(np.ceil((az_range[1] - az_range[0]) * px_per_deg)))
    height = max(1, int(np.ceil((el_range[1] - el_range[0]) * px_per_deg)))
    return PanoramaCanvas(tuple(az_range), tuple(el_range), width, height,
                          np.zeros((height, width, 3), dtype=np.uint8), px_per_deg)


def compose_panorama(tiles, plan: ScanPlan, intrinsics: CameraIntrinsics,
                     px_per_deg: float = 12.0, az_range=None, el_range=None,
                     reproject=None) -> PanoramaCanvas:
    """Feather-blend captured tiles into an equirectangular canvas.

    Canvas ranges default to the hull of the plan's tile frustums, so the
    canvas shape is a function of the plan, not of which tiles arrived.
    `reproject` overrides the kernel (used by the numpy/numba benchmark).
    """
    tiles = list(tiles)
    if not plan.tiles or not tiles:
        raise EmptyPlan("nothing to compose")
    if az_range is None or el_range is None:
        az_range, el_range = canvas_ranges_for_plan(plan, intrinsics)
    base = empty_canvas(az_range, el_range, px_per_deg)
    kernel = reproject or _kernels.reproject_tile

    acc = np.zeros((base.height_px, base.width_px, 3), dtype=np.float64)
    wsum = np.zeros((base.height_px, base.width_px), dtype=np.float64)
    for tile in tiles:
        pose = plan.pose(tile.tile_id)
        az_lo, az_hi, el_lo, el_hi = frustum_angle_bbox(pose, intrinsics)
        x_lo = int(np.clip(np.floor((az_lo - az_range[0]) * px_per_deg) - 1, 0, base.width_px))
        x_hi = int(np.clip(np.ceil((az_hi - az_range[0]) * px_per_deg) + 1, 0, base.width_px))
        y_lo = int(np.clip(np.floor((el_range[1] - el_hi) * px_per_deg) - 1, 0, base.height_px))
        y_hi = int(np.clip(np.ceil((el_range[1] - el_lo) * px_per_deg) + 1, 0, base.height_px))
        if x_lo >= x_hi or y_lo >= y_hi:
            continue
        rot = camera_basis(pose.pan_deg, pose.tilt_deg)
        kernel(tile.pixels, rot, intrinsics.fx_px, intrinsics.fy_px,
               intrinsics.tan_half_h, intrinsics.tan_half_v,
               az_range[0], el_range[1], base.deg_per_px,
               x_lo, x_hi, y_lo, y_hi, acc, wsum)

    return PanoramaCanvas(base.az_range_deg, base.el_range_deg, base.width_px,
                          base.height_px, _kernels.finalize_canvas(acc, wsum),
                          px_per_deg)


def project_box(tile_box, pose: TilePose, canvas: PanoramaCanvas,
                intrinsics: CameraIntrinsics) -> PanoBox:
    """Map a tile-space bbox (x, y, w, h) to its axis-aligned panorama hull."""
    bx, by, bw, bh = tile_box
    corners = [(bx, by), (bx + bw, by), (bx, by + bh), (bx + bw, by + bh)]
    xs, ys = [], []
    for c in corners:
        az, el = tile_pixel_to_sphere(pose, c, intrinsics)
        x, y = _pano_xy_unclamped(az, el, canvas)
        xs.append(float(x))
        ys.append(float(y))
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi < 0 or y_hi < 0 or x_lo > canvas.width_px or y_lo > canvas.height_px:
        raise OutOfCanvas("box entirely outside the canvas")
    x_lo_c = max(x_lo, 0.0)
    y_lo_c = max(y_lo, 0.0)
    w = max(min(x_hi, float(canvas.width_px)) - x_lo_c, 1.0)
    h = max(min(y_hi, float(canvas.height_px)) - y_lo_c, 1.0)
    x_lo_c = min(x_lo_c, canvas.width_px - w)
    y_lo_c = min(y_lo_c, canvas.height_px - h)
    return PanoBox(x_lo_c, y_lo_c, w, h, pose.tile_id)


def box_iou(a: PanoBox, b: PanoBox) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def box_overlap_over_min(a: PanoBox, b: PanoBox) -> float:
    """Intersection over the smaller box; robust to edge-clipped partials."""
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    smaller = min(a.w * a.h, b.w * b.h)
    return (ix * iy) / smaller if smaller > 0 else 0.0


def boxes_to_json(boxes) -> dict:
    """Box metadata export: {"boxes": [{x, y, w, h, tile_id}, ...]}."""
    return {"boxes": [{"x": b.x, "y": b.y, "w": b.w, "h": b.h,
                       "tile_id": b.source_tile} for b in boxes]}
