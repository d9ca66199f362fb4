"""Room/camera geometry and pan-tilt scan planning.

Coordinate conventions used across the engine:

* Room frame: origin at the front-left floor corner. +x runs along the
  front wall (room width), +y into the room (depth), +z up. All meters.
* Pan is azimuth in degrees measured from +y, positive toward +x.
  Tilt is elevation in degrees above the horizontal plane.
* Camera frame: +z along the optical axis, +x right, +y up. Pixel
  coordinates are continuous, origin at the top-left image corner, so
  the principal point sits at (W/2, H/2) and x=W is the right edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageInfeasible, SeatingAreaEmpty


@dataclass(frozen=True)
class RoomModel:
    """Classroom floor plan plus the horizontal plane faces sit on."""

    width_m: float
    depth_m: float
    seating_front_offset_m: float = 0.0
    seat_plane_height_m: float = 1.2

    def __post_init__(self):
        if self.width_m < 0 or self.depth_m <= 0:
            raise ValueError("room dimensions must be positive")
        if self.seating_front_offset_m < 0:
            raise ValueError("seating offset cannot be negative")

    @property
    def seating_depth_m(self) -> float:
        return self.depth_m - self.seating_front_offset_m


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length_mm: float
    sensor_width_mm: float
    sensor_height_mm: float
    image_width_px: int
    image_height_px: int

    def __post_init__(self):
        for name in ("focal_length_mm", "sensor_width_mm", "sensor_height_mm",
                     "image_width_px", "image_height_px"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def fx_px(self) -> float:
        """Focal length in horizontal pixels."""
        return self.focal_length_mm * self.image_width_px / self.sensor_width_mm

    @property
    def fy_px(self) -> float:
        return self.focal_length_mm * self.image_height_px / self.sensor_height_mm

    @property
    def tan_half_h(self) -> float:
        return self.sensor_width_mm / (2.0 * self.focal_length_mm)

    @property
    def tan_half_v(self) -> float:
        return self.sensor_height_mm / (2.0 * self.focal_length_mm)


@dataclass(frozen=True)
class CameraMount:
    """Pan-tilt head: where it sits and how it moves."""

    position_m: tuple[float, float, float]
    pan_range_deg: tuple[float, float] = (-175.0, 175.0)
    tilt_range_deg: tuple[float, float] = (-85.0, 85.0)
    settle_time_s: float = 0.5
    slew_rate_deg_s: float = 90.0

    def __post_init__(self):
        if self.pan_range_deg[0] >= self.pan_range_deg[1]:
            raise ValueError("pan range min must be < max")
        if self.tilt_range_deg[0] >= self.tilt_range_deg[1]:
            raise ValueError("tilt range min must be < max")
        if self.settle_time_s < 0:
            raise ValueError("settle time cannot be negative")
        if self.slew_rate_deg_s <= 0:
            raise ValueError("slew rate must be > 0")


@dataclass(frozen=True)
class TilePose:
    tile_id: int
    pan_deg: float
    tilt_deg: float


@dataclass(frozen=True)
class ScanPlan:
    tiles: tuple[TilePose, ...]
    overlap_fraction: float
    covered_fraction: float

    def __post_init__(self):
        if not self.tiles:
            raise ValueError("plan must contain at least one tile")
        ids = [t.tile_id for t in self.tiles]
        if len(set(ids)) != len(ids):
            raise ValueError("tile ids must be unique")

    def pose(self, tile_id: int) -> TilePose:
        for t in self.tiles:
            if t.tile_id == tile_id:
                return t
        raise KeyError(tile_id)


@dataclass(frozen=True)
class AngularExtent:
    """Smallest pan and tilt intervals enclosing the seating area."""

    pan_min_deg: float
    pan_max_deg: float
    tilt_min_deg: float
    tilt_max_deg: float

    @property
    def pan_extent_deg(self) -> float:
        return self.pan_max_deg - self.pan_min_deg

    @property
    def tilt_extent_deg(self) -> float:
        return self.tilt_max_deg - self.tilt_min_deg


def compute_fov(intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Horizontal and vertical field of view in degrees."""
    hfov = 2.0 * math.degrees(math.atan(intrinsics.tan_half_h))
    vfov = 2.0 * math.degrees(math.atan(intrinsics.tan_half_v))
    return hfov, vfov


def direction_from_angles(az_deg, el_deg) -> np.ndarray:
    """Unit direction(s) for azimuth/elevation. Broadcasts; returns (..., 3)."""
    az = np.radians(np.asarray(az_deg, dtype=np.float64))
    el = np.radians(np.asarray(el_deg, dtype=np.float64))
    ce = np.cos(el)
    return np.stack([np.sin(az) * ce, np.cos(az) * ce, np.sin(el)], axis=-1)


def angles_from_direction(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth/elevation in degrees for direction vector(s) of shape (..., 3)."""
    d = np.asarray(d, dtype=np.float64)
    az = np.degrees(np.arctan2(d[..., 0], d[..., 1]))
    el = np.degrees(np.arctan2(d[..., 2], np.hypot(d[..., 0], d[..., 1])))
    return az, el


def camera_basis(pan_deg: float, tilt_deg: float) -> np.ndarray:
    """World-from-camera rotation; columns are (right, up, forward)."""
    p = math.radians(pan_deg)
    t = math.radians(tilt_deg)
    sp, cp, st, ct = math.sin(p), math.cos(p), math.sin(t), math.cos(t)
    right = (cp, -sp, 0.0)
    up = (-sp * st, -cp * st, ct)
    forward = (sp * ct, cp * ct, st)
    return np.array([right, up, forward], dtype=np.float64).T


def dirs_to_camera(dirs: np.ndarray, pose: TilePose) -> np.ndarray:
    """World directions (N, 3) -> camera-frame components (N, 3)."""
    return np.asarray(dirs, dtype=np.float64) @ camera_basis(pose.pan_deg, pose.tilt_deg)


def in_frustum(dirs: np.ndarray, pose: TilePose, intrinsics: CameraIntrinsics,
               margin: float = 0.0) -> np.ndarray:
    """Boolean mask of directions inside the tile's view frustum.

    `margin` shrinks the frustum by that fraction on the normalized image
    plane; the coverage check uses 0.01 to stay off the exact boundary.
    """
    cam = dirs_to_camera(np.atleast_2d(dirs), pose)
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xn = np.where(z > 0, x / z, np.inf)
        yn = np.where(z > 0, y / z, np.inf)
    k = 1.0 - margin
    return ((z > 0)
            & (np.abs(xn) <= intrinsics.tan_half_h * k)
            & (np.abs(yn) <= intrinsics.tan_half_v * k))


def project_dirs(dirs: np.ndarray, pose: TilePose,
                 intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Project world directions into tile pixel coordinates.

    Returns (pixels (N, 2), valid mask). Pixels are continuous; valid means
    in front of the camera and inside the image rectangle.
    """
    cam = dirs_to_camera(np.atleast_2d(dirs), pose)
    z = cam[:, 2]
    front = z > 0
    zsafe = np.where(front, z, 1.0)
    xn = cam[:, 0] / zsafe
    yn = -cam[:, 1] / zsafe  # image y grows downward
    px = np.empty((cam.shape[0], 2), dtype=np.float64)
    px[:, 0] = intrinsics.image_width_px / 2.0 + xn * intrinsics.fx_px
    px[:, 1] = intrinsics.image_height_px / 2.0 + yn * intrinsics.fy_px
    valid = (front
             & (px[:, 0] >= 0) & (px[:, 0] <= intrinsics.image_width_px)
             & (px[:, 1] >= 0) & (px[:, 1] <= intrinsics.image_height_px))
    return px, valid


def _seating_rect(room: RoomModel) -> tuple[float, float, float, float]:
    if room.seating_front_offset_m >= room.depth_m:
        raise SeatingAreaEmpty(
            f"seating offset {room.seating_front_offset_m}m leaves no seating "
            f"in a {room.depth_m}m deep room")
    return 0.0, room.width_m, room.seating_front_offset_m, room.depth_m


def _check_mount_in_room(room: RoomModel, mount: CameraMount) -> None:
    x, y, z = mount.position_m
    if not (0 <= x <= room.width_m and 0 <= y <= room.depth_m and z >= 0):
        raise ValueError(f"mount position {mount.position_m} outside room bounds")


def required_angular_extent(room: RoomModel, mount: CameraMount) -> AngularExtent:
    """Smallest pan/tilt intervals covering every seating point at face height.

    The seating area is convex, so the pan extremes are reached at its
    corners (minimal enclosing arc of the corner azimuths) and the tilt
    extremes at the nearest and farthest horizontal distances.
    """
    _check_mount_in_room(room, mount)
    x0, x1, y0, y1 = _seating_rect(room)
    cx, cy, cz = mount.position_m

    if x0 <= cx <= x1 and y0 <= cy <= y1:
        pan_lo, pan_hi = -180.0, 180.0  # camera inside the seating footprint
    else:
        corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
        angles = sorted(math.degrees(math.atan2(x - cx, y - cy)) for x, y in corners)
        if angles[-1] - angles[0] < 1e-12:
            pan_lo = pan_hi = angles[0]  # degenerate: all corners line up
        else:
            gaps = [(angles[(i + 1) % 4] - angles[i]) % 360.0 for i in range(4)]
            widest = max(range(4), key=gaps.__getitem__)
            pan_lo = angles[(widest + 1) % 4]
            pan_hi = pan_lo + (360.0 - gaps[widest])

    dx = max(x0 - cx, 0.0, cx - x1)
    dy = max(y0 - cy, 0.0, cy - y1)
    r_min = math.hypot(dx, dy)
    r_max = max(math.hypot(x - cx, y - cy)
                for x in (x0, x1) for y in (y0, y1))
    dz = room.seat_plane_height_m - cz
    tilts = (math.degrees(math.atan2(dz, r_min)), math.degrees(math.atan2(dz, r_max)))
    return AngularExtent(pan_lo, pan_hi, min(tilts), max(tilts))


def _grid_count(extent_deg: float, step_deg: float) -> int:
    # epsilon keeps an exact multiple from spilling into an extra row/column
    return max(1, math.ceil(extent_deg / step_deg - 1e-9))


def seating_samples(room: RoomModel, step_m: float = 0.25) -> np.ndarray:
    """Regular grid of (x, y, z) points over the seating plane, corners included."""
    x0, x1, y0, y1 = _seating_rect(room)
    nx = max(2, int(math.floor((x1 - x0) / step_m)) + 1) if x1 > x0 else 1
    ny = max(2, int(math.floor((y1 - y0) / step_m)) + 1)
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel(),
                    np.full(gx.size, room.seat_plane_height_m)], axis=1)
    return pts


def coverage_fraction(tiles, room: RoomModel, mount: CameraMount,
                      intrinsics: CameraIntrinsics, sample_step_m: float = 0.25,
                      margin: float = 0.01) -> float:
    """Fraction of seating-plane samples seen by at least one tile frustum."""
    pts = seating_samples(room, sample_step_m)
    origin = np.asarray(mount.position_m, dtype=np.float64)
    dirs = pts - origin
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    covered = np.zeros(len(pts), dtype=bool)
    for pose in tiles:
        todo = ~covered
        if not todo.any():
            break
        covered[todo] |= in_frustum(dirs[todo], pose, intrinsics, margin=margin)
    return float(covered.mean())


def plan_scan(room: RoomModel, intrinsics: CameraIntrinsics, mount: CameraMount,
              overlap: float = 0.1) -> ScanPlan:
    """Lay out a serpentine pan/tilt grid covering the seating area.

    Columns step by hfov*(1-overlap) and rows by vfov*(1-overlap); the grid
    is centered on the required angular extent. Rows run top to bottom,
    alternating sweep direction to minimize pan travel.
    """
    if not 0 <= overlap < 0.5:
        raise ValueError("overlap must be in [0, 0.5)")
    hfov, vfov = compute_fov(intrinsics)
    ext = required_angular_extent(room, mount)

    pan_step = hfov * (1.0 - overlap)
    tilt_step = vfov * (1.0 - overlap)
    n_pan = _grid_count(ext.pan_extent_deg, pan_step)
    n_tilt = _grid_count(ext.tilt_extent_deg, tilt_step)

    pan_center = (ext.pan_min_deg + ext.pan_max_deg) / 2.0
    tilt_center = (ext.tilt_min_deg + ext.tilt_max_deg) / 2.0
    pans = [pan_center + (i - (n_pan - 1) / 2.0) * pan_step for i in range(n_pan)]
    tilts = [tilt_center + ((n_tilt - 1) / 2.0 - j) * tilt_step for j in range(n_tilt)]

    pan_lo, pan_hi = mount.pan_range_deg
    tilt_lo, tilt_hi = mount.tilt_range_deg
    if pans[0] < pan_lo or pans[-1] > pan_hi or tilts[-1] < tilt_lo or tilts[0] > tilt_hi:
        raise CoverageInfeasible(
            f"grid needs pan [{pans[0]:.1f}, {pans[-1]:.1f}] and tilt "
            f"[{tilts[-1]:.1f}, {tilts[0]:.1f}] deg, beyond mount range")

    tiles = []
    tile_id = 0
    for j, tilt in enumerate(tilts):
        row = pans if j % 2 == 0 else pans[::-1]
        for pan in row:
            tiles.append(TilePose(tile_id, pan, tilt))
            tile_id += 1

    covered = coverage_fraction(tiles, room, mount, intrinsics)
    return ScanPlan(tuple(tiles), overlap, covered)


def estimate_cycle_time(plan: ScanPlan, mount: CameraMount,
                        per_tile_process_s: float = 0.8) -> float:
    """Seconds for one full scan: per-tile settle + processing plus pan/tilt travel."""
    fixed = len(plan.tiles) * (mount.settle_time_s + per_tile_process_s)
    travel_deg = 0.0
    for a, b in zip(plan.tiles, plan.tiles[1:]):
        travel_deg += abs(b.pan_deg - a.pan_deg) + abs(b.tilt_deg - a.tilt_deg)
    return fixed + travel_deg / mount.slew_rate_deg_s
