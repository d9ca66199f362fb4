"""Tile acquisition: deterministic classroom simulator and hardware interface.

The simulator renders flat-color face rectangles over a dark background and
attaches ground truth (who is visible where) to every tile, so downstream
accuracy can be scored exactly while the pixel path still exercises the
stitcher. Occlusion between students is ignored.

A module-level weak registry tracks every live TileImage; the privacy tests
use it to prove tile buffers are released once a cycle publishes.
"""

from __future__ import annotations

import hashlib
import time
import weakref
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import CaptureTimeout, PoseOutOfRange, SeatingOverflow
from .geometry import (CameraIntrinsics, CameraMount, RoomModel, TilePose,
                       camera_basis, _seating_rect)

FACE_WIDTH_M = 0.16
FACE_HEIGHT_M = 0.22
BACKGROUND_RGB = (24, 26, 30)

tile_registry: "weakref.WeakSet[TileImage]" = weakref.WeakSet()


def live_tile_count() -> int:
    """Number of TileImage objects still reachable (privacy instrumentation)."""
    return len(tile_registry)


@dataclass(frozen=True)
class SimDetection:
    """Ground-truth face location within one tile."""

    student_id: str
    bbox: tuple[float, float, float, float]  # x, y, w, h in tile pixels
    embedding_ref: str


@dataclass(eq=False)
class TileImage:
    tile_id: int
    pixels: np.ndarray  # (H, W, 3) uint8, row-major RGB
    captured_at: float
    sim_truth: tuple[SimDetection, ...] | None = None
    noise_key: tuple[int, int] = (0, 0)  # (scene seed, cycle epoch)

    def __post_init__(self):
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("pixels must be an (H, W, 3) uint8 buffer")
        tile_registry.add(self)


@dataclass(frozen=True)
class SeatedStudent:
    student_id: str
    seat_xy: tuple[float, float]
    present: bool
    face_yaw_deg: float


@dataclass(frozen=True)
class SimScene:
    students: tuple[SeatedStudent, ...]
    seed: int


def seat_grid(room: RoomModel, pitch_m: float = 0.9) -> list[tuple[float, float]]:
    """Regular seat positions filling the seating area, front row first."""
    x0, x1, y0, y1 = _seating_rect(room)
    margin = pitch_m / 2.0
    xs = np.arange(x0 + margin, x1 - margin + 1e-9, pitch_m)
    ys = np.arange(y0 + margin, y1 - margin + 1e-9, pitch_m)
    return [(float(x), float(y)) for y in ys for x in xs]


def embedding_ref_for(seed: int, student_id: str) -> str:
    return f"{seed}:{student_id}"


def generate_scene(n_students: int, room: RoomModel, seed: int,
                   presence_prob: float = 1.0, seat_pitch_m: float = 0.9) -> SimScene:
    """Seat n students on the grid, with seeded presence/yaw jitter.

    The seat grid and the student->seat assignment are fixed by the room
    alone; only presence flags and face yaw vary with the seed.
    """
    if n_students < 0:
        raise ValueError("n_students must be >= 0")
    seats = seat_grid(room, seat_pitch_m)
    if n_students > len(seats):
        raise SeatingOverflow(
            f"{n_students} students exceed the {len(seats)}-seat grid")
    rng = np.random.default_rng(seed)
    width = max(3, len(str(n_students)))
    students = []
    for i in range(n_students):
        present = bool(rng.random() < presence_prob)
        yaw = float(np.clip(rng.normal(0.0, 8.0), -25.0, 25.0))
        students.append(SeatedStudent(f"s{i + 1:0{width}d}", seats[i], present, yaw))
    return SimScene(tuple(students), seed)


def _student_color(student_id: str) -> tuple[int, int, int]:
    digest = hashlib.sha1(student_id.encode()).digest()
    return tuple(80 + b % 150 for b in digest[:3])


class Simulator:
    """Procedural tile source bound to one scene and camera setup."""

    def __init__(self, scene: SimScene, room: RoomModel,
                 intrinsics: CameraIntrinsics, mount: CameraMount):
        self.scene = scene
        self.room = room
        self.intrinsics = intrinsics
        self.mount = mount
        self._origin = np.asarray(mount.position_m, dtype=np.float64)
        pts = np.array([(s.seat_xy[0], s.seat_xy[1], room.seat_plane_height_m)
                        for s in scene.students], dtype=np.float64).reshape(-1, 3)
        if len(pts):
            d = pts - self._origin
            self._dirs = d / np.linalg.norm(d, axis=1, keepdims=True)
            self._dists = np.linalg.norm(d, axis=1)
        else:
            self._dirs = np.zeros((0, 3))
            self._dists = np.zeros(0)

    def _face_corners(self, i: int, student: SeatedStudent) -> np.ndarray:
        """World corners of the face billboard: a small rectangle at the seat
        point, facing the camera, so every tile sees the same four points."""
        view = self._dirs[i]
        beta = np.arctan2(view[0], view[1])
        right = np.array([np.cos(beta), -np.sin(beta), 0.0])
        up = np.cross(view, right)
        up /= np.linalg.norm(up)
        yaw_shrink = max(abs(np.cos(np.radians(student.face_yaw_deg))), 0.35)
        half_w = 0.5 * FACE_WIDTH_M * yaw_shrink * right
        half_h = 0.5 * FACE_HEIGHT_M * up
        center = self._origin + view * self._dists[i]
        return np.stack([center - half_w - half_h, center + half_w - half_h,
                         center - half_w + half_h, center + half_w + half_h])

    def capture_tile(self, pose: TilePose, epoch: int = 0) -> TileImage:
        _check_pose(pose, self.mount)
        intr = self.intrinsics
        W, H = intr.image_width_px, intr.image_height_px
        pixels = np.empty((H, W, 3), dtype=np.uint8)
        pixels[:] = BACKGROUND_RGB

        truth = []
        if len(self._dirs):
            rot = camera_basis(pose.pan_deg, pose.tilt_deg)
            cam = self._dirs @ rot
            z = cam[:, 2]
            with np.errstate(divide="ignore", invalid="ignore"):
                cx = W / 2.0 + np.where(z > 0, cam[:, 0] / z, np.inf) * intr.fx_px
                cy = H / 2.0 + np.where(z > 0, -cam[:, 1] / z, np.inf) * intr.fy_px
            for i, student in enumerate(self.scene.students):
                if not student.present:
                    continue
                if not (z[i] > 0 and 0 <= cx[i] < W and 0 <= cy[i] < H):
                    continue
                corners = self._face_corners(i, student) - self._origin
                ccam = corners @ rot
                px = W / 2.0 + ccam[:, 0] / ccam[:, 2] * intr.fx_px
                py = H / 2.0 - ccam[:, 1] / ccam[:, 2] * intr.fy_px
                x_lo = max(float(px.min()), 0.0)
                y_lo = max(float(py.min()), 0.0)
                x_hi = min(float(px.max()), float(W))
                y_hi = min(float(py.max()), float(H))
                pixels[int(y_lo):max(int(np.ceil(y_hi)), int(y_lo) + 1),
                       int(x_lo):max(int(np.ceil(x_hi)), int(x_lo) + 1)] = \
                    _student_color(student.student_id)
                truth.append(SimDetection(
                    student.student_id,
                    (x_lo, y_lo, x_hi - x_lo, y_hi - y_lo),
                    embedding_ref_for(self.scene.seed, student.student_id)))

        return TileImage(pose.tile_id, pixels, time.monotonic(),
                         sim_truth=tuple(truth),
                         noise_key=(self.scene.seed, epoch))


class HardwareAdapter(Protocol):
    """Open-loop pan-tilt camera: command a pose, then read one frame."""

    def move_to(self, pan_deg: float, tilt_deg: float) -> None: ...
    def read_frame(self) -> np.ndarray: ...


class HardwareSource:
    """Wraps a HardwareAdapter with settle timing and timeout translation."""

    def __init__(self, adapter: HardwareAdapter, mount: CameraMount,
                 timeout_s: float = 5.0):
        self.adapter = adapter
        self.mount = mount
        self.timeout_s = timeout_s

    def capture_tile(self, pose: TilePose, epoch: int = 0) -> TileImage:
        _check_pose(pose, self.mount)
        self.adapter.move_to(pose.pan_deg, pose.tilt_deg)
        if self.mount.settle_time_s > 0:
            time.sleep(self.mount.settle_time_s)
        start = time.monotonic()
        try:
            frame = self.adapter.read_frame()
        except TimeoutError as exc:
            raise CaptureTimeout(str(exc)) from exc
        if frame is None or time.monotonic() - start > self.timeout_s:
            raise CaptureTimeout(f"no frame within {self.timeout_s}s")
        return TileImage(pose.tile_id, np.ascontiguousarray(frame, dtype=np.uint8),
                         time.monotonic(), sim_truth=None)


def _check_pose(pose: TilePose, mount: CameraMount) -> None:
    if not (mount.pan_range_deg[0] <= pose.pan_deg <= mount.pan_range_deg[1]
            and mount.tilt_range_deg[0] <= pose.tilt_deg <= mount.tilt_range_deg[1]):
        raise PoseOutOfRange(
            f"pose ({pose.pan_deg}, {pose.tilt_deg}) outside mount range")
