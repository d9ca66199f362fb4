"""Run profiles and the flat key=value config file format.

The built-in "feasibility-test" profile describes the reference deployment:
a 20m x 15m hall, a 35mm lens on a 1/2"-class sensor, and a pan-tilt head
mounted high in the front-left corner. Its mount height, seating offset and
10% stitch overlap were solved together so the seating area tiles as a 9x7
grid (63 captures) that refreshes inside the 90 second budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .geometry import CameraIntrinsics, CameraMount, RoomModel
from .matcher import MatchPolicy


@dataclass(frozen=True)
class SessionConfig:
    refresh_interval_s: float = 90.0
    policy: MatchPolicy = field(default_factory=MatchPolicy)
    sticky_iou: float = 0.3
    retain_tiles: bool = False
    canvas_px_per_deg: float = 12.0
    per_tile_process_s: float = 0.8
    noise_sigma: float = 0.0
    api_token: str = ""

    def __post_init__(self):
        if self.refresh_interval_s <= 0:
            raise ValueError("refresh interval must be > 0")
        if not 0 <= self.sticky_iou <= 1:
            raise ValueError("sticky_iou must be in [0, 1]")


@dataclass(frozen=True)
class RunProfile:
    """Named bundle of room, optics, mount and session settings."""

    name: str
    room: RoomModel
    intrinsics: CameraIntrinsics
    mount: CameraMount
    overlap: float
    session: SessionConfig = field(default_factory=SessionConfig)


FEASIBILITY_TEST = RunProfile(
    name="feasibility-test",
    room=RoomModel(width_m=20.0, depth_m=15.0, seating_front_offset_m=2.0,
                   seat_plane_height_m=1.2),
    intrinsics=CameraIntrinsics(focal_length_mm=35.0, sensor_width_mm=6.4,
                                sensor_height_mm=4.8, image_width_px=640,
                                image_height_px=480),
    mount=CameraMount(position_m=(0.0, 0.0, 4.0),
                      pan_range_deg=(-30.0, 120.0),
                      tilt_range_deg=(-80.0, 15.0),
                      settle_time_s=0.5,
                      slew_rate_deg_s=90.0),
    overlap=0.10,
)

# Desk-scale profile for fast simulated runs: same geometry, smaller buffers.
DESK_TEST = replace(
    FEASIBILITY_TEST,
    name="desk-test",
    intrinsics=replace(FEASIBILITY_TEST.intrinsics,
                       image_width_px=320, image_height_px=240),
    session=SessionConfig(refresh_interval_s=1.0, canvas_px_per_deg=8.0),
)

PROFILES = {p.name: p for p in (FEASIBILITY_TEST, DESK_TEST)}


def get_profile(name: str) -> RunProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; available: {sorted(PROFILES)}")


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw.strip("\"'")


def load_config_file(path: str | Path) -> dict:
    """Parse a flat key=value file (dotted keys, # comments) into a dict."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, raw = line.partition("=")
        values[key.strip()] = _parse_value(raw)
    return values


def session_config_from_values(values: dict) -> SessionConfig:
    """Build a SessionConfig from parsed config-file values."""
    policy = MatchPolicy(
        high_threshold=float(values.get("match.high_threshold", 0.8)),
        low_threshold=float(values.get("match.low_threshold", 0.5)),
        assignment=str(values.get("match.assignment", "greedy")),
    )
    return SessionConfig(
        refresh_interval_s=float(values.get("refresh_interval_s", 90.0)),
        policy=policy,
        sticky_iou=float(values.get("sticky_iou", 0.3)),
        retain_tiles=bool(values.get("privacy.retain_tiles", False)),
        canvas_px_per_deg=float(values.get("canvas_px_per_deg", 12.0)),
        per_tile_process_s=float(values.get("per_tile_process_s", 0.8)),
        noise_sigma=float(values.get("noise_sigma", 0.0)),
        api_token=str(values.get("api.token", "")),
    )
