"""Single operator executable: plan / enroll / simulate / serve / accuracy-harness.

Machine-readable JSON goes to stdout; diagnostics to stderr. Every
subcommand is deterministic given --seed. NAMEMO_CAPTURE selects sim|hw,
NAMEMO_BACKEND selects synthetic|adapter, NAMEMO_CONFIG points at a config
file when --config is not passed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from dataclasses import replace

import numpy as np

from . import api, config as cfg
from .capture import Simulator, embedding_ref_for, generate_scene
from .errors import NamemoError
from .gallery import Gallery, StudentRecord
from .geometry import CameraMount, estimate_cycle_time, plan_scan
from .harness import gallery_from_scene, run_accuracy_harness
from .session import Session
from .vision import identity_embedding, make_backend


def _parse_pair(raw: str, what: str) -> tuple[float, float]:
    try:
        a, b = raw.lower().split("x")
        return float(a), float(b)
    except ValueError:
        raise SystemExit(f"error: {what} must look like 20x15, got {raw!r}")


def _parse_triple(raw: str, what: str) -> tuple[float, float, float]:
    try:
        x, y, z = (float(v) for v in raw.split(","))
        return x, y, z
    except ValueError:
        raise SystemExit(f"error: {what} must look like 0,0,4.0, got {raw!r}")


def _profile_from_args(args) -> cfg.RunProfile:
    profile = cfg.get_profile(args.profile)
    room = profile.room
    intrinsics = profile.intrinsics
    mount = profile.mount
    overlap = profile.overlap
    if getattr(args, "room", None):
        w, d = _parse_pair(args.room, "--room")
        room = replace(room, width_m=w, depth_m=d)
    if getattr(args, "focal", None):
        intrinsics = replace(intrinsics, focal_length_mm=args.focal)
    if getattr(args, "sensor", None):
        sw, sh = _parse_pair(args.sensor, "--sensor")
        intrinsics = replace(intrinsics, sensor_width_mm=sw, sensor_height_mm=sh)
    if getattr(args, "mount", None):
        # custom rig: keep the head's timing but fall back to wide travel limits
        mount = CameraMount(position_m=_parse_triple(args.mount, "--mount"),
                            settle_time_s=mount.settle_time_s,
                            slew_rate_deg_s=mount.slew_rate_deg_s)
    if getattr(args, "overlap", None) is not None:
        overlap = args.overlap
    return replace(profile, room=room, intrinsics=intrinsics, mount=mount,
                   overlap=overlap)


def _session_config(args) -> cfg.SessionConfig:
    path = getattr(args, "config", None) or os.environ.get("NAMEMO_CONFIG")
    if path:
        return cfg.session_config_from_values(cfg.load_config_file(path))
    return cfg.SessionConfig()


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_plan(args) -> int:
    profile = _profile_from_args(args)
    plan = plan_scan(profile.room, profile.intrinsics, profile.mount,
                     profile.overlap)
    _emit({
        "tiles": [{"id": t.tile_id, "pan": t.pan_deg, "tilt": t.tilt_deg}
                  for t in plan.tiles],
        "covered_fraction": plan.covered_fraction,
        "estimated_cycle_s": estimate_cycle_time(
            plan, profile.mount, profile.session.per_tile_process_s),
    })
    return 0


def _make_source(args, profile, scene):
    kind = os.environ.get("NAMEMO_CAPTURE", "sim")
    if kind == "sim":
        return Simulator(scene, profile.room, profile.intrinsics, profile.mount)
    if kind == "hw":
        raise SystemExit("error: NAMEMO_CAPTURE=hw needs a hardware adapter; "
                         "none is bundled")
    raise SystemExit(f"error: NAMEMO_CAPTURE must be sim or hw, got {kind!r}")


def cmd_simulate(args) -> int:
    profile = _profile_from_args(args)
    session_cfg = _session_config(args)
    scene = generate_scene(args.students, profile.room, args.seed)
    plan = plan_scan(profile.room, profile.intrinsics, profile.mount,
                     profile.overlap)
    gallery = gallery_from_scene(scene)
    backend = make_backend(sigma=session_cfg.noise_sigma,
                           adapter_cmd=args.backend_cmd)
    session = Session(plan, profile.intrinsics, gallery, session_cfg,
                      _make_source(args, profile, scene), backend)
    snapshot = session.run_cycle()
    _emit({
        "version": snapshot.version,
        "tiles": snapshot.stats["tiles"],
        "detections": snapshot.stats["detections"],
        "matched_high": snapshot.stats["matched_high"],
        "matched_tentative": snapshot.stats["matched_tentative"],
        "unknown": snapshot.stats["unknown"],
        "cycle_seconds": snapshot.published_at - snapshot.started_at,
    })
    return 0


def cmd_enroll(args) -> int:
    try:
        gallery = Gallery.load(args.gallery)
    except FileNotFoundError:
        gallery = Gallery()
    if args.embedding_file:
        embedding = np.asarray(json.loads(open(args.embedding_file).read()),
                               dtype=np.float64)
    else:
        embedding = identity_embedding(embedding_ref_for(args.from_scene, args.id))
    profile = dict(kv.split("=", 1) for kv in args.profile_field)
    version = gallery.enroll(StudentRecord(
        student_id=args.id, display_name=args.name,
        gallery_embedding=embedding, profile=profile))
    gallery.save(args.gallery)
    _emit({"gallery": args.gallery, "students": len(gallery),
           "gallery_version": version})
    return 0


def cmd_serve(args) -> int:
    profile = _profile_from_args(args)
    session_cfg = _session_config(args)
    scene = generate_scene(args.students, profile.room, args.seed)
    plan = plan_scan(profile.room, profile.intrinsics, profile.mount,
                     profile.overlap)
    gallery = Gallery.load(args.gallery) if args.gallery else gallery_from_scene(scene)
    backend = make_backend(sigma=session_cfg.noise_sigma,
                           adapter_cmd=args.backend_cmd)
    session = Session(plan, profile.intrinsics, gallery, session_cfg,
                      _make_source(args, profile, scene), backend,
                      log_path=args.call_log)

    stop = threading.Event()
    loop = threading.Thread(target=session.run_loop, args=(stop,), daemon=True)
    loop.start()
    print(f"serving on http://{args.host}:{args.port} "
          f"(refresh {session_cfg.refresh_interval_s}s)", file=sys.stderr)
    try:
        api.serve(session, host=args.host, port=args.port,
                  token=session_cfg.api_token, ui_dir=args.ui)
    finally:
        stop.set()
        loop.join(timeout=5)
    return 0


def cmd_accuracy(args) -> int:
    profile = cfg.get_profile(args.profile)
    report = run_accuracy_harness(profile, args.students, args.noise,
                                  args.trials, args.seed, args.assignment)
    _emit(report)
    return 0 if report["duplicate_assignments"] == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="namemo")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_geometry_flags(p):
        p.add_argument("--profile", default="feasibility-test")
        p.add_argument("--room", help="room WxD in meters, e.g. 20x15")
        p.add_argument("--focal", type=float, help="lens focal length, mm")
        p.add_argument("--sensor", help="sensor WxH in mm, e.g. 6.4x4.8")
        p.add_argument("--overlap", type=float, help="tile overlap fraction")
        p.add_argument("--mount", help="camera position X,Y,Z in meters")

    p = sub.add_parser("plan", help="print the pan-tilt scan plan as JSON")
    add_geometry_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run one simulated cycle, print stats")
    add_geometry_flags(p)
    p.add_argument("--students", type=int, default=24)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--config")
    p.add_argument("--backend-cmd", nargs="+", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enroll", help="add one student to a gallery file")
    p.add_argument("--gallery", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--profile", dest="profile_field", action="append",
                   default=[], metavar="KEY=VALUE")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--embedding-file",
                       help="JSON file holding one 128-float unit vector")
    group.add_argument("--from-scene", type=int, metavar="SEED",
                       help="derive the synthetic identity for scene SEED")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("serve", help="run the session loop and dashboard API")
    add_geometry_flags(p)
    p.add_argument("--config")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--students", type=int, default=24)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--gallery", help="gallery file (default: enroll the scene)")
    p.add_argument("--call-log", help="NDJSON call-log path")
    p.add_argument("--backend-cmd", nargs="+", default=None)
    p.add_argument("--ui", help="serve this directory as the dashboard at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("accuracy-harness",
                       help="score pipeline accuracy over simulated cycles")
    p.add_argument("--profile", default="desk-test")
    p.add_argument("--students", type=int, default=161)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--assignment", choices=("greedy", "optimal"),
                   default="greedy")
    p.set_defaults(func=cmd_accuracy)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NamemoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
