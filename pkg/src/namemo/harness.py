"""Desk-scale recognition accuracy harness.

Runs full scan/stitch/match cycles against the simulator with fresh noise
draws each cycle and scores the published annotations against ground truth.
Reported figures:

* top1_accuracy: fraction of present students whose own face ended up
  labeled with their id in the published snapshot.
* high_band_rate: fraction of published annotations in the high band.
* duplicate_assignments: total count of ids appearing on more than one
  annotation within a single snapshot (must be zero; one-to-one matching
  plus the stickiness guard make anything else a bug).
"""

from __future__ import annotations

from collections import Counter

from .capture import Simulator, generate_scene
from .config import RunProfile, SessionConfig
from .gallery import Gallery, StudentRecord
from .geometry import plan_scan
from .matcher import Band, MatchPolicy
from .session import Session
from .vision import SyntheticBackend, identity_embedding


class RecordingSource:
    """Simulator wrapper remembering each tile's ground truth for scoring."""

    def __init__(self, simulator: Simulator):
        self._simulator = simulator
        self.truth: dict[int, dict[int, str]] = {}
        self._epoch = None

    def capture_tile(self, pose, epoch=0):
        if epoch != self._epoch:
            self.truth = {}
            self._epoch = epoch
        tile = self._simulator.capture_tile(pose, epoch)
        self.truth[tile.tile_id] = {
            i: det.student_id for i, det in enumerate(tile.sim_truth)}
        return tile


def gallery_from_scene(scene) -> Gallery:
    """Enroll every scene student with their true embedding."""
    gallery = Gallery()
    for student in scene.students:
        ref = f"{scene.seed}:{student.student_id}"
        gallery.enroll(StudentRecord(
            student_id=student.student_id,
            display_name=f"Student {student.student_id[1:]}",
            gallery_embedding=identity_embedding(ref),
        ))
    return gallery


def run_accuracy_harness(profile: RunProfile, n_students: int, noise_sigma: float,
                         trials: int, seed: int,
                         assignment: str = "greedy") -> dict:
    scene = generate_scene(n_students, profile.room, seed)
    plan = plan_scan(profile.room, profile.intrinsics, profile.mount,
                     profile.overlap)
    gallery = gallery_from_scene(scene)
    source = RecordingSource(
        Simulator(scene, profile.room, profile.intrinsics, profile.mount))
    config = SessionConfig(
        refresh_interval_s=profile.session.refresh_interval_s,
        policy=MatchPolicy(assignment=assignment),
        canvas_px_per_deg=profile.session.canvas_px_per_deg,
    )
    session = Session(plan, profile.intrinsics, gallery, config, source,
                      SyntheticBackend(sigma=noise_sigma))

    present = [s.student_id for s in scene.students if s.present]
    correct_students = 0
    total_students = 0
    high = 0
    annotations_seen = 0
    duplicates = 0

    for _ in range(trials):
        snapshot = session.run_cycle()
        assigned = Counter()
        correct_ids = set()
        for _, res in snapshot.annotations:
            annotations_seen += 1
            if res.band is Band.HIGH:
                high += 1
            if res.student_id is None:
                continue
            assigned[res.student_id] += 1
            tile_id, index = res.detection_ref
            if source.truth.get(tile_id, {}).get(index) == res.student_id:
                correct_ids.add(res.student_id)
        duplicates += sum(count - 1 for count in assigned.values())
        total_students += len(present)
        correct_students += sum(sid in correct_ids for sid in present)

    return {
        "top1_accuracy": correct_students / total_students if total_students else 1.0,
        "high_band_rate": high / annotations_seen if annotations_seen else 0.0,
        "duplicate_assignments": duplicates,
        "trials": trials,
        "students": n_students,
        "noise_sigma": noise_sigma,
        "assignment": assignment,
    }
