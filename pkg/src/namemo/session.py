"""Refresh-cycle orchestration: scan, stitch, recognize, publish.

One Session owns the cycle. Each run captures every planned tile, detects
and embeds faces, composes the panorama, merges duplicate sightings of the
same face from overlapping tiles, assigns identities one-to-one, applies
seat stickiness against the previous snapshot, and publishes an immutable
versioned Snapshot. Raw tile buffers are dropped before publish unless the
config explicitly retains them.

Cadence: the next cycle starts max(refresh_interval - elapsed, 0) after the
previous one finishes, so an overrunning cycle leads to back-to-back scans
instead of a queue.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import SessionConfig
from .errors import CycleAborted, NamemoError, UnknownId
from .gallery import Gallery
from .geometry import CameraIntrinsics, ScanPlan
from .matcher import Band, MatchResult, match_cycle
from .stitcher import (PanoBox, PanoramaCanvas, box_iou, box_overlap_over_min,
                       canvas_ranges_for_plan, compose_panorama, project_box)

log = logging.getLogger(__name__)

# Two detections whose panorama boxes overlap this much (relative to the
# smaller box) are the same physical face seen from overlapping tiles.
# A face straddling a row seam is captured as complementary halves whose
# shared region is just the seam band; with the bundled profiles that
# ratio bottoms out near 0.38, while boxes of *different* students never
# exceed ~0.13, so 0.35 splits the two populations with margin.
MERGE_OVERLAP = 0.35
SNAPSHOT_RETENTION = 5


@dataclass(frozen=True)
class CallEvent:
    timestamp: float
    student_id: str
    source: str = "teacher_click"
    note: str | None = None


@dataclass(frozen=True)
class Snapshot:
    version: int
    started_at: float
    published_at: float
    panorama: PanoramaCanvas
    annotations: tuple[tuple[PanoBox, MatchResult], ...]
    stats: dict
    display_names: dict = field(default_factory=dict)
    retained_tiles: tuple = ()


class Session:
    """Owns the scan/recognize/publish cycle and the snapshot history."""

    def __init__(self, plan: ScanPlan, intrinsics: CameraIntrinsics,
                 gallery: Gallery, config: SessionConfig, source, backend,
                 log_path: str | Path | None = None):
        self.plan = plan
        self.intrinsics = intrinsics
        self.gallery = gallery
        self.config = config
        self.source = source
        self.backend = backend
        self._az_range, self._el_range = canvas_ranges_for_plan(plan, intrinsics)
        self._version = 0
        self._epoch = 0
        self._latest: Snapshot | None = None
        self._history: list[Snapshot] = []
        self._publish_lock = threading.Lock()
        self._subscribers: list = []
        self._call_log: list[CallEvent] = []
        self._log_path = Path(log_path) if log_path else None
        self._cycle_lock = threading.Lock()

    # -- snapshot access ---------------------------------------------------

    @property
    def latest(self) -> Snapshot | None:
        return self._latest

    def get_snapshot(self, version: int) -> Snapshot | None:
        for snap in self._history:
            if snap.version == version:
                return snap
        return None

    def subscribe(self, callback) -> None:
        """callback(snapshot) fires after every publish, on the cycle thread."""
        self._subscribers.append(callback)

    # -- the cycle ----------------------------------------------------------

    def run_cycle(self, stop_event: threading.Event | None = None) -> Snapshot | None:
        """Run one full cycle; returns None if stopped mid-capture."""
        with self._cycle_lock:
            return self._run_cycle_locked(stop_event)

    def _run_cycle_locked(self, stop_event):
        started_at = time.time()
        epoch = self._epoch

        tiles = []
        failures = 0
        for pose in self.plan.tiles:
            if stop_event is not None and stop_event.is_set():
                return None  # abort in-flight cycle, publish nothing
            try:
                tiles.append(self.source.capture_tile(pose, epoch))
            except NamemoError as exc:
                failures += 1
                log.warning("tile %d capture failed: %s", pose.tile_id, exc)
        if failures > len(self.plan.tiles) / 2:
            raise CycleAborted(f"{failures}/{len(self.plan.tiles)} captures failed")

        detections = []
        for tile in tiles:
            detections.extend(self.backend.detect_and_embed(tile))

        panorama = compose_panorama(
            tiles, self.plan, self.intrinsics,
            px_per_deg=self.config.canvas_px_per_deg,
            az_range=self._az_range, el_range=self._el_range)

        boxes = [project_box(d.bbox, self.plan.pose(d.tile_id), panorama,
                             self.intrinsics) for d in detections]
        merged = _merge_duplicates(detections, boxes)

        ids, matrix = self.gallery.matching_view()
        results = match_cycle([detections[i] for i in merged], ids, matrix,
                              self.config.policy)
        annotations = tuple(zip((boxes[i] for i in merged), results))
        self._apply_stickiness(annotations, set(ids))

        stats = {
            "tiles": len(tiles),
            "detections": len(results),
            "matched_high": sum(r.band is Band.HIGH for _, r in annotations),
            "matched_tentative": sum(r.band is Band.TENTATIVE for _, r in annotations),
            "unknown": sum(r.band is Band.UNKNOWN for _, r in annotations),
        }

        # Names resolve at publish time so later consent changes never
        # rewrite an already-published snapshot.
        display_names = {}
        for _, res in annotations:
            if res.student_id is not None:
                display_names[res.student_id] = \
                    self.gallery.get(res.student_id).display_name

        retained = tuple(tiles) if self.config.retain_tiles else ()
        del tiles, detections, boxes  # raw buffers must not outlive the cycle

        self._epoch += 1
        with self._publish_lock:
            self._version += 1
            snapshot = Snapshot(self._version, started_at, time.time(),
                                panorama, annotations, stats, display_names,
                                retained)
            self._history.append(snapshot)
            del self._history[:-SNAPSHOT_RETENTION]
            self._latest = snapshot
        for callback in list(self._subscribers):
            try:
                callback(snapshot)
            except Exception:
                log.exception("snapshot subscriber failed")
        return snapshot

    def _apply_stickiness(self, annotations, eligible_ids: set) -> None:
        """Let a weak detection inherit the identity that held its seat.

        Only non-high detections inherit, the inherited band is always
        tentative, an identity already used this cycle is never duplicated,
        and an identity that left the matching view (opt-out) is never
        resurrected from the previous snapshot.
        """
        previous = self._latest
        if previous is None:
            return
        prev_high = [(box, res.student_id) for box, res in previous.annotations
                     if res.band is Band.HIGH and res.student_id in eligible_ids]
        if not prev_high:
            return
        used = {res.student_id for _, res in annotations if res.student_id}
        for box, res in annotations:
            if res.band is Band.HIGH:
                continue
            best_id, best_iou = None, self.config.sticky_iou
            for prev_box, sid in prev_high:
                iou = box_iou(box, prev_box)
                if iou >= best_iou and sid not in used:
                    best_id, best_iou = sid, iou
            if best_id is not None:
                if res.student_id in used:
                    used.discard(res.student_id)
                res.student_id = best_id
                res.band = Band.TENTATIVE
                used.add(best_id)

    # -- teacher interaction log ---------------------------------------------

    @property
    def call_log(self) -> list[CallEvent]:
        return list(self._call_log)

    def record_call(self, student_id: str, note: str | None = None,
                    source: str = "teacher_click") -> int:
        """Append a name-was-called event; returns its log position."""
        if self.gallery.visible_profile(student_id) is None:
            raise UnknownId(student_id)
        event = CallEvent(time.time(), student_id, source, note)
        self._call_log.append(event)
        if self._log_path:
            with self._log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "timestamp": event.timestamp,
                    "student_id": event.student_id,
                    "source": event.source,
                    "note": event.note,
                }) + "\n")
        return len(self._call_log) - 1

    # -- the loop -------------------------------------------------------------

    def run_loop(self, stop_event: threading.Event,
                 max_cycles: int | None = None) -> int:
        """Cycle until stopped; survives individual cycle failures."""
        completed = 0
        while not stop_event.is_set():
            if max_cycles is not None and completed >= max_cycles:
                break
            begun = time.monotonic()
            try:
                if self.run_cycle(stop_event) is not None:
                    completed += 1
            except NamemoError as exc:
                log.error("cycle failed: %s", exc)
            elapsed = time.monotonic() - begun
            if stop_event.wait(max(self.config.refresh_interval_s - elapsed, 0.0)):
                break
        return completed


def _merge_duplicates(detections, boxes) -> list[int]:
    """Indices of one representative per physical face.

    Clusters detections whose panorama boxes overlap by MERGE_OVERLAP of
    the smaller box (union-find, so chains across several tiles merge too)
    and keeps the highest-scoring member, which is the least edge-clipped.
    """
    n = len(detections)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    order = sorted(range(n), key=lambda i: boxes[i].x)
    for a in range(n):
        i = order[a]
        right_i = boxes[i].x + boxes[i].w
        for b in range(a + 1, n):
            j = order[b]
            if boxes[j].x > right_i:
                break
            if box_overlap_over_min(boxes[i], boxes[j]) >= MERGE_OVERLAP:
                parent[find(i)] = find(j)

    best: dict[int, int] = {}
    for i in range(n):
        root = find(i)
        if root not in best or _score_key(detections[i]) > _score_key(detections[best[root]]):
            best[root] = i
    return sorted(best.values())


def _score_key(det):
    return (det.det_score, -det.tile_id, -det.index)
