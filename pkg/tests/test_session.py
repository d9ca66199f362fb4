import gc
import json
import threading
import time

import numpy as np
import pytest

from namemo.capture import Simulator, generate_scene, live_tile_count
from namemo.config import SessionConfig
from namemo.errors import CaptureTimeout, CycleAborted, UnknownId
from namemo.gallery import Consent
from namemo.harness import gallery_from_scene
from namemo.matcher import Band
from namemo.session import MERGE_OVERLAP, Session, _merge_duplicates
from namemo.stitcher import PanoBox
from namemo.vision import SyntheticBackend, identity_embedding


def make_session(desk, desk_plan, n_students=24, seed=3, sigma=0.0,
                 config=None, log_path=None, source_wrap=None):
    scene = generate_scene(n_students, desk.room, seed)
    gallery = gallery_from_scene(scene)
    source = Simulator(scene, desk.room, desk.intrinsics, desk.mount)
    if source_wrap:
        source = source_wrap(source)
    config = config or SessionConfig(refresh_interval_s=0.01, canvas_px_per_deg=6.0)
    session = Session(desk_plan, desk.intrinsics, gallery, config, source,
                      SyntheticBackend(sigma=sigma))
    return session, scene


class ScriptedBackend:
    """Synthetic backend whose per-epoch similarity to truth is forced."""

    def __init__(self, cosine_by_epoch):
        self.cosine_by_epoch = cosine_by_epoch
        self._rng = np.random.default_rng(77)
        self._inner = SyntheticBackend(sigma=0.0)

    def detect_and_embed(self, tile):
        dets = self._inner.detect_and_embed(tile)
        cos = self.cosine_by_epoch.get(tile.noise_key[1])
        if cos is None:
            return dets
        forced = []
        for det, truth in zip(dets, tile.sim_truth):
            true = identity_embedding(truth.embedding_ref)
            ortho = self._rng.normal(size=true.shape)
            ortho -= (ortho @ true) * true
            ortho /= np.linalg.norm(ortho)
            emb = cos * true + np.sqrt(1 - cos ** 2) * ortho
            forced.append(type(det)(det.tile_id, det.index, det.bbox,
                                    det.landmarks, emb, det.det_score))
        return forced


class TestRunCycle:
    def test_zero_noise_all_high(self, desk, desk_plan):
        session, scene = make_session(desk, desk_plan, n_students=24)
        snap = session.run_cycle()
        assert snap.stats["detections"] == 24
        assert snap.stats["matched_high"] == 24
        assert snap.stats["unknown"] == 0
        assert snap.stats["tiles"] == len(desk_plan.tiles)
        named = [r.student_id for _, r in snap.annotations]
        assert sorted(named) == sorted(s.student_id for s in scene.students)

    def test_empty_scene_still_publishes(self, desk, desk_plan):
        session, _ = make_session(desk, desk_plan, n_students=0)
        snap = session.run_cycle()
        assert snap.annotations == ()
        assert snap.version == 1
        assert session.run_cycle().version == 2

    def test_versions_strictly_increase(self, desk, desk_plan):
        session, _ = make_session(desk, desk_plan, n_students=2)
        versions = [session.run_cycle().version for _ in range(4)]
        assert versions == [1, 2, 3, 4]

    def test_history_retains_last_five(self, desk, desk_plan):
        session, _ = make_session(desk, desk_plan, n_students=1)
        for _ in range(7):
            session.run_cycle()
        assert session.get_snapshot(1) is None
        assert session.get_snapshot(2) is None
        assert all(session.get_snapshot(v) is not None for v in range(3, 8))

    def test_display_names_resolved_at_publish(self, desk, desk_plan):
        session, scene = make_session(desk, desk_plan, n_students=3)
        snap = session.run_cycle()
        sid = scene.students[0].student_id
        assert snap.display_names[sid] == f"Student {sid[1:]}"

    def test_abort_on_majority_capture_failure(self, desk, desk_plan):
        class Flaky:
            def __init__(self, inner):
                self.inner = inner
                self.n = 0

            def capture_tile(self, pose, epoch=0):
                self.n += 1
                if self.n % 3 != 0:
                    raise CaptureTimeout("lens cap on")
                return self.inner.capture_tile(pose, epoch)

        session, _ = make_session(desk, desk_plan, n_students=2, source_wrap=Flaky)
        with pytest.raises(CycleAborted):
            session.run_cycle()
        assert session.latest is None

    def test_minority_failures_tolerated(self, desk, desk_plan):
        class SometimesFlaky:
            def __init__(self, inner):
                self.inner = inner
                self.n = 0

            def capture_tile(self, pose, epoch=0):
                self.n += 1
                if self.n % 10 == 0:
                    raise CaptureTimeout("hiccup")
                return self.inner.capture_tile(pose, epoch)

        session, _ = make_session(desk, desk_plan, n_students=2,
                                  source_wrap=SometimesFlaky)
        snap = session.run_cycle()
        assert snap.stats["tiles"] < len(desk_plan.tiles)


class TestStickiness:
    def test_noise_spike_inherits_identity_as_tentative(self, desk, desk_plan):
        scene = generate_scene(1, desk.room, seed=3)
        gallery = gallery_from_scene(scene)
        backend = ScriptedBackend({1: 0.45})  # epoch 1: similarity drops to 0.45
        session = Session(desk_plan, desk.intrinsics, gallery,
                          SessionConfig(refresh_interval_s=0.01, sticky_iou=0.3,
                                        canvas_px_per_deg=6.0),
                          Simulator(scene, desk.room, desk.intrinsics, desk.mount),
                          backend)
        first = session.run_cycle()
        assert first.stats["matched_high"] == 1
        second = session.run_cycle()
        _, res = second.annotations[0]
        assert res.band is Band.TENTATIVE
        assert res.student_id == scene.students[0].student_id
        assert res.confidence == pytest.approx(0.45, abs=1e-6)

    def test_no_inherit_without_previous_high(self, desk, desk_plan):
        scene = generate_scene(1, desk.room, seed=3)
        session = Session(desk_plan, desk.intrinsics, gallery_from_scene(scene),
                          SessionConfig(refresh_interval_s=0.01, sticky_iou=0.3,
                                        canvas_px_per_deg=6.0),
                          Simulator(scene, desk.room, desk.intrinsics, desk.mount),
                          ScriptedBackend({0: 0.45, 1: 0.45}))
        first = session.run_cycle()
        assert first.stats["unknown"] == 1
        second = session.run_cycle()
        _, res = second.annotations[0]
        assert res.student_id is None
        assert res.band is Band.UNKNOWN

    def test_stickiness_never_upgrades_to_high(self, desk, desk_plan):
        scene = generate_scene(1, desk.room, seed=3)
        session = Session(desk_plan, desk.intrinsics, gallery_from_scene(scene),
                          SessionConfig(refresh_interval_s=0.01, sticky_iou=0.3,
                                        canvas_px_per_deg=6.0),
                          Simulator(scene, desk.room, desk.intrinsics, desk.mount),
                          ScriptedBackend({1: 0.6}))
        session.run_cycle()
        second = session.run_cycle()
        _, res = second.annotations[0]
        assert res.band is Band.TENTATIVE  # tentative on its own merits, id kept

    def test_stickiness_never_duplicates_identity(self, desk, desk_plan):
        # two students; one keeps matching high, the other goes dark: the
        # dark seat must not inherit the bright student's id
        scene = generate_scene(2, desk.room, seed=3)
        sid_a, sid_b = (s.student_id for s in scene.students)

        class HalfDark:
            def __init__(self):
                self._inner = SyntheticBackend(sigma=0.0)
                self._rng = np.random.default_rng(5)

            def detect_and_embed(self, tile):
                dets = self._inner.detect_and_embed(tile)
                if tile.noise_key[1] == 0:
                    return dets
                out = []
                for det, truth in zip(dets, tile.sim_truth):
                    if truth.student_id == sid_b:
                        noise = self._rng.normal(size=det.embedding.shape)
                        noise /= np.linalg.norm(noise)
                        det = type(det)(det.tile_id, det.index, det.bbox,
                                        det.landmarks, noise, det.det_score)
                    out.append(det)
                return out

        session = Session(desk_plan, desk.intrinsics, gallery_from_scene(scene),
                          SessionConfig(refresh_interval_s=0.01, sticky_iou=0.3,
                                        canvas_px_per_deg=6.0),
                          Simulator(scene, desk.room, desk.intrinsics, desk.mount),
                          HalfDark())
        session.run_cycle()
        second = session.run_cycle()
        named = [r.student_id for _, r in second.annotations if r.student_id]
        assert len(named) == len(set(named))
        by_sid = {r.student_id: r for _, r in second.annotations if r.student_id}
        assert by_sid[sid_a].band is Band.HIGH
        assert by_sid[sid_b].band is Band.TENTATIVE  # inherited own seat


class TestPrivacy:
    def test_tiles_released_after_publish(self, desk, desk_plan):
        session, _ = make_session(desk, desk_plan, n_students=4)
        session.run_cycle()
        gc.collect()
        assert live_tile_count() == 0

    def test_retain_tiles_keeps_buffers(self, desk, desk_plan):
        config = SessionConfig(refresh_interval_s=0.01, retain_tiles=True,
                               canvas_px_per_deg=6.0)
        session, _ = make_session(desk, desk_plan, n_students=4, config=config)
        snap = session.run_cycle()
        gc.collect()
        assert len(snap.retained_tiles) == len(desk_plan.tiles)
        assert live_tile_count() >= len(desk_plan.tiles)

    def test_opted_out_student_reports_unknown(self, desk, desk_plan):
        session, scene = make_session(desk, desk_plan, n_students=4)
        victim = scene.students[1].student_id
        first = session.run_cycle()
        assert victim in {r.student_id for _, r in first.annotations}
        session.gallery.set_consent(victim, Consent.OPTED_OUT)
        second = session.run_cycle()
        named = {r.student_id for _, r in second.annotations if r.student_id}
        assert victim not in named
        assert second.stats["unknown"] >= 1
        # opting back in restores them next cycle
        session.gallery.set_consent(victim, Consent.ENROLLED)
        third = session.run_cycle()
        assert victim in {r.student_id for _, r in third.annotations}


class TestCallLog:
    def test_round_trip_and_positions(self, desk, desk_plan, tmp_path):
        log = tmp_path / "calls.ndjson"
        session, scene = make_session(desk, desk_plan, n_students=5, log_path=None)
        session._log_path = log
        sid = scene.students[0].student_id
        pos = session.record_call(sid, note="asked about pipelining")
        assert pos == 0
        event = session.call_log[0]
        assert event.student_id == sid
        assert event.note == "asked about pipelining"
        on_disk = json.loads(log.read_text().splitlines()[0])
        assert on_disk["student_id"] == sid
        assert on_disk["source"] == "teacher_click"

    def test_97_distinct_calls(self, desk, desk_plan):
        session, scene = make_session(desk, desk_plan, n_students=100)
        for s in scene.students[:97]:
            session.record_call(s.student_id)
        log = session.call_log
        assert len(log) == 97
        assert len({e.student_id for e in log}) == 97

    def test_unknown_id_leaves_log_unchanged(self, desk, desk_plan):
        session, _ = make_session(desk, desk_plan, n_students=2)
        with pytest.raises(UnknownId):
            session.record_call("ghost")
        assert session.call_log == []

    def test_opted_out_treated_as_unknown(self, desk, desk_plan):
        session, scene = make_session(desk, desk_plan, n_students=2)
        sid = scene.students[0].student_id
        session.gallery.set_consent(sid, Consent.OPTED_OUT)
        with pytest.raises(UnknownId):
            session.record_call(sid)


class TestLoop:
    def test_three_cycles_in_order(self, desk, desk_plan):
        session, _ = make_session(desk, desk_plan, n_students=1)
        seen = []
        session.subscribe(lambda snap: seen.append(snap.version))
        stop = threading.Event()
        session.run_loop(stop, max_cycles=3)
        assert seen == [1, 2, 3]

    def test_overrun_goes_back_to_back_without_overlap(self, desk, desk_plan):
        class Slow:
            def __init__(self, inner):
                self.inner = inner

            def capture_tile(self, pose, epoch=0):
                time.sleep(0.002)
                return self.inner.capture_tile(pose, epoch)

        config = SessionConfig(refresh_interval_s=0.01, canvas_px_per_deg=6.0)
        session, _ = make_session(desk, desk_plan, n_students=1, config=config,
                                  source_wrap=Slow)
        stop = threading.Event()
        session.run_loop(stop, max_cycles=3)  # each cycle far exceeds 10ms
        snaps = [session.get_snapshot(v) for v in (1, 2, 3)]
        for prev, nxt in zip(snaps, snaps[1:]):
            assert nxt.started_at >= prev.published_at  # never overlapping
            assert nxt.started_at - prev.published_at < 0.25  # and back to back

    def test_stop_mid_capture_publishes_nothing(self, desk, desk_plan):
        stop = threading.Event()

        class StopAfterFive:
            def __init__(self, inner):
                self.inner = inner
                self.n = 0

            def capture_tile(self, pose, epoch=0):
                self.n += 1
                if self.n == 5:
                    stop.set()
                return self.inner.capture_tile(pose, epoch)

        session, _ = make_session(desk, desk_plan, n_students=1,
                                  source_wrap=StopAfterFive)
        assert session.run_cycle(stop) is None
        assert session.latest is None

    def test_at_most_one_cycle_in_flight(self, desk, desk_plan):
        session, _ = make_session(desk, desk_plan, n_students=2)
        done = []
        threads = [threading.Thread(target=lambda: done.append(session.run_cycle()))
                   for _ in range(3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        snaps = sorted(done, key=lambda s: s.version)
        assert [s.version for s in snaps] == [1, 2, 3]
        for prev, nxt in zip(snaps, snaps[1:]):
            assert nxt.started_at >= prev.published_at  # cycles fully serialized

    def test_loop_survives_cycle_failures(self, desk, desk_plan):
        class FailFirst:
            def __init__(self, inner):
                self.inner = inner
                self.calls = 0

            def capture_tile(self, pose, epoch=0):
                self.calls += 1
                if self.calls <= len(desk_plan.tiles):
                    raise CaptureTimeout("warming up")
                return self.inner.capture_tile(pose, epoch)

        session, _ = make_session(desk, desk_plan, n_students=1,
                                  source_wrap=FailFirst)
        stop = threading.Event()
        completed = session.run_loop(stop, max_cycles=1)
        assert completed == 1
        assert session.latest.version == 1  # aborted cycle published nothing


class TestMergeDuplicates:
    class FakeDet:
        def __init__(self, tile_id, index, score):
            self.tile_id = tile_id
            self.index = index
            self.det_score = score

    def test_complementary_halves_merge(self):
        # geometry as seen at a row seam: shared band ~42% of either half
        top = PanoBox(10.0, 10.0, 20.0, 12.0, 0)
        bottom = PanoBox(10.0, 17.0, 20.0, 12.0, 1)
        dets = [self.FakeDet(0, 0, 0.6), self.FakeDet(1, 0, 0.9)]
        kept = _merge_duplicates(dets, [top, bottom])
        assert kept == [1]  # higher score survives

    def test_neighbors_stay_separate(self):
        a = PanoBox(10.0, 10.0, 10.0, 10.0, 0)
        b = PanoBox(10.0, 19.5, 10.0, 10.0, 1)  # 5% overlap band
        dets = [self.FakeDet(0, 0, 0.5), self.FakeDet(1, 0, 0.5)]
        assert _merge_duplicates(dets, [a, b]) == [0, 1]

    def test_chain_merges_transitively(self):
        boxes = [PanoBox(0.0, float(i * 3), 10.0, 10.0, i) for i in range(3)]
        dets = [self.FakeDet(i, 0, 0.5 + i * 0.1) for i in range(3)]
        assert _merge_duplicates(dets, boxes) == [2]

    def test_threshold_constant_sane(self):
        assert 0.13 < MERGE_OVERLAP < 0.46
