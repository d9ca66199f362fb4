import json

import numpy as np
import pytest

from namemo.cli import main
from namemo.gallery import Gallery
from namemo.vision import identity_embedding


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


class TestPlan:
    def test_feasibility_profile_63_tiles(self, capsys):
        code, plan = run_cli(capsys, "plan")
        assert code == 0
        assert len(plan["tiles"]) == 63
        assert plan["covered_fraction"] == 1.0
        assert plan["estimated_cycle_s"] <= 90.0
        assert {"id", "pan", "tilt"} == set(plan["tiles"][0])

    def test_custom_geometry_flags(self, capsys):
        code, plan = run_cli(capsys, "plan", "--room", "6x5", "--focal", "8",
                             "--sensor", "6.4x4.8", "--overlap", "0.2",
                             "--mount", "3,0,2")
        assert code == 0
        assert 1 <= len(plan["tiles"]) < 63

    def test_bad_room_flag(self, capsys):
        with pytest.raises(SystemExit):
            main(["plan", "--room", "20by15"])


class TestSimulate:
    def test_stats_and_determinism(self, capsys):
        code, a = run_cli(capsys, "simulate", "--profile", "desk-test",
                          "--students", "12", "--seed", "5")
        assert code == 0
        assert a["tiles"] == 63
        assert a["matched_high"] == 12
        assert a["unknown"] == 0
        _, b = run_cli(capsys, "simulate", "--profile", "desk-test",
                       "--students", "12", "--seed", "5")
        for key in ("tiles", "detections", "matched_high", "matched_tentative",
                    "unknown"):
            assert a[key] == b[key]

    def test_hw_capture_requires_adapter(self, capsys, monkeypatch):
        monkeypatch.setenv("NAMEMO_CAPTURE", "hw")
        with pytest.raises(SystemExit):
            main(["simulate", "--students", "2", "--seed", "1"])


class TestEnroll:
    def test_from_scene_round_trips(self, capsys, tmp_path):
        path = tmp_path / "gallery.ndjson"
        code, out = run_cli(capsys, "enroll", "--gallery", str(path),
                            "--id", "s001", "--name", "Ada Lovelace",
                            "--profile", "program=CS", "--profile", "row=1",
                            "--from-scene", "7")
        assert code == 0 and out["students"] == 1
        g = Gallery.load(path)
        rec = g.get("s001")
        assert rec.profile == {"program": "CS", "row": "1"}
        assert np.array_equal(rec.gallery_embedding, identity_embedding("7:s001"))

    def test_embedding_file(self, capsys, tmp_path):
        emb = identity_embedding("anything")
        emb_path = tmp_path / "emb.json"
        emb_path.write_text(json.dumps(emb.tolist()))
        path = tmp_path / "gallery.ndjson"
        code, _ = run_cli(capsys, "enroll", "--gallery", str(path),
                          "--id", "x1", "--name", "X",
                          "--embedding-file", str(emb_path))
        assert code == 0
        assert np.array_equal(Gallery.load(path).get("x1").gallery_embedding, emb)

    def test_duplicate_enrollment_fails(self, capsys, tmp_path):
        path = tmp_path / "gallery.ndjson"
        run_cli(capsys, "enroll", "--gallery", str(path), "--id", "s001",
                "--name", "A", "--from-scene", "7")
        code = main(["enroll", "--gallery", str(path), "--id", "s001",
                     "--name", "B", "--from-scene", "7"])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestAccuracyHarness:
    def test_zero_noise_perfect(self, capsys):
        code, report = run_cli(capsys, "accuracy-harness", "--students", "30",
                               "--noise", "0", "--trials", "2", "--seed", "4")
        assert code == 0
        assert report["top1_accuracy"] == 1.0
        assert report["high_band_rate"] == 1.0
        assert report["duplicate_assignments"] == 0

    def test_deterministic_given_seed(self, capsys):
        _, a = run_cli(capsys, "accuracy-harness", "--students", "20",
                       "--noise", "0.1", "--trials", "2", "--seed", "9")
        _, b = run_cli(capsys, "accuracy-harness", "--students", "20",
                       "--noise", "0.1", "--trials", "2", "--seed", "9")
        assert a == b
