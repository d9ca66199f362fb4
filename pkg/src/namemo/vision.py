"""Detect -> align -> embed stage, pluggable behind one call.

Two backends ship: a deterministic synthetic backend that reads the
simulator's ground truth and emits reproducible noisy embeddings (the test
workhorse), and an adapter that talks newline-delimited JSON over stdio to
an external inference process hosting real models. Select with
NAMEMO_BACKEND=synthetic|adapter.

Adapter wire format, one JSON object per line:
  request  {"tile_id": int, "png_b64": str}
  reply    {"detections": [{"bbox": [x, y, w, h],
                            "landmarks": [[x, y] * 5],
                            "embedding": [f * 128],
                            "score": s}, ...]}
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .capture import TileImage
from .errors import BackendUnavailable, DegenerateLandmarks, MalformedAdapterReply

EMBED_DIM = 128

# Conventional frontal five-point template (eyes, nose tip, mouth corners)
# in a 112x112 aligned crop.
CANONICAL_LANDMARKS = np.array([
    [38.2946, 51.6963],
    [73.5318, 51.5014],
    [56.0252, 71.7366],
    [41.5493, 92.3655],
    [70.7299, 92.2041],
], dtype=np.float64)
CANONICAL_CROP = 112.0


@dataclass(frozen=True)
class Detection:
    tile_id: int
    index: int
    bbox: tuple[float, float, float, float]
    landmarks: np.ndarray  # (5, 2) tile pixels
    embedding: np.ndarray  # (EMBED_DIM,) unit norm
    det_score: float

    @property
    def ref(self) -> tuple[int, int]:
        return (self.tile_id, self.index)


@dataclass(frozen=True)
class AlignTransform:
    scale: float
    rotation_deg: float
    translation: tuple[float, float]

    def apply(self, points: np.ndarray) -> np.ndarray:
        r = np.radians(self.rotation_deg)
        rot = np.array([[np.cos(r), -np.sin(r)], [np.sin(r), np.cos(r)]])
        return self.scale * (np.atleast_2d(points) @ rot.T) + self.translation


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def is_unit(v: np.ndarray, tol: float = 1e-6) -> bool:
    v = np.asarray(v)
    return v.shape == (EMBED_DIM,) and abs(float(np.linalg.norm(v)) - 1.0) <= tol


def _seed_from(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def identity_embedding(ref: str) -> np.ndarray:
    """Stable unit embedding for a ground-truth identity reference."""
    rng = np.random.default_rng(_seed_from("identity", ref))
    return unit(rng.normal(size=EMBED_DIM))


def noisy_embedding(true_vec: np.ndarray, sigma: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Perturb a unit embedding with per-component Gaussian noise, renormalized."""
    if sigma == 0:
        return np.array(true_vec, dtype=np.float64)
    return unit(np.asarray(true_vec, dtype=np.float64)
                + rng.normal(scale=sigma, size=EMBED_DIM))


def landmarks_for_bbox(bbox) -> np.ndarray:
    """Canonical template placed into a detection bbox."""
    x, y, w, h = bbox
    pts = CANONICAL_LANDMARKS / CANONICAL_CROP
    return np.stack([x + pts[:, 0] * w, y + pts[:, 1] * h], axis=1)


class SyntheticBackend:
    """Ground-truth-driven detector for simulator tiles.

    Emits one Detection per visible student; the embedding is the student's
    true vector plus Gaussian noise seeded by (scene seed, cycle epoch,
    tile id, student id), so every call is reproducible.
    """

    def __init__(self, sigma: float = 0.0):
        self.sigma = sigma

    def detect_and_embed(self, tile: TileImage) -> list[Detection]:
        if tile.sim_truth is None:
            raise BackendUnavailable(
                "synthetic backend needs simulator tiles with ground truth")
        W = tile.pixels.shape[1]
        H = tile.pixels.shape[0]
        detections = []
        for i, truth in enumerate(tile.sim_truth):
            rng = np.random.default_rng(
                _seed_from("noise", *tile.noise_key, tile.tile_id, truth.student_id))
            emb = noisy_embedding(identity_embedding(truth.embedding_ref),
                                  self.sigma, rng)
            bx, by, bw, bh = truth.bbox
            nx = abs((bx + bw / 2.0) - W / 2.0) / (W / 2.0)
            ny = abs((by + bh / 2.0) - H / 2.0) / (H / 2.0)
            score = 0.5 + 0.5 * (1.0 - min(max(nx, ny), 1.0))
            detections.append(Detection(tile.tile_id, i, truth.bbox,
                                        landmarks_for_bbox(truth.bbox), emb, score))
        return detections


class AdapterBackend:
    """Bridges detect_and_embed to an external process over stdio NDJSON.

    One adapter process serves all tiles; requests are serialized and
    strictly request/reply in order.
    """

    def __init__(self, cmd: list[str]):
        try:
            self._proc = subprocess.Popen(
                cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True)
        except OSError as exc:
            raise BackendUnavailable(f"cannot launch adapter {cmd!r}: {exc}") from exc
        self._lock = threading.Lock()

    def close(self):
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def detect_and_embed(self, tile: TileImage) -> list[Detection]:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(tile.pixels).save(buf, format="PNG")
        request = json.dumps({
            "tile_id": tile.tile_id,
            "png_b64": base64.b64encode(buf.getvalue()).decode("ascii"),
        })
        with self._lock:
            if self._proc.poll() is not None:
                raise BackendUnavailable("adapter process has exited")
            try:
                self._proc.stdin.write(request + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise BackendUnavailable(f"adapter pipe broken: {exc}") from exc
        if not line:
            raise BackendUnavailable("adapter closed its output stream")
        return self._parse_reply(line, tile.tile_id)

    @staticmethod
    def _parse_reply(line: str, tile_id: int) -> list[Detection]:
        try:
            reply = json.loads(line)
            raw = reply["detections"]
            detections = []
            for i, d in enumerate(raw):
                bbox = tuple(float(v) for v in d["bbox"])
                landmarks = np.asarray(d["landmarks"], dtype=np.float64)
                emb = np.asarray(d["embedding"], dtype=np.float64)
                score = float(d["score"])
                if len(bbox) != 4 or landmarks.shape != (5, 2) or not is_unit(emb):
                    raise ValueError("bad shapes")
                if not 0 <= score <= 1:
                    raise ValueError("score out of range")
                detections.append(Detection(tile_id, i, bbox, landmarks, emb, score))
            return detections
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise MalformedAdapterReply(f"bad adapter reply: {exc}") from exc


def compute_alignment(landmarks: np.ndarray,
                      template: np.ndarray = CANONICAL_LANDMARKS) -> AlignTransform:
    """Least-squares similarity transform taking landmarks onto the template.

    Closed-form scaled orthogonal Procrustes: minimizes the sum of squared
    distances over scale, rotation and translation.
    """
    src = np.asarray(landmarks, dtype=np.float64)
    dst = np.asarray(template, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("landmarks and template must both be (N, 2)")

    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    src_d = src - src_mean
    dst_d = dst - dst_mean

    src_var = (src_d ** 2).sum() / len(src)
    cov = dst_d.T @ src_d / len(src)
    u, s, vt = np.linalg.svd(cov)
    if s[-1] < 1e-9 * max(s[0], 1.0):
        raise DegenerateLandmarks("landmarks are collinear or coincident")

    d = np.ones(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[-1] = -1
    rot = u @ np.diag(d) @ vt
    scale = float((s * d).sum() / src_var)
    trans = dst_mean - scale * rot @ src_mean
    return AlignTransform(scale, float(np.degrees(np.arctan2(rot[1, 0], rot[0, 0]))),
                          (float(trans[0]), float(trans[1])))


def make_backend(kind: str | None = None, sigma: float = 0.0,
                 adapter_cmd: list[str] | None = None):
    """Backend factory honoring NAMEMO_BACKEND when `kind` is None."""
    import os

    kind = kind or os.environ.get("NAMEMO_BACKEND", "synthetic")
    if kind == "synthetic":
        return SyntheticBackend(sigma=sigma)
    if kind == "adapter":
        if not adapter_cmd:
            raise BackendUnavailable("adapter backend needs --backend-cmd")
        return AdapterBackend(adapter_cmd)
    raise ValueError(f"unknown backend {kind!r}")
