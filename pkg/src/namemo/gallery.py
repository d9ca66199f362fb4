"""Enrolled-student store: profiles, consent state, gallery embeddings.

Privacy posture: no face imagery is ever stored, only embeddings plus text
profile fields. Opting out does not flag a student on screen; their record
simply stops being offered to the matcher, so their detections read as
unknown.

File format: UTF-8 newline-delimited JSON. The first line is a header
{"format_version": 1, "version": n, "checksum": crc} where crc is CRC-32 of
every byte after the header line; then one record per line. Diff-able,
streamable, and corruption-detectable.
"""

from __future__ import annotations

import json
import threading
import zlib
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CorruptFile, DuplicateId, InvalidEmbedding, UnknownId, VersionUnsupported
from .vision import EMBED_DIM

FORMAT_VERSION = 1


class Consent(str, Enum):
    ENROLLED = "enrolled"
    OPTED_OUT = "opted_out"


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    display_name: str
    gallery_embedding: np.ndarray
    profile: dict[str, str] = field(default_factory=dict)
    consent: Consent = Consent.ENROLLED

    def __post_init__(self):
        if not self.student_id:
            raise ValueError("student_id must be non-empty")
        if not self.display_name:
            raise ValueError("display_name must be non-empty")


class Gallery:
    """Mutable store with serialized writes and immutable read views."""

    def __init__(self):
        self._records: dict[str, StudentRecord] = {}
        self._version = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._records)

    @property
    def version(self) -> int:
        return self._version

    def ids(self) -> list[str]:
        return sorted(self._records)

    def enroll(self, record: StudentRecord) -> int:
        emb = np.asarray(record.gallery_embedding, dtype=np.float64)
        if emb.shape != (EMBED_DIM,) or abs(float(np.linalg.norm(emb)) - 1.0) > 1e-6:
            raise InvalidEmbedding(
                f"embedding must be a unit {EMBED_DIM}-vector")
        with self._lock:
            if record.student_id in self._records:
                raise DuplicateId(record.student_id)
            self._records[record.student_id] = replace(record, gallery_embedding=emb)
            self._version += 1
            return self._version

    def set_consent(self, student_id: str, consent: Consent) -> int:
        with self._lock:
            rec = self._records.get(student_id)
            if rec is None:
                raise UnknownId(student_id)
            self._records[student_id] = replace(rec, consent=Consent(consent))
            self._version += 1
            return self._version

    def get(self, student_id: str) -> StudentRecord:
        rec = self._records.get(student_id)
        if rec is None:
            raise UnknownId(student_id)
        return rec

    def visible_profile(self, student_id: str) -> StudentRecord | None:
        """Record for display, or None if unknown OR opted out (indistinguishable)."""
        rec = self._records.get(student_id)
        if rec is None or rec.consent is not Consent.ENROLLED:
            return None
        return rec

    def matching_view(self) -> tuple[list[str], np.ndarray]:
        """(ids, (n, dim) matrix) of students the matcher may name.

        Opted-out records are excluded here, before anything reaches the
        matcher; this is the enforcement point for the opt-out invariant.
        """
        with self._lock:
            active = [(sid, rec) for sid, rec in sorted(self._records.items())
                      if rec.consent is Consent.ENROLLED]
        ids = [sid for sid, _ in active]
        if not active:
            return ids, np.zeros((0, EMBED_DIM))
        return ids, np.stack([rec.gallery_embedding for _, rec in active])

    def save(self, path: str | Path) -> None:
        with self._lock:
            lines = []
            for sid in sorted(self._records):
                rec = self._records[sid]
                lines.append(json.dumps({
                    "student_id": rec.student_id,
                    "display_name": rec.display_name,
                    "profile": rec.profile,
                    "consent": rec.consent.value,
                    "embedding": rec.gallery_embedding.tolist(),
                }, ensure_ascii=False))
            body = "".join(line + "\n" for line in lines).encode("utf-8")
            header = json.dumps({
                "format_version": FORMAT_VERSION,
                "version": self._version,
                "checksum": zlib.crc32(body),
            })
            Path(path).write_bytes(header.encode("utf-8") + b"\n" + body)

    @classmethod
    def load(cls, path: str | Path) -> "Gallery":
        raw = Path(path).read_bytes()
        newline = raw.find(b"\n")
        if newline < 0:
            raise CorruptFile("missing header line")
        try:
            header = json.loads(raw[:newline])
            fmt = header["format_version"]
            checksum = header["checksum"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorruptFile(f"bad header: {exc}") from exc
        if fmt != FORMAT_VERSION:
            raise VersionUnsupported(f"format_version {fmt}")
        body = raw[newline + 1:]
        if zlib.crc32(body) != checksum:
            raise CorruptFile("checksum mismatch")

        gallery = cls()
        for line in body.decode("utf-8").splitlines():
            try:
                obj = json.loads(line)
                rec = StudentRecord(
                    student_id=obj["student_id"],
                    display_name=obj["display_name"],
                    gallery_embedding=np.asarray(obj["embedding"], dtype=np.float64),
                    profile=dict(obj["profile"]),
                    consent=Consent(obj["consent"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorruptFile(f"bad record line: {exc}") from exc
            gallery._records[rec.student_id] = rec
        gallery._version = int(header.get("version", len(gallery._records)))
        return gallery
