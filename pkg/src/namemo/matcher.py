"""Identity assignment: cosine scoring, one-to-one matching, confidence bands.

Confidence is cosine similarity clamped to [0, 1]. Display bands follow the
teacher UI semantics: high (blue) at confidence >= 0.8, tentative (yellow)
in [0.5, 0.8), unknown below or unmatched. Both boundaries are inclusive on
the lower band edge; banding is tested explicitly at the edges.

Each enrolled identity can label at most one detection per cycle. A naive
per-detection argmax can put one student's name on two faces, which is worse
than showing unknown, so assignment is one-to-one: greedy (default) takes
the globally best eligible pair repeatedly; optimal solves the
maximum-weight bipartite assignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment


class Band(str, Enum):
    HIGH = "high"
    TENTATIVE = "tentative"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class MatchPolicy:
    high_threshold: float = 0.8
    low_threshold: float = 0.5
    assignment: str = "greedy"

    def __post_init__(self):
        if not 0 <= self.low_threshold < self.high_threshold <= 1:
            raise ValueError("need 0 <= low < high <= 1")
        if self.assignment not in ("greedy", "optimal"):
            raise ValueError("assignment must be 'greedy' or 'optimal'")


@dataclass
class MatchResult:
    detection_ref: tuple[int, int]  # (tile_id, detection index)
    student_id: str | None
    confidence: float
    band: Band


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit embeddings (plain dot product)."""
    return float(np.dot(a, b))


def band(confidence: float, policy: MatchPolicy) -> Band:
    if confidence >= policy.high_threshold:
        return Band.HIGH
    if confidence >= policy.low_threshold:
        return Band.TENTATIVE
    return Band.UNKNOWN


def _greedy_pairs(conf: np.ndarray, eligible: np.ndarray,
                  det_order: list[tuple[int, int]],
                  student_ids: list[str]) -> list[tuple[int, int]]:
    """Repeatedly take the highest-confidence eligible pair.

    Ties break on (lower tile_id, lower detection index, lexicographic
    student id) so results do not depend on float happenstance.
    """
    pairs = []
    open_rows = np.ones(conf.shape[0], dtype=bool)
    open_cols = np.ones(conf.shape[1], dtype=bool)
    candidates = [(conf[i, j], i, j)
                  for i in range(conf.shape[0])
                  for j in range(conf.shape[1]) if eligible[i, j]]
    candidates.sort(key=lambda c: (-c[0], det_order[c[1]], student_ids[c[2]]))
    for _, i, j in candidates:
        if open_rows[i] and open_cols[j]:
            pairs.append((i, j))
            open_rows[i] = False
            open_cols[j] = False
    return pairs


def _optimal_pairs(conf: np.ndarray, eligible: np.ndarray) -> list[tuple[int, int]]:
    # Ineligible cells contribute weight 0; since eligible weights are all
    # >= low_threshold > 0, the LSA solution restricted to eligible cells is
    # exactly the maximum-weight matching.
    weights = np.where(eligible, conf, 0.0)
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if eligible[i, j]]


def match_cycle(detections, gallery_ids: list[str], gallery_matrix: np.ndarray,
                policy: MatchPolicy) -> list[MatchResult]:
    """Assign gallery identities to a cycle's detections, one-to-one.

    `detections` need `.embedding` and `.ref` (tile_id, index) attributes;
    `gallery_matrix` is (n_students, dim) of unit row vectors for students
    eligible to be matched. Unassigned detections come back as unknown.
    """
    detections = list(detections)
    if not detections:
        return []
    if len(gallery_ids) == 0:
        return [MatchResult(d.ref, None, 0.0, Band.UNKNOWN) for d in detections]

    probe = np.stack([np.asarray(d.embedding, dtype=np.float64) for d in detections])
    conf = np.clip(probe @ gallery_matrix.T, 0.0, 1.0)
    eligible = conf >= policy.low_threshold

    det_order = [d.ref for d in detections]
    if policy.assignment == "optimal":
        pairs = _optimal_pairs(conf, eligible)
    else:
        pairs = _greedy_pairs(conf, eligible, det_order, gallery_ids)

    assigned = {i: j for i, j in pairs}
    results = []
    for i, det in enumerate(detections):
        if i in assigned:
            j = assigned[i]
            c = float(conf[i, j])
            results.append(MatchResult(det.ref, gallery_ids[j], c, band(c, policy)))
        else:
            best = float(conf[i].max())
            results.append(MatchResult(det.ref, None, best, Band.UNKNOWN))
    return results
