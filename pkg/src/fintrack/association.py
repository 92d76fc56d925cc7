"""Similarity matrices and optimal one-to-one assignment between tracks and detections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import BBox, Detection
from .geometry import boxes_to_array, iou_matrix


@dataclass
class AssignmentResult:
    """Gated one-to-one matching between tracker rows and detection columns."""

    matches: list[tuple[int, int, float]]
    unmatched_trackers: list[int]
    unmatched_detections: list[int]

    def match_for_tracker(self, i: int) -> tuple[int, float] | None:
        for ti, dj, sim in self.matches:
            if ti == i:
                return dj, sim
        return None


def similarity_matrix(
    predicted: list[BBox] | np.ndarray,
    detections: list[Detection],
    boost_weight: float = 0.0,
) -> np.ndarray:
    """IoU similarity, optionally scaled up by detection confidence.

    Entry (i, j) is iou(predicted_i, det_j) * (1 + boost_weight * conf_j),
    clipped to [0, 1 + boost_weight]. The default weight 0 gives plain IoU.
    """
    pred = predicted if isinstance(predicted, np.ndarray) else boxes_to_array(predicted)
    det = boxes_to_array([d.box for d in detections])
    sim = iou_matrix(pred, det)
    if boost_weight != 0.0 and sim.size:
        conf = np.array([d.confidence for d in detections], dtype=float)
        sim = sim * (1.0 + boost_weight * conf[None, :])
    return np.clip(sim, 0.0, 1.0 + max(boost_weight, 0.0))


def solve_assignment(sim: np.ndarray, threshold: float) -> AssignmentResult:
    """Maximum-total-similarity matching, gated at ``threshold``.

    The Hungarian optimum is canonicalised so that equal-total swaps prefer
    ascending detection indices for ascending tracker indices; pairs below
    the threshold are released back to the unmatched pools.
    """
    n_trk, n_det = sim.shape
    if n_trk == 0 or n_det == 0:
        return AssignmentResult([], list(range(n_trk)), list(range(n_det)))
    if not np.isfinite(sim).all():
        raise ValueError("similarity matrix contains non-finite entries")

    rows, cols = linear_sum_assignment(-sim)
    pairs = sorted(zip(rows.tolist(), cols.tolist()))

    # Lexicographic tie-break: among equally good totals, pair low tracker
    # indices with low detection indices.
    changed = True
    while changed:
        changed = False
        for a in range(len(pairs)):
            for b in range(a + 1, len(pairs)):
                ia, ja = pairs[a]
                ib, jb = pairs[b]
                if ja > jb and sim[ia, ja] + sim[ib, jb] == sim[ia, jb] + sim[ib, ja]:
                    pairs[a] = (ia, jb)
                    pairs[b] = (ib, ja)
                    changed = True

    matches: list[tuple[int, int, float]] = []
    unmatched_t = set(range(n_trk))
    unmatched_d = set(range(n_det))
    for i, j in pairs:
        s = float(sim[i, j])
        if s >= threshold:
            matches.append((i, j, s))
            unmatched_t.discard(i)
            unmatched_d.discard(j)
    return AssignmentResult(matches, sorted(unmatched_t), sorted(unmatched_d))
