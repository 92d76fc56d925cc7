"""Class-aware tracking event counts, endpoint linking, and extrema matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import iou, iou_matrix
from .model import BBox, ComponentClass, TrackRecord


@dataclass
class ClassEvents:
    transfers: int = 0
    switches: int = 0
    matches: int = 0


@dataclass
class EventCounts:
    """Tracking events for the parent class and for all body parts pooled."""

    salmon: ClassEvents = field(default_factory=ClassEvents)
    parts: ClassEvents = field(default_factory=ClassEvents)

    def bucket(self, cls: ComponentClass) -> ClassEvents:
        return self.salmon if cls is ComponentClass.SALMON else self.parts


def _index_records(
    records: list[TrackRecord],
) -> dict[tuple[int, ComponentClass], list[TrackRecord]]:
    index: dict[tuple[int, ComponentClass], list[TrackRecord]] = {}
    for rec in records:
        index.setdefault((rec.frame, rec.cls), []).append(rec)
    return index


def count_events(
    gt: list[TrackRecord], hyp: list[TrackRecord], match_iou: float = 0.5
) -> EventCounts:
    """Per-frame optimal same-class matching, with identity-change bookkeeping.

    A transfer is counted whenever a hypothesis id covers a different ground
    truth object than the one it most recently covered; a switch whenever a
    ground truth object is covered by a different hypothesis id than before.
    The "most recent" memory persists across unmatched gaps.
    """
    seen: set[tuple[int, int, ComponentClass]] = set()
    for rec in gt:
        key = (rec.frame, rec.track_id, rec.cls)
        if key in seen:
            raise ValueError(
                f"duplicate ground truth entry for object {rec.track_id} "
                f"class {rec.cls.value} in frame {rec.frame}"
            )
        seen.add(key)

    gt_index = _index_records(gt)
    hyp_index = _index_records(hyp)
    frames = sorted({f for f, _ in gt_index} | {f for f, _ in hyp_index})

    counts = EventCounts()
    last_gt: dict[tuple[ComponentClass, int], int] = {}
    last_hyp: dict[tuple[ComponentClass, int], int] = {}

    for frame in frames:
        for cls in ComponentClass:
            gts = gt_index.get((frame, cls), [])
            hyps = hyp_index.get((frame, cls), [])
            if not gts or not hyps:
                continue
            sim = iou_matrix(
                np.array([(b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max) for b in gts]),
                np.array([(b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max) for b in hyps]),
            )
            rows, cols = linear_sum_assignment(-sim)
            bucket = counts.bucket(cls)
            for gi, hj in zip(rows.tolist(), cols.tolist()):
                if sim[gi, hj] < match_iou:
                    continue
                gt_id = gts[gi].track_id
                hyp_id = hyps[hj].track_id
                bucket.matches += 1
                prev_gt = last_gt.get((cls, hyp_id))
                if prev_gt is not None and prev_gt != gt_id:
                    bucket.transfers += 1
                prev_hyp = last_hyp.get((cls, gt_id))
                if prev_hyp is not None and prev_hyp != hyp_id:
                    bucket.switches += 1
                last_gt[(cls, hyp_id)] = gt_id
                last_hyp[(cls, gt_id)] = hyp_id
    return counts


@dataclass(frozen=True)
class EndpointTrack:
    """Two annotated observations of one individual, plus its scene category."""

    early_frame: int
    early_box: BBox
    late_frame: int
    late_box: BBox
    category: str


def endpoint_link_rate(
    gt_tracks: list[EndpointTrack],
    hyp: list[TrackRecord],
    min_iou: float = 0.2,
    cls: ComponentClass = ComponentClass.SALMON,
) -> dict[str, tuple[int, int]]:
    """Per-category (linked, total) counts of endpoint pairs covered by one id.

    Each endpoint box maps to the highest-IoU hypothesis box of the same class
    in its frame, requiring at least ``min_iou``; the pair counts as linked
    only when both endpoints map to the same hypothesis id.
    """
    by_frame: dict[int, list[TrackRecord]] = {}
    for rec in hyp:
        if rec.cls is cls:
            by_frame.setdefault(rec.frame, []).append(rec)

    def best_id(frame: int, box: BBox) -> int | None:
        best: tuple[float, int] | None = None
        for rec in by_frame.get(frame, []):
            o = iou(box, rec.box)
            if o >= min_iou and (best is None or o > best[0]):
                best = (o, rec.track_id)
        return None if best is None else best[1]

    out: dict[str, tuple[int, int]] = {}
    for track in gt_tracks:
        linked, total = out.get(track.category, (0, 0))
        early = best_id(track.early_frame, track.early_box)
        late = best_id(track.late_frame, track.late_box)
        if early is not None and early == late:
            linked += 1
        out[track.category] = (linked, total + 1)
    return out


@dataclass(frozen=True)
class ExtremaScore:
    tp: int
    fp: int
    fn: int
    threshold: float


def greedy_extrema_match(
    gt: list[int], hyp: list[int], threshold: float
) -> ExtremaScore:
    """Match ground truth and hypothesis extrema frames, closest pairs first.

    Pairs are consumed in order of frame distance (ties broken by earlier
    ground truth frame, then earlier hypothesis frame) until no admissible
    pair within the threshold remains.
    """
    pairs = sorted(
        (abs(g - h), g, h, gi, hi)
        for gi, g in enumerate(gt)
        for hi, h in enumerate(hyp)
    )
    used_gt: set[int] = set()
    used_hyp: set[int] = set()
    tp = 0
    for dist, _, _, gi, hi in pairs:
        if dist > threshold:
            break
        if gi in used_gt or hi in used_hyp:
            continue
        used_gt.add(gi)
        used_hyp.add(hi)
        tp += 1
    return ExtremaScore(tp=tp, fp=len(hyp) - tp, fn=len(gt) - tp, threshold=threshold)


def sweep_average(
    scores: dict[float, dict[str, float]], grid: list[float]
) -> dict[str, float]:
    """Arithmetic mean of every score column over the threshold grid."""
    missing = [t for t in grid if t not in scores]
    if missing:
        raise ValueError(f"missing score rows for thresholds {missing}")
    if not grid:
        raise ValueError("empty threshold grid")
    keys = list(scores[grid[0]].keys())
    return {
        k: float(np.mean([scores[t][k] for t in grid])) for k in keys
    }
