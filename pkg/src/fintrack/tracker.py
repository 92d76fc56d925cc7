"""Baseline tracker: one independent SORT-style tracker per component class.

Classes never mix: a head detection can only ever extend a head track. Each
class keeps its own predict / associate / update / spawn / reap cycle, all
sharing one track-id counter so ids are unique across classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import count

from .association import solve_assignment, similarity_matrix
from .kalman import BoxFilter, FilterParams, DEFAULT_PARAMS
from .model import ComponentClass, Detection, TrackerConfig, TrackRecord


@dataclass
class SubTrack:
    """Kalman filter plus lifecycle counters for one component-class track."""

    track_id: int
    cls: ComponentClass
    filter: BoxFilter
    frames_since_match: int = 0
    hit_count: int = 1
    last_similarity: float = 1.0
    last_confidence: float = 0.0

    @classmethod
    def spawn(
        cls,
        track_id: int,
        detection: Detection,
        params: FilterParams = DEFAULT_PARAMS,
    ) -> "SubTrack":
        return cls(
            track_id=track_id,
            cls=detection.cls,
            filter=BoxFilter.from_box(detection.box, params),
            last_confidence=detection.confidence,
        )

    def mark_matched(self, detection: Detection, similarity: float) -> None:
        self.filter.update(detection.box)
        self.frames_since_match = 0
        self.hit_count += 1
        self.last_similarity = similarity
        self.last_confidence = detection.confidence

    def mark_missed(self) -> None:
        self.frames_since_match += 1


class IndependentTracker:
    """Tracking-by-detection with per-class association and no cross-class state."""

    def __init__(
        self, cfg: TrackerConfig, filter_params: FilterParams = DEFAULT_PARAMS
    ) -> None:
        self.cfg = cfg
        self.filter_params = filter_params
        self.tracks: dict[ComponentClass, list[SubTrack]] = {
            c: [] for c in ComponentClass
        }
        self._ids = count(1)

    def step(self, frame: int, detections: list[Detection]) -> list[TrackRecord]:
        """Advance one frame; returns the records emitted for this frame."""
        for det in detections:
            if det.frame != frame:
                raise ValueError(
                    f"detection frame {det.frame} mixed into step for frame {frame}"
                )

        by_class: dict[ComponentClass, list[Detection]] = {c: [] for c in ComponentClass}
        for det in detections:
            if det.confidence > 0.0:
                by_class[det.cls].append(det)

        records: list[TrackRecord] = []
        for cls in ComponentClass:
            records.extend(self._step_class(frame, cls, by_class[cls]))
        return records

    def _step_class(
        self, frame: int, cls: ComponentClass, dets: list[Detection]
    ) -> list[TrackRecord]:
        tracks = self.tracks[cls]
        predicted = [t.filter.predict() for t in tracks]
        sim = similarity_matrix(predicted, dets, self.cfg.boost_weight)
        result = solve_assignment(sim, self.cfg.iou_threshold)

        for ti, dj, s in result.matches:
            tracks[ti].mark_matched(dets[dj], s)
        for ti in result.unmatched_trackers:
            tracks[ti].mark_missed()
        for dj in result.unmatched_detections:
            tracks.append(
                SubTrack.spawn(next(self._ids), dets[dj], self.filter_params)
            )

        self.tracks[cls] = [
            t for t in tracks if t.frames_since_match <= self.cfg.hidden_length
        ]

        return [
            TrackRecord(frame, t.track_id, cls, t.filter.box, t.last_confidence)
            for t in self.tracks[cls]
            if t.frames_since_match == 0 and t.hit_count >= self.cfg.min_hits
        ]


def run_tracker(tracker, detections_by_frame, frames) -> list[TrackRecord]:
    """Drive a tracker over a frame range, passing [] for frames with no detections."""
    records: list[TrackRecord] = []
    for frame in frames:
        records.extend(tracker.step(frame, detections_by_frame.get(frame, [])))
    return records
