"""Fused tracker: each individual is one unit of nine subtrackers.

Association is salmon-primary: per-class assignments are computed exactly as
in the baseline, but only the salmon-class result binds units to detections.
Two correction layers then adjust the outcome:

* the turn module relaxes the IoU requirement for units judged to be
  turning (frontal or posterior orientation), and
* the crowding module uses body-part agreement to terminate units whose
  salmon match looks wrong (bpdis, nobp) and to drop part boxes that fit a
  neighbouring fish better (bpiou).

All records of a unit carry the unit id, so body parts keep their identity
as long as any part of the fish stays tracked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import count
from math import hypot

import numpy as np

from .association import AssignmentResult, solve_assignment, similarity_matrix
from .geometry import boxes_to_array, iou, iou_matrix
from .kalman import FilterParams, DEFAULT_PARAMS
from .model import (
    BBox,
    ComponentClass,
    GroupedDetection,
    SMALL_PART_CLASSES,
    TrackerConfig,
    TrackRecord,
)
from .tracker import SubTrack

SALMON = ComponentClass.SALMON


@dataclass
class TrackUnit:
    """One tracked individual: salmon subtrack plus any body-part subtracks."""

    unit_id: int
    subtracks: dict[ComponentClass, SubTrack]
    turn_counter: int = 0
    frames_since_salmon_match: int = 0
    hit_count: int = 1

    @property
    def salmon(self) -> SubTrack:
        return self.subtracks[SALMON]

    @property
    def is_turning(self) -> bool:
        return self.turn_counter > 0

    def small_subtracks(self) -> list[SubTrack]:
        return [
            t for c, t in self.subtracks.items() if c.is_small
        ]


@dataclass
class ModuleEvent:
    frame: int
    module: str
    unit_id: int
    detail: str


@dataclass
class FrameAssociation:
    """Per-class suggested assignments plus the adopted salmon-primary map."""

    per_class: dict[ComponentClass, AssignmentResult]
    class_units: dict[ComponentClass, list[int]]
    class_groups: dict[ComponentClass, list[int]]
    salmon_primary: dict[int, int | None] = field(default_factory=dict)

    def suggestion_for(self, cls: ComponentClass, unit_id: int) -> int | None:
        """Group index this unit's subtrack of ``cls`` was matched to, if any."""
        units = self.class_units.get(cls, [])
        if unit_id not in units:
            return None
        row = units.index(unit_id)
        found = self.per_class[cls].match_for_tracker(row)
        if found is None:
            return None
        col, _ = found
        return self.class_groups[cls][col]


def near_boundary(box: BBox, cfg: TrackerConfig) -> bool:
    """Whether a box sits within the configured margin of any image border."""
    if cfg.image_width is None or cfg.image_height is None:
        return False
    mx = cfg.boundary_margin_frac * cfg.image_width
    my = cfg.boundary_margin_frac * cfg.image_height
    return (
        box.x_min < mx
        or box.y_min < my
        or box.x_max > cfg.image_width - mx
        or box.y_max > cfg.image_height - my
    )


def _center_distance(a, b) -> float:
    (ax, ay), (bx, by) = a.box.center(), b.box.center()
    return hypot(ax - bx, ay - by)


def turn_counter_update(
    unit: TrackUnit,
    det: GroupedDetection | None,
    at_image_boundary: bool,
    cfg: TrackerConfig,
) -> TrackUnit:
    """Advance the turning counter from this frame's associated detection.

    The counter rises when the detection suggests a frontal or posterior
    orientation (tall box, or head-to-tail distance compressed below twice
    the dorsal-to-pelvic distance) away from the image border. It falls when
    the fish looks lateral again (most parts visible) and no rise applied.
    """
    if det is None:
        return unit

    increment = False
    if not at_image_boundary:
        box = det.salmon.box
        if box.height() > box.width():
            increment = True
        else:
            head = det.part(ComponentClass.HEAD)
            tail = det.part(ComponentClass.TAIL_FIN)
            dorsal = det.part(ComponentClass.DORSAL_FIN)
            pelvic = det.part(ComponentClass.PELVIC_FIN)
            if None not in (head, tail, dorsal, pelvic):
                if _center_distance(head, tail) < 2.0 * _center_distance(dorsal, pelvic):
                    increment = True

    if increment:
        unit.turn_counter = min(unit.turn_counter + 1, cfg.turn_counter_max)
    elif det.visible_part_count() >= cfg.turn_visibility_count:
        unit.turn_counter = max(unit.turn_counter - 1, 0)
    return unit


def turn_accept(
    unit: TrackUnit,
    unmatched: list[tuple[int, GroupedDetection]],
    cfg: TrackerConfig,
) -> tuple[int, float] | None:
    """Best free detection for a turning unit, if overlap clears the low floor.

    ``unmatched`` holds (group index, detection) pairs not assigned to any
    other unit. Returns (group index, IoU) or None.
    """
    predicted = unit.salmon.filter.box
    best: tuple[int, float] | None = None
    for idx, det in unmatched:
        o = iou(predicted, det.salmon.box)
        if o > cfg.turn_iou_floor and (best is None or o > best[1]):
            best = (idx, o)
    return best


def crowded_bpdis(unit: TrackUnit, assoc: FrameAssociation) -> bool:
    """True when the unit should be terminated for body-part disagreement.

    A small part disagrees when its own suggested match points at a different
    detection group than the unit's salmon match; termination requires more
    disagreement than agreement and at least two disagreeing parts.
    """
    matched = assoc.salmon_primary.get(unit.unit_id)
    if matched is None:
        return False
    agree = 0
    disagree = 0
    for cls in SMALL_PART_CLASSES:
        if cls not in unit.subtracks:
            continue
        suggested = assoc.suggestion_for(cls, unit.unit_id)
        if suggested is None:
            continue
        if suggested == matched:
            agree += 1
        else:
            disagree += 1
    return disagree > agree and disagree >= 2


def crowded_nobp(unit: TrackUnit, matched_group: GroupedDetection) -> bool:
    """True when none of the unit's small-part predictions touch the matched group.

    A unit that has never seen any small part is kept: with no part evidence
    there is nothing to contradict the salmon match.
    """
    checked = False
    for cls in SMALL_PART_CLASSES:
        track = unit.subtracks.get(cls)
        if track is None:
            continue
        checked = True
        det = matched_group.part(cls)
        if det is not None and iou(track.filter.box, det.box) > 0.0:
            return False
    return checked


def part_overlap_maxima(
    groups: list[GroupedDetection],
) -> dict[tuple[int, ComponentClass], float]:
    """For each (group, small class): best IoU with the same class in any other group."""
    out: dict[tuple[int, ComponentClass], float] = {}
    for cls in SMALL_PART_CLASSES:
        idxs = [i for i, g in enumerate(groups) if g.part(cls) is not None]
        if len(idxs) < 2:
            continue
        arr = boxes_to_array([groups[i].part(cls).box for i in idxs])
        overlaps = iou_matrix(arr, arr)
        np.fill_diagonal(overlaps, 0.0)
        best = overlaps.max(axis=1)
        for k, i in enumerate(idxs):
            out[(i, cls)] = float(best[k])
    return out


def crowded_bpiou(
    unit: TrackUnit,
    matched_idx: int,
    groups: list[GroupedDetection],
    neighbor_max: dict[tuple[int, ComponentClass], float] | None = None,
) -> list[ComponentClass]:
    """Small parts of the matched group that fit a neighbouring group better.

    A part box is suppressed when its IoU with some other group's same-class
    part box strictly exceeds its IoU with this unit's predicted part box.
    ``neighbor_max`` may carry :func:`part_overlap_maxima` to avoid an
    all-pairs rescan per unit.
    """
    if neighbor_max is None:
        neighbor_max = part_overlap_maxima(groups)
    matched_group = groups[matched_idx]
    suppressed: list[ComponentClass] = []
    for cls in SMALL_PART_CLASSES:
        det = matched_group.part(cls)
        if det is None:
            continue
        track = unit.subtracks.get(cls)
        own = iou(track.filter.box, det.box) if track is not None else 0.0
        if neighbor_max.get((matched_idx, cls), 0.0) > own:
            suppressed.append(cls)
    return suppressed


class UnitTracker:
    """Salmon-primary tracker over grouped detections."""

    def __init__(
        self, cfg: TrackerConfig, filter_params: FilterParams = DEFAULT_PARAMS
    ) -> None:
        self.cfg = cfg
        self.filter_params = filter_params
        self.units: list[TrackUnit] = []
        self.events: list[ModuleEvent] = []
        self._unit_ids = count(1)
        self._subtrack_ids = count(1)

    def step(self, frame: int, grouped: list[GroupedDetection]) -> list[TrackRecord]:
        """Advance one frame over grouped detections; returns emitted records."""
        for g in grouped:
            if g.frame != frame:
                raise ValueError(
                    f"grouped detection frame {g.frame} mixed into step for frame {frame}"
                )
        groups = [g for g in grouped if g.salmon.confidence > 0.0]

        for unit in self.units:
            for track in unit.subtracks.values():
                track.filter.predict()

        assoc = self._associate(groups)
        claimed: dict[int, int] = {}  # group idx -> unit_id
        for unit_id, idx in assoc.salmon_primary.items():
            if idx is not None:
                claimed[idx] = unit_id

        turn_matched = self._turn_pass(frame, groups, assoc, claimed, set())

        discarded = self._crowded_pass(frame, groups, assoc, claimed)

        # Detections discarded by the crowding tests are unassigned again and
        # may still rescue a turning unit in the same frame.
        turn_matched |= self._turn_pass(frame, groups, assoc, claimed, discarded)

        suppressed = self._bpiou_pass(frame, groups, assoc, claimed)

        self._apply_updates(groups, assoc, claimed, turn_matched, suppressed)
        self._lifecycle(groups, claimed, discarded)
        if self.cfg.turn_module_enabled:
            self._update_counters(groups, claimed)
        return self._emit(frame, groups, claimed)

    # ------------------------------------------------------------------
    # step phases

    def _associate(self, groups: list[GroupedDetection]) -> FrameAssociation:
        per_class: dict[ComponentClass, AssignmentResult] = {}
        class_units: dict[ComponentClass, list[int]] = {}
        class_groups: dict[ComponentClass, list[int]] = {}

        for cls in ComponentClass:
            rows = [u for u in self.units if cls in u.subtracks]
            if cls is SALMON:
                cols = [(i, g.salmon) for i, g in enumerate(groups)]
            else:
                cols = [
                    (i, g.part(cls))
                    for i, g in enumerate(groups)
                    if g.part(cls) is not None
                ]
            predicted = [u.subtracks[cls].filter.box for u in rows]
            dets = [d for _, d in cols]
            sim = similarity_matrix(predicted, dets, self.cfg.boost_weight)
            per_class[cls] = solve_assignment(sim, self.cfg.iou_threshold)
            class_units[cls] = [u.unit_id for u in rows]
            class_groups[cls] = [i for i, _ in cols]

        assoc = FrameAssociation(per_class, class_units, class_groups)
        salmon_rows = class_units[SALMON]
        for unit in self.units:
            assoc.salmon_primary[unit.unit_id] = None
        for row, col, _ in per_class[SALMON].matches:
            assoc.salmon_primary[salmon_rows[row]] = class_groups[SALMON][col]
        return assoc

    def _turn_pass(
        self,
        frame: int,
        groups: list[GroupedDetection],
        assoc: FrameAssociation,
        claimed: dict[int, int],
        pool: set[int],
    ) -> set[int]:
        """Let turning units claim free detections; returns unit ids matched here.

        ``pool`` restricts candidates to a subset of group indices (used for
        the post-crowding pass over discarded detections); empty means any
        unclaimed group.
        """
        matched: set[int] = set()
        if not self.cfg.turn_module_enabled:
            return matched
        for unit in self.units:
            if not unit.is_turning:
                continue
            if assoc.salmon_primary.get(unit.unit_id) is not None:
                continue
            if unit.unit_id in claimed.values():
                continue
            candidates = [
                (i, g)
                for i, g in enumerate(groups)
                if i not in claimed and (not pool or i in pool)
            ]
            found = turn_accept(unit, candidates, self.cfg)
            if found is None:
                continue
            idx, overlap = found
            claimed[idx] = unit.unit_id
            matched.add(unit.unit_id)
            self.events.append(
                ModuleEvent(frame, "turn_accept", unit.unit_id, f"group={idx} iou={overlap:.3f}")
            )
        return matched

    def _crowded_pass(
        self,
        frame: int,
        groups: list[GroupedDetection],
        assoc: FrameAssociation,
        claimed: dict[int, int],
    ) -> set[int]:
        """Run bpdis and nobp on non-turning matched units; returns discarded groups."""
        discarded: set[int] = set()
        dead: set[int] = set()
        for unit in self.units:
            if unit.is_turning:
                continue
            idx = assoc.salmon_primary.get(unit.unit_id)
            if idx is None:
                continue
            if self.cfg.bpdis_enabled and crowded_bpdis(unit, assoc):
                self.events.append(ModuleEvent(frame, "bpdis", unit.unit_id, f"group={idx}"))
                dead.add(unit.unit_id)
                discarded.add(idx)
                del claimed[idx]
                continue
            if self.cfg.nobp_enabled and crowded_nobp(unit, groups[idx]):
                self.events.append(ModuleEvent(frame, "nobp", unit.unit_id, f"group={idx}"))
                dead.add(unit.unit_id)
                discarded.add(idx)
                del claimed[idx]
        if dead:
            self.units = [u for u in self.units if u.unit_id not in dead]
        return discarded

    def _bpiou_pass(
        self,
        frame: int,
        groups: list[GroupedDetection],
        assoc: FrameAssociation,
        claimed: dict[int, int],
    ) -> dict[int, list[ComponentClass]]:
        """Per-unit part suppressions (unit id -> classes treated as absent)."""
        suppressed: dict[int, list[ComponentClass]] = {}
        if not self.cfg.bpiou_enabled:
            return suppressed
        neighbor_max = part_overlap_maxima(groups)
        units_by_id = {u.unit_id: u for u in self.units}
        for idx, unit_id in claimed.items():
            unit = units_by_id.get(unit_id)
            if unit is None or unit.is_turning:
                continue
            dropped = crowded_bpiou(unit, idx, groups, neighbor_max)
            if dropped:
                suppressed[unit_id] = dropped
                tags = ",".join(c.value for c in dropped)
                self.events.append(ModuleEvent(frame, "bpiou", unit_id, f"group={idx} parts={tags}"))
        return suppressed

    def _apply_updates(
        self,
        groups: list[GroupedDetection],
        assoc: FrameAssociation,
        claimed: dict[int, int],
        turn_matched: set[int],
        suppressed: dict[int, list[ComponentClass]],
    ) -> None:
        group_for_unit = {uid: idx for idx, uid in claimed.items()}
        for unit in self.units:
            idx = group_for_unit.get(unit.unit_id)
            if idx is None:
                unit.frames_since_salmon_match += 1
                for track in unit.subtracks.values():
                    track.mark_missed()
                continue

            group = groups[idx]
            drop = set(suppressed.get(unit.unit_id, []))
            sim = iou(unit.salmon.filter.box, group.salmon.box)
            unit.salmon.mark_matched(group.salmon, sim)
            unit.frames_since_salmon_match = 0
            unit.hit_count += 1
            for cls in ComponentClass:
                if cls is SALMON:
                    continue
                det = group.part(cls)
                if det is None or cls in drop:
                    track = unit.subtracks.get(cls)
                    if track is not None:
                        track.mark_missed()
                    continue
                track = unit.subtracks.get(cls)
                if track is None:
                    unit.subtracks[cls] = SubTrack.spawn(
                        next(self._subtrack_ids), det, self.filter_params
                    )
                else:
                    track.mark_matched(det, iou(track.filter.box, det.box))

    def _lifecycle(
        self,
        groups: list[GroupedDetection],
        claimed: dict[int, int],
        discarded: set[int],
    ) -> None:
        self.units = [
            u
            for u in self.units
            if u.frames_since_salmon_match <= self.cfg.hidden_length
        ]
        for idx, group in enumerate(groups):
            if idx in claimed or idx in discarded:
                continue
            subtracks = {
                SALMON: SubTrack.spawn(
                    next(self._subtrack_ids), group.salmon, self.filter_params
                )
            }
            for cls in ComponentClass:
                det = group.part(cls) if cls is not SALMON else None
                if det is not None:
                    subtracks[cls] = SubTrack.spawn(
                        next(self._subtrack_ids), det, self.filter_params
                    )
            unit = TrackUnit(unit_id=next(self._unit_ids), subtracks=subtracks)
            self.units.append(unit)
            claimed[idx] = unit.unit_id

    def _update_counters(
        self, groups: list[GroupedDetection], claimed: dict[int, int]
    ) -> None:
        group_for_unit = {uid: idx for idx, uid in claimed.items()}
        for unit in self.units:
            idx = group_for_unit.get(unit.unit_id)
            det = groups[idx] if idx is not None else None
            boundary = det is not None and near_boundary(det.salmon.box, self.cfg)
            turn_counter_update(unit, det, boundary, self.cfg)

    def _emit(
        self, frame: int, groups: list[GroupedDetection], claimed: dict[int, int]
    ) -> list[TrackRecord]:
        group_for_unit = {uid: idx for idx, uid in claimed.items()}
        records: list[TrackRecord] = []
        for unit in self.units:
            idx = group_for_unit.get(unit.unit_id)
            if idx is None or unit.hit_count < self.cfg.min_hits:
                continue
            group = groups[idx]
            records.append(
                TrackRecord(
                    frame,
                    unit.unit_id,
                    SALMON,
                    unit.salmon.filter.box,
                    group.salmon.confidence,
                )
            )
            for cls in ComponentClass:
                if cls is SALMON:
                    continue
                track = unit.subtracks.get(cls)
                if track is None or track.frames_since_match != 0:
                    continue
                records.append(
                    TrackRecord(frame, unit.unit_id, cls, track.filter.box, track.last_confidence)
                )
        return records
