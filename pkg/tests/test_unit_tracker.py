import pytest

from fintrack import (
    AssignmentResult,
    BBox,
    ComponentClass,
    FrameAssociation,
    IndependentTracker,
    TrackerConfig,
    UnitTracker,
    crowded_bpdis,
    crowded_bpiou,
    crowded_nobp,
    turn_accept,
    turn_counter_update,
)
from fintrack.simulate import SplitMix64
from fintrack.tracker import SubTrack
from fintrack.unit_tracker import TrackUnit
from fintrack.kalman import BoxFilter

from conftest import box, det, salmon_group

C = ComponentClass

PART_LAYOUT = {
    C.HEAD: (50, 5, 60, 15),
    C.BODY: (15, 4, 50, 16),
    C.DORSAL_FIN: (25, 0, 35, 5),
    C.ADIPOSE_FIN: (12, 1, 18, 6),
    C.TAIL_FIN: (0, 4, 8, 16),
    C.ANAL_FIN: (12, 14, 18, 19),
    C.PELVIC_FIN: (28, 15, 36, 20),
    C.PECTORAL_FIN: (42, 13, 50, 18),
}


def fish_group(frame, x, y=0.0, missing=(), conf=1.0):
    """A plausible grouped detection: salmon box 60x20 with 8 interior parts."""
    parts = {
        cls: box(x + a, y + b, x + c, y + d)
        for cls, (a, b, c, d) in PART_LAYOUT.items()
        if cls not in missing
    }
    return salmon_group(frame, box(x, y, x + 60, y + 20), parts, conf)


def unit_with_parts(x=0.0, y=0.0, missing=()):
    g = fish_group(0, x, y, missing=missing)
    subtracks = {C.SALMON: SubTrack.spawn(1, g.salmon)}
    for i, (cls, d) in enumerate(sorted(g.parts.items(), key=lambda kv: kv[0].value)):
        subtracks[cls] = SubTrack.spawn(10 + i, d)
    return TrackUnit(unit_id=1, subtracks=subtracks)


def assoc_for(unit, matched_idx, suggestions):
    """Hand-built FrameAssociation: suggestions maps class -> group index."""
    per_class = {}
    class_units = {}
    class_groups = {}
    for cls, target in suggestions.items():
        per_class[cls] = AssignmentResult([(0, 0, 0.9)], [], [])
        class_units[cls] = [unit.unit_id]
        class_groups[cls] = [target]
    return FrameAssociation(
        per_class, class_units, class_groups, {unit.unit_id: matched_idx}
    )


class TestTurnCounterUpdate:
    def cfg(self, **kw):
        return TrackerConfig(image_width=1000, image_height=1000, **kw)

    def test_tall_interior_box_increments(self):
        unit = unit_with_parts()
        g = salmon_group(1, box(500, 500, 550, 600))  # 50 wide, 100 tall
        turn_counter_update(unit, g, at_image_boundary=False, cfg=self.cfg())
        assert unit.turn_counter == 1

    def test_lateral_visible_fish_decrements(self):
        unit = unit_with_parts()
        unit.turn_counter = 3
        g = fish_group(1, 500, 500)  # 8 parts visible, wide box
        turn_counter_update(unit, g, at_image_boundary=False, cfg=self.cfg())
        assert unit.turn_counter == 2

    def test_counter_clamped_at_maximum(self):
        unit = unit_with_parts()
        unit.turn_counter = 10
        g = salmon_group(1, box(500, 500, 550, 600))
        turn_counter_update(unit, g, at_image_boundary=False, cfg=self.cfg())
        assert unit.turn_counter == 10

    def test_counter_never_below_zero(self):
        unit = unit_with_parts()
        g = fish_group(1, 500, 500)
        turn_counter_update(unit, g, at_image_boundary=False, cfg=self.cfg())
        assert unit.turn_counter == 0

    def test_boundary_blocks_increment(self):
        unit = unit_with_parts()
        g = salmon_group(1, box(500, 500, 550, 600))
        turn_counter_update(unit, g, at_image_boundary=True, cfg=self.cfg())
        assert unit.turn_counter == 0

    def test_compressed_head_tail_distance_increments(self):
        # Wide box (rule 1a false) but head-tail distance below twice the
        # dorsal-pelvic distance (rule 1b true).
        unit = unit_with_parts()
        parts = {
            C.HEAD: box(520, 500, 530, 510),
            C.TAIL_FIN: box(500, 500, 510, 510),
            C.DORSAL_FIN: box(510, 480, 520, 490),
            C.PELVIC_FIN: box(510, 520, 520, 530),
        }
        g = salmon_group(1, box(500, 480, 560, 530), parts)
        assert g.salmon.box.width() > g.salmon.box.height()
        turn_counter_update(unit, g, at_image_boundary=False, cfg=self.cfg())
        assert unit.turn_counter == 1

    def test_rule_1b_needs_all_four_parts(self):
        unit = unit_with_parts()
        parts = {
            C.HEAD: box(520, 500, 530, 510),
            C.TAIL_FIN: box(500, 500, 510, 510),
            C.DORSAL_FIN: box(510, 480, 520, 490),
        }
        g = salmon_group(1, box(500, 480, 560, 530), parts)
        turn_counter_update(unit, g, at_image_boundary=False, cfg=self.cfg())
        assert unit.turn_counter == 0

    def test_no_detection_leaves_counter_unchanged(self):
        unit = unit_with_parts()
        unit.turn_counter = 4
        turn_counter_update(unit, None, at_image_boundary=False, cfg=self.cfg())
        assert unit.turn_counter == 4

    def test_few_visible_parts_block_decrement(self):
        unit = unit_with_parts()
        unit.turn_counter = 4
        g = fish_group(1, 500, 500, missing=(C.ADIPOSE_FIN, C.ANAL_FIN, C.PECTORAL_FIN))
        # 5 visible parts < default visibility threshold 7
        turn_counter_update(unit, g, at_image_boundary=False, cfg=self.cfg())
        assert unit.turn_counter == 4

    def test_counter_bounded_under_random_sequences(self):
        rng = SplitMix64(99)
        cfg = self.cfg()
        unit = unit_with_parts()
        for i in range(500):
            roll = rng.uniform()
            if roll < 0.2:
                g = None
            elif roll < 0.5:
                g = salmon_group(i, box(500, 500, 550, 600))  # tall
            else:
                g = fish_group(i, 500, 500)
            turn_counter_update(unit, g, rng.uniform() < 0.2, cfg)
            assert 0 <= unit.turn_counter <= cfg.turn_counter_max


class TestTurnAccept:
    def make_turning_unit(self):
        unit = unit_with_parts(x=0.0)
        unit.turn_counter = 2
        return unit

    def test_low_overlap_accepted_above_floor(self):
        unit = self.make_turning_unit()
        # IoU with the unit's predicted salmon box ~0.12: shifted far right.
        candidate = fish_group(1, 47.0)
        found = turn_accept(unit, [(0, candidate)], TrackerConfig(iou_threshold=0.65))
        assert found is not None
        idx, overlap = found
        assert idx == 0
        assert 0.05 < overlap < 0.2

    def test_below_floor_rejected(self):
        unit = self.make_turning_unit()
        candidate = fish_group(1, 57.5)  # sliver of overlap, iou ~0.02
        assert turn_accept(unit, [(0, candidate)], TrackerConfig()) is None

    def test_best_candidate_wins(self):
        unit = self.make_turning_unit()
        near = fish_group(1, 10.0)
        far = fish_group(1, 40.0)
        found = turn_accept(unit, [(0, far), (1, near)], TrackerConfig())
        assert found[0] == 1


class TestCrowdedBpdis:
    def test_majority_disagreement_terminates(self):
        unit = unit_with_parts()
        suggestions = {
            C.HEAD: 1,
            C.DORSAL_FIN: 1,
            C.TAIL_FIN: 1,
            C.ANAL_FIN: 0,
        }
        assert crowded_bpdis(unit, assoc_for(unit, 0, suggestions)) is True

    def test_single_disagreement_keeps(self):
        unit = unit_with_parts()
        assert crowded_bpdis(unit, assoc_for(unit, 0, {C.HEAD: 1})) is False

    def test_full_agreement_keeps(self):
        unit = unit_with_parts()
        suggestions = {cls: 0 for cls in (C.HEAD, C.DORSAL_FIN, C.TAIL_FIN)}
        assert crowded_bpdis(unit, assoc_for(unit, 0, suggestions)) is False

    def test_two_disagree_two_agree_keeps(self):
        unit = unit_with_parts()
        suggestions = {C.HEAD: 1, C.DORSAL_FIN: 1, C.TAIL_FIN: 0, C.ANAL_FIN: 0}
        assert crowded_bpdis(unit, assoc_for(unit, 0, suggestions)) is False

    def test_body_suggestions_do_not_count(self):
        # BODY is not a small part; its disagreement alone cannot terminate.
        unit = unit_with_parts()
        suggestions = {C.BODY: 1, C.HEAD: 1}
        assert crowded_bpdis(unit, assoc_for(unit, 0, suggestions)) is False

    def test_unmatched_unit_keeps(self):
        unit = unit_with_parts()
        assert crowded_bpdis(unit, assoc_for(unit, None, {C.HEAD: 1})) is False


class TestCrowdedNobp:
    def test_overlapping_parts_keep(self):
        unit = unit_with_parts()
        assert crowded_nobp(unit, fish_group(1, 2.0)) is False

    def test_zero_overlap_terminates(self):
        unit = unit_with_parts()
        assert crowded_nobp(unit, fish_group(1, 200.0)) is True

    def test_fresh_unit_without_part_tracks_keeps(self):
        g = salmon_group(0, box(0, 0, 60, 20))
        unit = TrackUnit(unit_id=1, subtracks={C.SALMON: SubTrack.spawn(1, g.salmon)})
        assert crowded_nobp(unit, fish_group(1, 0.0)) is False

    def test_group_without_parts_terminates(self):
        unit = unit_with_parts()
        bare = salmon_group(1, box(0, 0, 60, 20))
        assert crowded_nobp(unit, bare) is True


class TestCrowdedBpiou:
    def test_part_closer_to_own_prediction_kept(self):
        unit = unit_with_parts(x=0.0)
        groups = [fish_group(1, 1.0), fish_group(1, 45.0)]
        assert C.TAIL_FIN not in crowded_bpiou(unit, 0, groups)

    def test_part_closer_to_neighbour_suppressed(self):
        unit = unit_with_parts(x=0.0)
        matched = fish_group(1, 0.0)
        # Replace the matched group's tail fin with a box sitting on the
        # neighbour group's tail fin, far from this unit's prediction.
        neighbour = fish_group(1, 40.0)
        matched.parts[C.TAIL_FIN] = det(1, C.TAIL_FIN, box(40, 4, 49, 16))
        suppressed = crowded_bpiou(unit, 0, [matched, neighbour])
        assert C.TAIL_FIN in suppressed

    def test_single_group_suppresses_nothing(self):
        unit = unit_with_parts()
        assert crowded_bpiou(unit, 0, [fish_group(1, 0.0)]) == []


def drive(tracker, frames_groups):
    records = []
    for frame, groups in enumerate(frames_groups):
        records += tracker.step(frame, groups)
    return records


class TestUnitTrackerScenarios:
    def cfg(self, **kw):
        defaults = dict(image_width=2000, image_height=2000)
        defaults.update(kw)
        return TrackerConfig(**defaults)

    def test_isolated_fish_keeps_every_part_id(self):
        tracker = UnitTracker(self.cfg())
        records = drive(
            tracker, [[fish_group(f, 3.0 * f)] for f in range(10)]
        )
        assert {r.track_id for r in records} == {1}
        for cls in (C.SALMON, *PART_LAYOUT):
            assert sum(1 for r in records if r.cls is cls) == 10

    def test_tail_fin_retains_id_through_occlusion(self):
        tracker = UnitTracker(self.cfg())
        frames = []
        for f in range(10):
            missing = (C.TAIL_FIN,) if 4 <= f <= 6 else ()
            frames.append([fish_group(f, 3.0 * f, missing=missing)])
        records = drive(tracker, frames)
        tail = [r for r in records if r.cls is C.TAIL_FIN]
        assert sorted(r.frame for r in tail) == [0, 1, 2, 3, 7, 8, 9]
        assert {r.track_id for r in tail} == {1}

    def test_part_subtrack_ids_constant_for_unit_lifetime(self):
        tracker = UnitTracker(self.cfg())
        seen = {}
        for f in range(12):
            missing = (C.ANAL_FIN,) if f % 3 == 0 else ()
            tracker.step(f, [fish_group(f, 2.0 * f, missing=missing)])
            unit = tracker.units[0]
            for cls, sub in unit.subtracks.items():
                seen.setdefault(cls, set()).add(sub.track_id)
        assert all(len(ids) == 1 for ids in seen.values())

    def test_terminated_unit_never_emits_again(self):
        tracker = UnitTracker(self.cfg(nobp_enabled=False, bpiou_enabled=False))
        # Establish two units.
        for f in range(4):
            tracker.step(f, [fish_group(f, 0.0), fish_group(f, 300.0)])
        assert len(tracker.units) == 2
        # Frame 4: unit 1's salmon matches a bare group at its position while
        # all of its parts vote for a group at 300 (unit 2's spot is free; a
        # decoy group carries parts exactly on unit 1's predictions).
        decoy_parts = {
            cls: box(a, b, c, d)
            for cls, (a, b, c, d) in PART_LAYOUT.items()
        }
        bare = salmon_group(4, box(0, 0, 60, 20))
        decoy = salmon_group(4, box(600, 0, 660, 20), decoy_parts)
        records = tracker.step(4, [bare, fish_group(4, 300.0), decoy])
        assert all(r.track_id != 1 for r in records)
        assert all(u.unit_id != 1 for u in tracker.units)
        assert any(e.module == "bpdis" and e.unit_id == 1 for e in tracker.events)
        # The discarded detection did not spawn a new unit at x=0 this frame.
        assert all(
            not (u.salmon.filter.box.x_min < 100 and u.unit_id != 2)
            for u in tracker.units
            if u.unit_id in (1, 2)
        )
        later = tracker.step(5, [fish_group(5, 300.0)])
        assert all(r.track_id != 1 for r in later)

    def test_turn_accept_preserves_identity_under_compression(self):
        def run(turn_enabled):
            cfg = self.cfg(
                iou_threshold=0.65,
                turn_module_enabled=turn_enabled,
                bpdis_enabled=False,
                nobp_enabled=False,
                bpiou_enabled=False,
            )
            tracker = UnitTracker(cfg)
            ids = []
            # Warm up with five tall interior frames that build the counter,
            # then jump the box so the gated assignment fails but overlap
            # stays above the acceptance floor.
            for f in range(5):
                tall = salmon_group(
                    f, box(100, 500, 130, 560), {C.HEAD: box(100, 500, 110, 510)}
                )
                for r in tracker.step(f, [tall]):
                    ids.append(r.track_id)
            shifted = salmon_group(
                5, box(118, 500, 148, 560), {C.HEAD: box(118, 500, 128, 510)}
            )
            for r in tracker.step(5, [shifted]):
                ids.append(r.track_id)
            return ids

        with_turn = run(True)
        without_turn = run(False)
        assert len(set(with_turn)) == 1
        assert len(set(without_turn)) == 2

    def test_bpiou_suppressed_part_not_emitted(self):
        tracker = UnitTracker(self.cfg(bpdis_enabled=False, nobp_enabled=False))
        for f in range(3):
            tracker.step(f, [fish_group(f, 0.0), fish_group(f, 200.0)])
        # Matched group's tail fin now sits on the neighbour's tail fin.
        own = fish_group(3, 0.0)
        own.parts[C.TAIL_FIN] = det(3, C.TAIL_FIN, box(200, 4, 208, 16))
        records = tracker.step(3, [own, fish_group(3, 200.0)])
        unit1_tail = [
            r for r in records if r.track_id == 1 and r.cls is C.TAIL_FIN
        ]
        assert unit1_tail == []
        assert any(e.module == "bpiou" and e.unit_id == 1 for e in tracker.events)

    def test_all_modules_disabled_equals_independent_tracker(self):
        rng = SplitMix64(5)
        frames_groups = []
        for f in range(40):
            groups = []
            for k in range(3):
                x = 150.0 * k + 2.0 * f + rng.uniform(-1, 1)
                missing = (C.ANAL_FIN,) if rng.uniform() < 0.2 else ()
                groups.append(fish_group(f, x, missing=missing))
            frames_groups.append(groups)

        cfg = TrackerConfig(
            turn_module_enabled=False,
            bpdis_enabled=False,
            nobp_enabled=False,
            bpiou_enabled=False,
        )
        unit_tracker = UnitTracker(cfg)
        unit_records = drive(unit_tracker, frames_groups)
        salmon_records = [r for r in unit_records if r.cls is C.SALMON]

        flat_tracker = IndependentTracker(cfg)
        flat_records = []
        for f, groups in enumerate(frames_groups):
            flat_records += flat_tracker.step(f, [g.salmon for g in groups])
        assert salmon_records == flat_records

    def test_mixed_frames_rejected(self):
        tracker = UnitTracker(self.cfg())
        with pytest.raises(ValueError, match="mixed"):
            tracker.step(2, [fish_group(1, 0.0)])
