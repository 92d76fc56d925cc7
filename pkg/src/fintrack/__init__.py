"""Hierarchical fish and body-part tracking with tail-beat analysis."""

__version__ = "0.1.0"

from .model import (
    BBox,
    ComponentClass,
    Detection,
    GroupedDetection,
    TrackerConfig,
    TrackRecord,
    group_detections,
    keybox_confidence,
)
from .geometry import Point2, iou, segment_intersection, tip_ratio
from .kalman import BoxFilter, FilterParams
from .association import AssignmentResult, similarity_matrix, solve_assignment
from .tracker import IndependentTracker, SubTrack
from .unit_tracker import (
    FrameAssociation,
    TrackUnit,
    UnitTracker,
    crowded_bpdis,
    crowded_bpiou,
    crowded_nobp,
    turn_accept,
    turn_counter_update,
)
from .tailbeat import (
    ComponentTrack,
    Representation,
    TailStateSeries,
    annotate_extrema,
    extract_state,
    filter_quality_tracks,
    find_extrema,
    records_to_tracks,
    savgol_smooth,
    tune_prominence,
    wavelengths,
)
from .evaluate import (
    EndpointTrack,
    EventCounts,
    ExtremaScore,
    count_events,
    endpoint_link_rate,
    greedy_extrema_match,
    sweep_average,
)
from .simulate import (
    Maneuver,
    Scenario,
    SceneConfig,
    SimFish,
    SplitMix64,
    component_boxes,
    cover_fraction,
    render_frame,
    scenario_crowded,
    scenario_tailbeat,
    scenario_turning,
)

__all__ = [name for name in dir() if not name.startswith("_")]
