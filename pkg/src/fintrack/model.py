"""Domain types shared by every stage: boxes, component taxonomy, detections.

The taxonomy ships one parent class (SALMON) plus eight body-part classes,
giving nine tracked classes per individual. Swapping the part list only
requires editing :class:`ComponentClass`; all counts downstream are derived
from it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

logger = logging.getLogger(__name__)


class ComponentClass(Enum):
    SALMON = "salmon"
    HEAD = "head"
    BODY = "body"
    DORSAL_FIN = "dorsal_fin"
    ADIPOSE_FIN = "adipose_fin"
    TAIL_FIN = "tail_fin"
    ANAL_FIN = "anal_fin"
    PELVIC_FIN = "pelvic_fin"
    PECTORAL_FIN = "pectoral_fin"

    @property
    def is_part(self) -> bool:
        return self is not ComponentClass.SALMON

    @property
    def is_small(self) -> bool:
        """True for the head and all fins; false for the parent and the trunk."""
        return self not in (ComponentClass.SALMON, ComponentClass.BODY)

    @classmethod
    def from_tag(cls, tag: str) -> "ComponentClass":
        try:
            return cls(tag)
        except ValueError:
            raise ValueError(f"unknown component class tag {tag!r}") from None


PART_CLASSES: tuple[ComponentClass, ...] = tuple(
    c for c in ComponentClass if c.is_part
)
SMALL_PART_CLASSES: tuple[ComponentClass, ...] = tuple(
    c for c in ComponentClass if c.is_small
)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, corners (x_min, y_min), (x_max, y_max)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box: {self}")

    def width(self) -> float:
        return self.x_max - self.x_min

    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width() * self.height()

    def diagonal(self) -> float:
        return (self.width() ** 2 + self.height() ** 2) ** 0.5

    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))


@dataclass(frozen=True)
class Detection:
    """One detected component box in one frame.

    ``group_id`` ties body parts to their parent salmon detection within the
    same frame; it carries no meaning across frames.
    """

    frame: int
    cls: ComponentClass
    box: BBox
    confidence: float
    group_id: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass
class GroupedDetection:
    """A salmon detection plus its per-class body-part boxes for one frame."""

    salmon: Detection
    parts: dict[ComponentClass, Detection] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.salmon.cls is not ComponentClass.SALMON:
            raise ValueError("grouped detection must be anchored on a salmon box")
        for cls, det in self.parts.items():
            if cls is ComponentClass.SALMON:
                raise ValueError("parts map must not contain a salmon entry")
            if det.frame != self.salmon.frame:
                raise ValueError("part frame differs from salmon frame")

    @property
    def frame(self) -> int:
        return self.salmon.frame

    def visible_part_count(self) -> int:
        return sum(1 for d in self.parts.values() if d.confidence > 0.0)

    def part(self, cls: ComponentClass) -> Detection | None:
        det = self.parts.get(cls)
        if det is not None and det.confidence <= 0.0:
            return None
        return det


@dataclass(frozen=True)
class TrackerConfig:
    """Knobs shared by both tracker variants.

    Defaults follow the reference operating point: ``min_hits`` 0 (tracks emit
    from their first frame), turning acceptance floor 0.05, turning counter
    bounded at 10, and the lateral-orientation visibility threshold at 7 parts.
    """

    iou_threshold: float = 0.2
    hidden_length: int = 3
    min_hits: int = 0
    turn_module_enabled: bool = True
    bpdis_enabled: bool = True
    nobp_enabled: bool = True
    bpiou_enabled: bool = True
    turn_iou_floor: float = 0.05
    turn_counter_max: int = 10
    turn_visibility_count: int = 7
    boost_weight: float = 0.0
    boundary_margin_frac: float = 0.02
    image_width: float | None = None
    image_height: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must be in (0, 1]")
        if self.hidden_length < 1:
            raise ValueError("hidden_length must be a positive integer")
        if self.min_hits < 0:
            raise ValueError("min_hits must be non-negative")
        if self.turn_counter_max < 0:
            raise ValueError("turn_counter_max must be non-negative")


@dataclass(frozen=True)
class TrackRecord:
    """One emitted track observation: the unit of every downstream analysis."""

    frame: int
    track_id: int
    cls: ComponentClass
    box: BBox
    confidence: float


def keybox_confidence(
    corner_conf_a: float, corner_conf_b: float, salmon_conf: float
) -> float:
    """Fuse the two corner-keypoint confidences of a part box with its parent's.

    Returns the corner average scaled by the salmon confidence; monotone
    non-decreasing in every argument.
    """
    for v in (corner_conf_a, corner_conf_b, salmon_conf):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"confidence {v} outside [0, 1]")
    return 0.5 * (corner_conf_a + corner_conf_b) * salmon_conf


def group_detections(flat: list[Detection], frame: int) -> list[GroupedDetection]:
    """Reassemble grouped detections from a flat per-frame detection list.

    One group is emitted per distinct ``group_id`` that has a salmon member;
    a salmon with no group_id forms a singleton group. Body parts without a
    matching salmon (missing or unknown group_id) are dropped and counted in
    a single warning. Two salmon sharing a group_id is a format error.
    """
    for det in flat:
        if det.frame != frame:
            raise ValueError(f"detection frame {det.frame} != {frame}")

    salmon_by_gid: dict[int, Detection] = {}
    singletons: list[Detection] = []
    for det in flat:
        if det.cls is not ComponentClass.SALMON:
            continue
        if det.group_id is None:
            singletons.append(det)
        elif det.group_id in salmon_by_gid:
            raise ValueError(
                f"two salmon detections share group_id {det.group_id} in frame {frame}"
            )
        else:
            salmon_by_gid[det.group_id] = det

    parts_by_gid: dict[int, dict[ComponentClass, Detection]] = {}
    dropped = 0
    for det in flat:
        if det.cls is ComponentClass.SALMON:
            continue
        if det.group_id is None or det.group_id not in salmon_by_gid:
            dropped += 1
            continue
        parts_by_gid.setdefault(det.group_id, {})[det.cls] = det

    if dropped:
        logger.warning("frame %d: dropped %d ungrouped body-part detections", frame, dropped)

    groups: list[GroupedDetection] = []
    for det in flat:
        if det.cls is not ComponentClass.SALMON:
            continue
        if det.group_id is None:
            groups.append(GroupedDetection(salmon=det))
        else:
            groups.append(
                GroupedDetection(salmon=det, parts=parts_by_gid.get(det.group_id, {}))
            )
    return groups
