"""Shared builders for tracker tests."""

from __future__ import annotations

from fintrack import (
    BBox,
    ComponentClass,
    Detection,
    GroupedDetection,
    TrackerConfig,
)


def box(x0, y0, x1, y1) -> BBox:
    return BBox(float(x0), float(y0), float(x1), float(y1))


def det(frame, cls, b, conf=1.0, gid=None) -> Detection:
    return Detection(frame, cls, b, conf, gid)


def salmon_group(
    frame: int,
    salmon_box: BBox,
    parts: dict[ComponentClass, BBox] | None = None,
    conf: float = 1.0,
) -> GroupedDetection:
    return GroupedDetection(
        salmon=det(frame, ComponentClass.SALMON, salmon_box, conf),
        parts={
            cls: det(frame, cls, b, conf) for cls, b in (parts or {}).items()
        },
    )


def config(**kwargs) -> TrackerConfig:
    return TrackerConfig(**kwargs)
