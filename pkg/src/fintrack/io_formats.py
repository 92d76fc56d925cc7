"""Bit-exact CSV/JSON formats shared by the CLI stages.

Files are UTF-8 with LF line endings and a mandatory header. Numbers are
written with at most three fractional digits and no trailing zeros, so
serialising what was parsed reproduces a canonical file byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

from .model import BBox, ComponentClass, Detection, GroupedDetection, TrackRecord
from .simulate import GtEntry
from .unit_tracker import ModuleEvent

DETECTION_HEADER = "frame,class,x_min,y_min,x_max,y_max,confidence,group_id"
TRACK_HEADER = "frame,track_id,class,x_min,y_min,x_max,y_max,confidence"
EVENT_HEADER = "frame,module,unit_id,detail"
SERIES_HEADER = "unit_id,representation,frame,raw_value,smoothed_value,is_max,is_min"


class FormatError(ValueError):
    """Malformed file content; carries the offending line number."""

    def __init__(self, path, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


def fmt_num(value: float) -> str:
    """Canonical decimal with up to three fractional digits."""
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    if text in ("-0", ""):
        return "0"
    return text


def _parse_float(path, line_no: int, field: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise FormatError(path, line_no, f"non-numeric {field}: {value!r}") from None


def _parse_int(path, line_no: int, field: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise FormatError(path, line_no, f"non-integer {field}: {value!r}") from None


def write_detections(path, detections: list[Detection]) -> None:
    lines = [DETECTION_HEADER]
    for d in detections:
        gid = "" if d.group_id is None else str(d.group_id)
        lines.append(
            ",".join(
                (
                    str(d.frame),
                    d.cls.value,
                    fmt_num(d.box.x_min),
                    fmt_num(d.box.y_min),
                    fmt_num(d.box.x_max),
                    fmt_num(d.box.y_max),
                    fmt_num(d.confidence),
                    gid,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_detections(path) -> list[Detection]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != DETECTION_HEADER:
        raise FormatError(path, 1, f"expected header {DETECTION_HEADER!r}")
    out: list[Detection] = []
    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 8:
            raise FormatError(path, line_no, f"expected 8 columns, got {len(fields)}")
        frame = _parse_int(path, line_no, "frame", fields[0])
        try:
            cls = ComponentClass.from_tag(fields[1])
        except ValueError as exc:
            raise FormatError(path, line_no, str(exc)) from None
        coords = [
            _parse_float(path, line_no, name, fields[i])
            for i, name in ((2, "x_min"), (3, "y_min"), (4, "x_max"), (5, "y_max"))
        ]
        conf = _parse_float(path, line_no, "confidence", fields[6])
        gid = None if fields[7] == "" else _parse_int(path, line_no, "group_id", fields[7])
        try:
            box = BBox(*coords)
            out.append(Detection(frame, cls, box, conf, gid))
        except ValueError as exc:
            raise FormatError(path, line_no, str(exc)) from None
    return out


def write_tracks(path, records: list[TrackRecord]) -> None:
    lines = [TRACK_HEADER]
    for r in records:
        lines.append(
            ",".join(
                (
                    str(r.frame),
                    str(r.track_id),
                    r.cls.value,
                    fmt_num(r.box.x_min),
                    fmt_num(r.box.y_min),
                    fmt_num(r.box.x_max),
                    fmt_num(r.box.y_max),
                    fmt_num(r.confidence),
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_tracks(path) -> list[TrackRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != TRACK_HEADER:
        raise FormatError(path, 1, f"expected header {TRACK_HEADER!r}")
    out: list[TrackRecord] = []
    seen: set[tuple[int, int, ComponentClass]] = set()
    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 8:
            raise FormatError(path, line_no, f"expected 8 columns, got {len(fields)}")
        frame = _parse_int(path, line_no, "frame", fields[0])
        track_id = _parse_int(path, line_no, "track_id", fields[1])
        try:
            cls = ComponentClass.from_tag(fields[2])
        except ValueError as exc:
            raise FormatError(path, line_no, str(exc)) from None
        key = (frame, track_id, cls)
        if key in seen:
            raise FormatError(
                path, line_no, f"duplicate (frame, id, class) row: {frame},{track_id},{cls.value}"
            )
        seen.add(key)
        coords = [
            _parse_float(path, line_no, name, fields[i])
            for i, name in ((3, "x_min"), (4, "y_min"), (5, "x_max"), (6, "y_max"))
        ]
        conf = _parse_float(path, line_no, "confidence", fields[7])
        try:
            out.append(TrackRecord(frame, track_id, cls, BBox(*coords), conf))
        except ValueError as exc:
            raise FormatError(path, line_no, str(exc)) from None
    return out


def flatten_groups(groups_by_frame: dict[int, list[GroupedDetection]]) -> list[Detection]:
    """Flatten grouped detections to file rows with per-frame group ids."""
    out: list[Detection] = []
    for frame in sorted(groups_by_frame):
        for gid, group in enumerate(groups_by_frame[frame]):
            out.append(replace(group.salmon, group_id=gid))
            for cls in ComponentClass:
                det = group.parts.get(cls)
                if det is not None:
                    out.append(replace(det, group_id=gid))
    return out


def gt_to_records(entries: list[GtEntry]) -> list[TrackRecord]:
    """Ground truth entries as track records (object id in the track_id column)."""
    return [
        TrackRecord(e.frame, e.fish_id, e.cls, e.box, 1.0) for e in entries
    ]


def write_events(path, events: list[ModuleEvent]) -> None:
    lines = [EVENT_HEADER]
    for e in events:
        lines.append(f"{e.frame},{e.module},{e.unit_id},{e.detail}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_series(path, series_list) -> None:
    """Tail-state series rows, one per frame of every segment."""
    lines = [SERIES_HEADER]
    for s in series_list:
        maxima = set(s.maxima)
        minima = set(s.minima)
        for i, frame in enumerate(s.frames):
            smoothed = s.smoothed[i] if s.smoothed is not None else s.values[i]
            lines.append(
                ",".join(
                    (
                        str(s.unit_id),
                        s.representation.value,
                        str(frame),
                        fmt_num(float(s.values[i])),
                        fmt_num(float(smoothed)),
                        "1" if i in maxima else "0",
                        "1" if i in minima else "0",
                    )
                )
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_json(path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def scenario_meta(scenario) -> dict:
    """Sidecar metadata: labels, endpoints, tail periods, true extrema."""
    meta: dict = {
        "kind": scenario.kind,
        "seed": scenario.config.seed,
        "image_width": scenario.config.image_width,
        "image_height": scenario.config.image_height,
        "n_frames": scenario.config.n_frames,
        "fish": [],
        "stats": scenario.stats,
    }
    for fish in scenario.fishes:
        entry: dict = {
            "fish_id": fish.fish_id,
            "body_length": round(fish.body_length, 3),
            "tail_period": fish.tail_period,
            "tail_phase": fish.tail_phase,
        }
        if fish.fish_id in scenario.categories:
            entry["category"] = scenario.categories[fish.fish_id]
        if fish.fish_id in scenario.endpoints:
            (ef, eb), (lf, lb) = scenario.endpoints[fish.fish_id]
            entry["endpoints"] = {
                "early": {"frame": ef, "box": [eb.x_min, eb.y_min, eb.x_max, eb.y_max]},
                "late": {"frame": lf, "box": [lb.x_min, lb.y_min, lb.x_max, lb.y_max]},
            }
        if fish.fish_id in scenario.extrema:
            entry["extrema"] = scenario.extrema[fish.fish_id]
        meta["fish"].append(entry)
    return meta
