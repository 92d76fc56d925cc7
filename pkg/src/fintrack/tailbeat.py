"""Tail-beat state extraction, smoothing, extrema detection, and wavelengths.

A tracked unit's per-frame component boxes are reduced to a scalar tail
state (three representations), smoothed with a quadratic Savitzky-Golay
filter, and scanned for prominent extrema; frame distances between
consecutive maxima (or minima) are the tail-beat wavelengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import find_peaks

from .geometry import Point2, tip_ratio
from .model import BBox, ComponentClass, PART_CLASSES, TrackRecord


class Representation(Enum):
    TIP = "tip"
    TAILFIN_WIDTH = "tailfin"
    SALMON_WIDTH = "salmon"


_REQUIRED: dict[Representation, tuple[ComponentClass, ...]] = {
    Representation.TIP: (
        ComponentClass.ANAL_FIN,
        ComponentClass.ADIPOSE_FIN,
        ComponentClass.TAIL_FIN,
        ComponentClass.BODY,
    ),
    Representation.TAILFIN_WIDTH: (ComponentClass.TAIL_FIN,),
    Representation.SALMON_WIDTH: (ComponentClass.SALMON,),
}


@dataclass
class ComponentTrack:
    """Per-frame component boxes of one tracked unit."""

    unit_id: int
    boxes: dict[int, dict[ComponentClass, BBox]]

    def frames(self) -> list[int]:
        return sorted(self.boxes)


def records_to_tracks(records: list[TrackRecord]) -> list[ComponentTrack]:
    """Group track records into per-unit component tracks, ordered by unit id."""
    by_unit: dict[int, dict[int, dict[ComponentClass, BBox]]] = {}
    for rec in records:
        by_unit.setdefault(rec.track_id, {}).setdefault(rec.frame, {})[rec.cls] = rec.box
    return [ComponentTrack(uid, boxes) for uid, boxes in sorted(by_unit.items())]


@dataclass
class TailStateSeries:
    """One contiguous run of tail states with smoothing and extrema annotations."""

    unit_id: int
    representation: Representation
    frames: list[int]
    values: np.ndarray
    smoothed: np.ndarray | None = None
    smoothing_applied: bool = False
    maxima: list[int] = field(default_factory=list)
    minima: list[int] = field(default_factory=list)


def _state_value(parts: dict[ComponentClass, BBox], rep: Representation) -> float | None:
    if any(c not in parts for c in _REQUIRED[rep]):
        return None
    if rep is Representation.SALMON_WIDTH:
        return parts[ComponentClass.SALMON].width()
    if rep is Representation.TAILFIN_WIDTH:
        return parts[ComponentClass.TAIL_FIN].width()
    centers = {c: Point2(*parts[c].center()) for c in _REQUIRED[rep]}
    return tip_ratio(
        centers[ComponentClass.ANAL_FIN],
        centers[ComponentClass.ADIPOSE_FIN],
        centers[ComponentClass.TAIL_FIN],
        centers[ComponentClass.BODY],
    )


def extract_state(
    track: ComponentTrack, rep: Representation, max_gap: int = 3
) -> list[TailStateSeries]:
    """Tail-state value per frame, split into contiguous segments.

    Frames where the representation cannot be computed leave gaps: gaps of at
    most ``max_gap`` frames are filled by linear interpolation, longer ones
    split the series. Raises when no frame yields a value.
    """
    raw: list[tuple[int, float]] = []
    for frame in track.frames():
        value = _state_value(track.boxes[frame], rep)
        if value is not None:
            raw.append((frame, value))
    if not raw:
        raise ValueError(
            f"unit {track.unit_id}: no frame provides the components for {rep.value}"
        )

    segments: list[TailStateSeries] = []
    frames = [raw[0][0]]
    values = [raw[0][1]]
    for (f0, v0), (f1, v1) in zip(raw, raw[1:]):
        gap = f1 - f0 - 1
        if gap > max_gap:
            segments.append(
                TailStateSeries(track.unit_id, rep, frames, np.array(values, dtype=float))
            )
            frames, values = [f1], [v1]
            continue
        for k in range(1, gap + 1):
            frames.append(f0 + k)
            values.append(v0 + (v1 - v0) * k / (gap + 1))
        frames.append(f1)
        values.append(v1)
    segments.append(
        TailStateSeries(track.unit_id, rep, frames, np.array(values, dtype=float))
    )
    return segments


def _fit_at(values: np.ndarray, offsets: np.ndarray, polyorder: int) -> float:
    design = np.vander(offsets, polyorder + 1, increasing=True)
    coeffs = np.linalg.pinv(design)[0]
    return float(coeffs @ values)


def savgol_smooth(
    values, window: int = 11, polyorder: int = 2
) -> tuple[np.ndarray, bool]:
    """Savitzky-Golay smoothing; returns (smoothed, whether smoothing applied).

    Interior points use the precomputed centered least-squares weights; each
    boundary point refits the polynomial on its truncated one-sided window,
    which avoids the phase distortion of padded convolution. Series shorter
    than the window are returned unchanged with the flag False.
    """
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    if polyorder >= window:
        raise ValueError(f"polyorder {polyorder} must be smaller than window {window}")
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a one-dimensional series")
    n = len(x)
    if n < window:
        return x.copy(), False

    half = window // 2
    center = np.arange(-half, half + 1)
    weights = np.linalg.pinv(np.vander(center, polyorder + 1, increasing=True))[0]
    out = np.empty(n, dtype=float)
    out[half : n - half] = np.convolve(x, weights[::-1], mode="valid")
    for i in range(half):
        out[i] = _fit_at(x[: i + half + 1], np.arange(-i, half + 1), polyorder)
        j = n - 1 - i
        out[j] = _fit_at(x[j - half :], np.arange(-half, i + 1), polyorder)
    return out, True


def find_extrema(values, prominence: float) -> tuple[list[int], list[int]]:
    """Indices of local maxima and minima with at least the given prominence.

    Plateaus report their midpoint (rounded down); the first and last samples
    are never extrema.
    """
    x = np.asarray(values, dtype=float)
    if len(x) < 3:
        return [], []
    maxima, _ = find_peaks(x, prominence=prominence)
    minima, _ = find_peaks(-x, prominence=prominence)
    return maxima.tolist(), minima.tolist()


def tune_prominence(values, target_count: int, iterations: int = 50) -> float:
    """Bisect the prominence until the extrema count is closest to the target.

    Fifty probes over [0, max - min]; among probed prominences the one whose
    maxima+minima count is nearest the target wins, preferring the larger
    prominence on equal counts.
    """
    if target_count < 1:
        raise ValueError("target_count must be at least 1")
    x = np.asarray(values, dtype=float)
    span = float(x.max() - x.min()) if len(x) else 0.0
    if span <= 0.0:
        return 0.0

    def count(p: float) -> int:
        mx, mn = find_extrema(x, p)
        return len(mx) + len(mn)

    lo, hi = 0.0, span
    best_p = span
    best_diff: int | None = None
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        diff = abs(count(mid) - target_count)
        if best_diff is None or diff < best_diff or (diff == best_diff and mid > best_p):
            best_p, best_diff = mid, diff
        if count(mid) >= target_count:
            lo = mid
        else:
            hi = mid
    return best_p


def wavelengths(maxima: list[int], minima: list[int], frames: list[int]) -> list[float]:
    """Frame distances between consecutive maxima, then consecutive minima."""
    out: list[float] = []
    for idx in (maxima, minima):
        for a, b in zip(idx, idx[1:]):
            out.append(float(frames[b] - frames[a]))
    return out


def annotate_extrema(series: TailStateSeries, prominence: float | None = None,
                     target_count: int | None = None,
                     window: int = 11, polyorder: int = 2) -> TailStateSeries:
    """Smooth a series and mark its extrema, tuning prominence when a target is given."""
    series.smoothed, series.smoothing_applied = savgol_smooth(
        series.values, window, polyorder
    )
    if prominence is None:
        if target_count is None:
            prominence = 0.0
        else:
            prominence = tune_prominence(series.smoothed, target_count)
    series.maxima, series.minima = find_extrema(series.smoothed, prominence)
    return series


def filter_quality_tracks(
    tracks: list[ComponentTrack],
    min_diagonal: float = 200.0,
    min_length: int = 50,
    require_all_parts: bool = True,
) -> list[ComponentTrack]:
    """Keep only analysis-grade stretches of each track.

    Frames with a small salmon box (diagonal below ``min_diagonal``) or, when
    ``require_all_parts`` is set, any missing body part are removed; runs
    shorter than ``min_length`` are dropped; of the surviving runs, only the
    longest (earliest on ties) is kept per unit.
    """
    kept: list[ComponentTrack] = []
    for track in tracks:
        good: list[int] = []
        for frame in track.frames():
            parts = track.boxes[frame]
            salmon = parts.get(ComponentClass.SALMON)
            if salmon is None or salmon.diagonal() < min_diagonal:
                continue
            if require_all_parts and any(c not in parts for c in PART_CLASSES):
                continue
            good.append(frame)

        runs: list[list[int]] = []
        for frame in good:
            if runs and frame == runs[-1][-1] + 1:
                runs[-1].append(frame)
            else:
                runs.append([frame])
        runs = [r for r in runs if len(r) >= min_length]
        if not runs:
            continue
        best = max(runs, key=len)  # max() keeps the earliest on ties
        kept.append(
            ComponentTrack(track.unit_id, {f: track.boxes[f] for f in best})
        )
    return kept
