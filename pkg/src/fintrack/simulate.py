"""Deterministic synthetic scene generator with full ground truth.

Fish are laterally viewed 2D silhouettes: a spine segment carrying nine
component boxes, with the tail section swinging sinusoidally. Turning is
modelled as a horizontal compression of the projected silhouette (width
shrinks below height at the apex) combined with loss of the laterally
visible parts, which reproduces exactly the signals the turning rules read.

All randomness flows through SplitMix64 with its published constants, so a
seed pins every output byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import cos, log, pi, sin, sqrt

import numpy as np

from .geometry import iou
from .model import BBox, ComponentClass, Detection, GroupedDetection

MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele et al. constants, 64-bit wraparound)."""

    GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * (self.next_u64() / 2.0**64)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]; modulo bias is negligible at 64 bits."""
        return lo + self.next_u64() % (hi - lo + 1)

    def normal(self, std: float = 1.0) -> float:
        u1 = max(self.uniform(), 1e-300)
        u2 = self.uniform()
        return std * sqrt(-2.0 * log(u1)) * cos(2.0 * pi * u2)

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]


def frame_rng(seed: int, frame: int) -> SplitMix64:
    return SplitMix64(((seed & MASK64) * SplitMix64.GAMMA + frame + 1) & MASK64)


# Component layout along the spine: (u_front, u_back, y_top, y_bot, sway)
# with u in [0, 1] nose-to-tail and y in body lengths (negative = dorsal).
_LAYOUT: dict[ComponentClass, tuple[float, float, float, float, float]] = {
    ComponentClass.HEAD: (0.00, 0.18, -0.10, 0.10, 0.0),
    ComponentClass.BODY: (0.12, 0.78, -0.13, 0.13, 0.0),
    ComponentClass.DORSAL_FIN: (0.35, 0.52, -0.24, -0.11, 0.0),
    ComponentClass.ADIPOSE_FIN: (0.70, 0.80, -0.19, -0.09, 0.35),
    ComponentClass.TAIL_FIN: (0.85, 1.00, -0.12, 0.12, 1.0),
    ComponentClass.ANAL_FIN: (0.68, 0.80, 0.09, 0.19, 0.35),
    ComponentClass.PELVIC_FIN: (0.44, 0.58, 0.10, 0.22, 0.0),
    ComponentClass.PECTORAL_FIN: (0.16, 0.30, 0.06, 0.18, 0.0),
}

# Width factor below which a part leaves the projected silhouette.
_VISIBILITY_FLOOR: dict[ComponentClass, float] = {
    ComponentClass.HEAD: 0.10,
    ComponentClass.BODY: 0.45,
    ComponentClass.DORSAL_FIN: 0.0,
    ComponentClass.ADIPOSE_FIN: 0.60,
    ComponentClass.TAIL_FIN: 0.22,
    ComponentClass.ANAL_FIN: 0.60,
    ComponentClass.PELVIC_FIN: 0.0,
    ComponentClass.PECTORAL_FIN: 0.70,
}

# Tail-fin chord modulation: the leading edge sways a lot, the trailing tip
# only a little, so the tail-fin width carries most of the beat signal while
# the whole-fish width carries only a faint copy of it.
_TAIL_TIP_SWAY = 0.015
_TAIL_FRONT_SWAY = 0.04

_TURN_MIN_WIDTH = 0.18


@dataclass(frozen=True)
class Maneuver:
    start: int
    end: int
    kind: str = "turn"


@dataclass
class SimFish:
    """One simulated fish with its precomputed per-frame trajectory."""

    fish_id: int
    body_length: float
    tail_period: int
    tail_amplitude: float
    tail_phase: int
    depth: int
    xs: list[float]
    ys: list[float]
    headings: list[float]
    w_factors: list[float]
    blackout: list[bool]
    maneuvers: list[Maneuver] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.tail_period < 6:
            raise ValueError("tail_period must be at least 6 frames")
        if self.body_length <= 0:
            raise ValueError("body_length must be positive")


def make_fish(
    fish_id: int,
    start: tuple[float, float],
    speed: float,
    n_frames: int,
    body_length: float,
    tail_period: int,
    tail_amplitude: float,
    tail_phase: int,
    depth: int,
    maneuvers: list[Maneuver] | None = None,
    bob_amplitude: float = 0.0,
    bob_period: int = 60,
    bob_phase: float = 0.0,
    surge_amplitude: float = 0.0,
    surge_period: int = 60,
    surge_phase: float = 0.0,
    dropouts: list[tuple[int, int]] | None = None,
) -> SimFish:
    """Integrate a trajectory frame by frame.

    Outside maneuvers the fish swims at its base speed, optionally modulated
    by a burst-and-glide surge wave, with a sinusoidal vertical wander.
    During a turn the horizontal velocity reverses smoothly, the projected
    width compresses to a fraction of the body length and back, and the
    three apex frames black out detection entirely (a frontal fish defeats
    the detector). ``dropouts`` are extra undetectable frame windows,
    emulating motion-blur episodes.
    """
    maneuvers = maneuvers or []
    xs: list[float] = []
    ys: list[float] = []
    headings: list[float] = []
    w_factors: list[float] = []
    blackout: list[bool] = []
    x = float(start[0])
    base_y = float(start[1])
    direction = 1.0 if speed >= 0 else -1.0
    v_mag = abs(speed)

    dropouts = dropouts or []
    for t in range(n_frames):
        surge = 1.0 + surge_amplitude * sin(2.0 * pi * t / surge_period + surge_phase)
        active = next((m for m in maneuvers if m.start <= t < m.end), None)
        if active is None:
            vx = direction * v_mag * surge
            w = 1.0
            dark = False
            head = direction
        else:
            p = (t - active.start) / (active.end - active.start)
            vx = direction * v_mag * cos(pi * p)
            w = 1.0 - (1.0 - _TURN_MIN_WIDTH) * (1.0 - abs(2.0 * p - 1.0))
            apex = (active.start + active.end) // 2
            dark = abs(t - apex) <= 1
            head = direction if t < apex else -direction
        dark = dark or any(s <= t < e for s, e in dropouts)
        xs.append(x)
        ys.append(base_y + bob_amplitude * sin(2.0 * pi * t / bob_period + bob_phase))
        headings.append(head)
        w_factors.append(w)
        blackout.append(dark)
        x += vx
        if active is not None and t == active.end - 1:
            direction = -direction

    return SimFish(
        fish_id=fish_id,
        body_length=body_length,
        tail_period=tail_period,
        tail_amplitude=tail_amplitude,
        tail_phase=tail_phase,
        depth=depth,
        xs=xs,
        ys=ys,
        headings=headings,
        w_factors=w_factors,
        blackout=blackout,
        maneuvers=maneuvers,
    )


def component_boxes(fish: SimFish, frame: int) -> dict[ComponentClass, BBox]:
    """True boxes of every component at a frame; SALMON bounds all parts."""
    length = fish.body_length
    cx, cy = fish.xs[frame], fish.ys[frame]
    heading = fish.headings[frame]
    w = fish.w_factors[frame]
    beat = sin(2.0 * pi * (frame - fish.tail_phase) / fish.tail_period)
    sway = fish.tail_amplitude * length * beat

    boxes: dict[ComponentClass, BBox] = {}
    for cls, (u0, u1, y0, y1, weight) in _LAYOUT.items():
        if cls is ComponentClass.TAIL_FIN:
            u0 = u0 - _TAIL_FRONT_SWAY * beat
            u1 = u1 + _TAIL_TIP_SWAY * beat
        xa = cx + (0.5 - u0) * length * w * heading
        xb = cx + (0.5 - u1) * length * w * heading
        off = weight * sway
        boxes[cls] = BBox(
            min(xa, xb), cy + y0 * length + off, max(xa, xb), cy + y1 * length + off
        )

    x_min = min(b.x_min for b in boxes.values())
    y_min = min(b.y_min for b in boxes.values())
    x_max = max(b.x_max for b in boxes.values())
    y_max = max(b.y_max for b in boxes.values())
    boxes[ComponentClass.SALMON] = BBox(x_min, y_min, x_max, y_max)
    return boxes


def part_visibility(fish: SimFish, frame: int) -> dict[ComponentClass, bool]:
    w = fish.w_factors[frame]
    vis = {cls: w > floor for cls, floor in _VISIBILITY_FLOOR.items()}
    vis[ComponentClass.SALMON] = True
    return vis


def cover_fraction(box: BBox, covers: list[BBox]) -> float:
    """Exact fraction of ``box`` covered by the union of ``covers``."""
    area = box.area()
    if area <= 0.0:
        return 0.0
    rects = []
    for c in covers:
        x0 = max(box.x_min, c.x_min)
        y0 = max(box.y_min, c.y_min)
        x1 = min(box.x_max, c.x_max)
        y1 = min(box.y_max, c.y_max)
        if x1 > x0 and y1 > y0:
            rects.append((x0, y0, x1, y1))
    if not rects:
        return 0.0
    xs = np.unique([r[0] for r in rects] + [r[2] for r in rects])
    ys = np.unique([r[1] for r in rects] + [r[3] for r in rects])
    grid = np.zeros((len(xs) - 1, len(ys) - 1), dtype=bool)
    for x0, y0, x1, y1 in rects:
        i0, i1 = np.searchsorted(xs, (x0, x1))
        j0, j1 = np.searchsorted(ys, (y0, y1))
        grid[i0:i1, j0:j1] = True
    cell = np.diff(xs)[:, None] * np.diff(ys)[None, :]
    return float((cell * grid).sum() / area)


@dataclass(frozen=True)
class SceneConfig:
    n_fish: int
    n_frames: int
    image_width: float
    image_height: float
    seed: int
    jitter_std: float = 0.0
    miss_base: float = 0.0
    miss_slope: float = 1.0
    conf_base: float = 0.95
    gt_occlusion_cap: float = 0.9


@dataclass(frozen=True)
class GtEntry:
    frame: int
    fish_id: int
    cls: ComponentClass
    box: BBox
    occlusion: float


def render_frame(
    scene: SceneConfig, fishes: list[SimFish], frame: int
) -> tuple[list[GtEntry], list[GroupedDetection]]:
    """Ground truth entries and noisy grouped detections for one frame."""
    if frame >= scene.n_frames:
        raise ValueError(f"frame {frame} beyond configured range {scene.n_frames}")
    rng = frame_rng(scene.seed, frame)
    ordered = sorted(fishes, key=lambda f: f.fish_id)
    boxes = {f.fish_id: component_boxes(f, frame) for f in ordered}
    visible = {f.fish_id: part_visibility(f, frame) for f in ordered}

    gt: list[GtEntry] = []
    grouped: list[GroupedDetection] = []
    for fish in ordered:
        fronts = [
            boxes[g.fish_id][ComponentClass.SALMON]
            for g in ordered
            if g.depth < fish.depth
        ]
        salmon_det: Detection | None = None
        parts: dict[ComponentClass, Detection] = {}
        for cls in ComponentClass:
            if not visible[fish.fish_id][cls]:
                continue
            box = boxes[fish.fish_id][cls]
            occ = cover_fraction(box, fronts)
            if occ <= scene.gt_occlusion_cap:
                gt.append(GtEntry(frame, fish.fish_id, cls, box, occ))

            miss_p = (
                1.0
                if fish.blackout[frame]
                else scene.miss_base + scene.miss_slope * occ
            )
            if rng.uniform() < miss_p:
                continue
            conf = min(1.0, max(0.0, scene.conf_base * (1.0 - occ)))
            if conf <= 0.0:
                continue
            jittered = _jitter_box(box, scene.jitter_std, rng)
            det = Detection(frame, cls, jittered, conf)
            if cls is ComponentClass.SALMON:
                salmon_det = det
            else:
                parts[cls] = det
        if salmon_det is not None:
            grouped.append(GroupedDetection(salmon=salmon_det, parts=parts))
    return gt, grouped


def _jitter_box(box: BBox, std: float, rng: SplitMix64) -> BBox:
    if std <= 0.0:
        return box
    x0 = box.x_min + rng.normal(std)
    y0 = box.y_min + rng.normal(std)
    x1 = box.x_max + rng.normal(std)
    y1 = box.y_max + rng.normal(std)
    return BBox(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))


@dataclass
class Scenario:
    kind: str
    config: SceneConfig
    fishes: list[SimFish]
    categories: dict[int, str] = field(default_factory=dict)
    endpoints: dict[int, tuple[tuple[int, BBox], tuple[int, BBox]]] = field(
        default_factory=dict
    )
    extrema: dict[int, dict[str, list[int]]] = field(default_factory=dict)
    stats: dict[str, float] = field(default_factory=dict)

    def render_all(
        self,
    ) -> tuple[list[GtEntry], dict[int, list[GroupedDetection]]]:
        gt: list[GtEntry] = []
        grouped: dict[int, list[GroupedDetection]] = {}
        for frame in range(self.config.n_frames):
            frame_gt, frame_groups = render_frame(self.config, self.fishes, frame)
            gt.extend(frame_gt)
            grouped[frame] = frame_groups
        return gt, grouped


def scenario_crowded(seed: int, n_fish: int = 22, n_frames: int = 200) -> Scenario:
    """Dense opposing streams of fish with frequent crossings and occlusions."""
    if n_fish < 2:
        raise ValueError("a crowded scene needs at least 2 fish")
    width, height = 1920.0, 1080.0
    rng = SplitMix64(seed)
    config = SceneConfig(
        n_fish=n_fish,
        n_frames=n_frames,
        image_width=width,
        image_height=height,
        seed=seed,
        jitter_std=1.5,
        miss_base=0.03,
        miss_slope=1.0,
    )

    depths = list(range(n_fish))
    rng.shuffle(depths)
    fishes: list[SimFish] = []
    for i in range(n_fish):
        length = rng.uniform(150.0, 230.0)
        speed = rng.uniform(2.2, 4.5)
        # The surge wave adds a bounded excursion on top of the mean travel.
        travel = speed * n_frames + 40.0
        margin = 0.7 * length
        if i % 2 == 0:
            x0 = rng.uniform(margin, max(margin + 1.0, width - margin - travel))
        else:
            x0 = rng.uniform(min(width - margin - 1.0, margin + travel), width - margin)
            speed = -speed
        y0 = rng.uniform(140.0, height - 140.0)
        period = rng.randint(18, 30)
        dropouts = []
        cursor = rng.randint(12, 55)
        while cursor < n_frames - 20:
            span = rng.randint(12, 26)
            dropouts.append((cursor, min(cursor + span, n_frames)))
            cursor += span + rng.randint(22, 55)
        fishes.append(
            make_fish(
                fish_id=i + 1,
                start=(x0, y0),
                speed=speed,
                n_frames=n_frames,
                body_length=length,
                tail_period=period,
                tail_amplitude=rng.uniform(0.10, 0.14),
                tail_phase=rng.randint(0, period - 1),
                depth=depths[i],
                bob_amplitude=rng.uniform(12.0, 26.0),
                bob_period=rng.randint(34, 70),
                bob_phase=rng.uniform(0.0, 2.0 * pi),
                surge_amplitude=rng.uniform(0.35, 0.55),
                surge_period=rng.randint(36, 70),
                surge_phase=rng.uniform(0.0, 2.0 * pi),
                dropouts=dropouts,
            )
        )

    overlap_frames = 0
    for frame in range(n_frames):
        salmon = [component_boxes(f, frame)[ComponentClass.SALMON] for f in fishes]
        if any(
            iou(salmon[a], salmon[b]) > 0.3
            for a in range(len(salmon))
            for b in range(a + 1, len(salmon))
        ):
            overlap_frames += 1
    frac = overlap_frames / n_frames
    if frac < 0.3:
        raise ValueError(
            f"crowded scene contract violated: only {frac:.0%} of frames have a >0.3 IoU overlap"
        )
    return Scenario(
        kind="crowded",
        config=config,
        fishes=fishes,
        stats={"overlap_frame_fraction": frac},
    )


def scenario_turning(
    seed: int, n_turning: int = 7, n_straight: int = 5, n_frames: int = 160
) -> Scenario:
    """Sparse lanes of fish, a majority performing one mid-sequence turn."""
    width, height = 1920.0, 1080.0
    rng = SplitMix64(seed)
    config = SceneConfig(
        n_fish=n_turning + n_straight,
        n_frames=n_frames,
        image_width=width,
        image_height=height,
        seed=seed,
        jitter_std=1.0,
        miss_base=0.01,
        miss_slope=1.0,
    )

    n_total = n_turning + n_straight
    lane_gap = (height - 220.0) / max(1, n_total - 1)
    lanes = [110.0 + i * lane_gap for i in range(n_total)]
    rng.shuffle(lanes)

    fishes: list[SimFish] = []
    categories: dict[int, str] = {}
    endpoints: dict[int, tuple[tuple[int, BBox], tuple[int, BBox]]] = {}
    for i in range(n_total):
        turning = i < n_turning
        length = rng.uniform(185.0, 230.0)
        speed = rng.uniform(2.4, 3.4) * (1.0 if rng.uniform() < 0.5 else -1.0)
        margin = 0.75 * length
        maneuvers: list[Maneuver] = []
        if turning:
            start = rng.randint(58, 72)
            maneuvers = [Maneuver(start=start, end=start + 32)]
            # Room for the run-up before the turn and the swim-back after it.
            x0 = rng.uniform(margin + 330.0, width - margin - 330.0)
        else:
            travel = abs(speed) * n_frames
            if speed > 0:
                x0 = rng.uniform(margin, max(margin + 1.0, width - margin - travel))
            else:
                x0 = rng.uniform(min(width - margin - 1.0, margin + travel), width - margin)
        fish = make_fish(
            fish_id=i + 1,
            start=(x0, lanes[i]),
            speed=speed,
            n_frames=n_frames,
            body_length=length,
            tail_period=rng.randint(20, 28),
            tail_amplitude=rng.uniform(0.10, 0.13),
            tail_phase=rng.randint(0, 19),
            depth=i,
            maneuvers=maneuvers,
        )
        fishes.append(fish)
        categories[fish.fish_id] = "Turning" if turning else "Straight"
        early_f, late_f = 5, n_frames - 6
        endpoints[fish.fish_id] = (
            (early_f, component_boxes(fish, early_f)[ComponentClass.SALMON]),
            (late_f, component_boxes(fish, late_f)[ComponentClass.SALMON]),
        )

    return Scenario(
        kind="turning",
        config=config,
        fishes=fishes,
        categories=categories,
        endpoints=endpoints,
    )


def scenario_tailbeat(
    seed: int,
    n_fish: int = 3,
    n_frames: int = 300,
    tail_period: int = 24,
    jitter_std: float = 0.0,
) -> Scenario:
    """Well-separated straight swimmers for tail-beat analysis, with true extrema."""
    width, height = 1920.0, 1080.0
    rng = SplitMix64(seed)
    config = SceneConfig(
        n_fish=n_fish,
        n_frames=n_frames,
        image_width=width,
        image_height=height,
        seed=seed,
        jitter_std=jitter_std,
        miss_base=0.0,
        miss_slope=1.0,
    )
    lane_gap = (height - 300.0) / max(1, n_fish - 1)
    fishes: list[SimFish] = []
    extrema: dict[int, dict[str, list[int]]] = {}
    for i in range(n_fish):
        speed = rng.uniform(0.9, 1.4) * (1.0 if i % 2 == 0 else -1.0)
        length = rng.uniform(250.0, 280.0)
        phase = rng.randint(0, tail_period - 1)
        travel = abs(speed) * n_frames
        margin = 0.75 * length
        if speed > 0:
            x0 = rng.uniform(margin, max(margin + 1.0, width - margin - travel))
        else:
            x0 = rng.uniform(min(width - margin - 1.0, margin + travel), width - margin)
        fish = make_fish(
            fish_id=i + 1,
            start=(x0, 150.0 + i * lane_gap),
            speed=speed,
            n_frames=n_frames,
            body_length=length,
            tail_period=tail_period,
            tail_amplitude=0.13,
            tail_phase=phase,
            depth=i,
        )
        fishes.append(fish)
        extrema[fish.fish_id] = {
            "maxima": _true_extrema(phase, tail_period, n_frames, 0.25),
            "minima": _true_extrema(phase, tail_period, n_frames, 0.75),
        }
    return Scenario(kind="tailbeat", config=config, fishes=fishes, extrema=extrema)


def _true_extrema(
    phase: int, period: int, n_frames: int, quarter: float
) -> list[int]:
    """Frames (rounded) where the tail sine hits +1 or -1."""
    out: list[int] = []
    t = phase + quarter * period
    while t < n_frames:
        frame = int(round(t))
        if 0 <= frame < n_frames:
            out.append(frame)
        t += period
    return out
