"""Command-line surface: simulate | track | eval | tailbeat | sweep.

Every command writes a ``manifest.json`` capturing the exact options, so a
rerun from the manifest reproduces the outputs byte for byte. ``sweep`` runs
its grid cells in parallel processes; cap the worker count with the
FINTRACK_MAX_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .evaluate import (
    EndpointTrack,
    count_events,
    endpoint_link_rate,
    greedy_extrema_match,
    sweep_average,
)
from .io_formats import (
    FormatError,
    flatten_groups,
    fmt_num,
    gt_to_records,
    read_detections,
    read_json,
    read_tracks,
    scenario_meta,
    write_detections,
    write_events,
    write_json,
    write_series,
    write_tracks,
)
from .model import (
    BBox,
    ComponentClass,
    TrackerConfig,
    TrackRecord,
    group_detections,
)
from .simulate import scenario_crowded, scenario_tailbeat, scenario_turning
from .tailbeat import (
    Representation,
    annotate_extrema,
    extract_state,
    filter_quality_tracks,
    records_to_tracks,
)
from .tracker import IndependentTracker
from .unit_tracker import UnitTracker

IOU_GRID = (0.05, 0.2, 0.35, 0.5, 0.65)
HIDDEN_GRID = (3, 30)
MODULE_NAMES = ("turn", "bpdis", "nobp", "bpiou")


def parse_variant(token: str) -> tuple[str, frozenset[str]]:
    """'bt', 'bct', 'bct:all', 'bct:none' or 'bct:turn+bpdis+...'."""
    if token == "bt":
        return "bt", frozenset()
    if token == "bct":
        return "bct", frozenset(MODULE_NAMES)
    if token.startswith("bct:"):
        spec = token[4:]
        if spec == "all":
            return "bct", frozenset(MODULE_NAMES)
        if spec == "none":
            return "bct", frozenset()
        modules = frozenset(spec.split("+"))
        unknown = modules - set(MODULE_NAMES)
        if unknown:
            raise ValueError(f"unknown modules in variant {token!r}: {sorted(unknown)}")
        return "bct", modules
    raise ValueError(f"unknown tracker variant {token!r}")


def build_config(
    iou_threshold: float,
    hidden_length: int,
    modules: frozenset[str],
    min_hits: int = 0,
    image_size: tuple[float, float] | None = None,
) -> TrackerConfig:
    return TrackerConfig(
        iou_threshold=iou_threshold,
        hidden_length=hidden_length,
        min_hits=min_hits,
        turn_module_enabled="turn" in modules,
        bpdis_enabled="bpdis" in modules,
        nobp_enabled="nobp" in modules,
        bpiou_enabled="bpiou" in modules,
        image_width=None if image_size is None else image_size[0],
        image_height=None if image_size is None else image_size[1],
    )


def run_variant(
    detections,
    kind: str,
    cfg: TrackerConfig,
) -> tuple[list[TrackRecord], list]:
    """Run one tracker variant over a flat detection list; returns (records, events)."""
    by_frame: dict[int, list] = {}
    for det in detections:
        by_frame.setdefault(det.frame, []).append(det)
    last = max(by_frame) if by_frame else -1

    records: list[TrackRecord] = []
    if kind == "bt":
        tracker = IndependentTracker(cfg)
        for frame in range(last + 1):
            records.extend(tracker.step(frame, by_frame.get(frame, [])))
        return records, []
    tracker = UnitTracker(cfg)
    for frame in range(last + 1):
        grouped = group_detections(by_frame.get(frame, []), frame)
        records.extend(tracker.step(frame, grouped))
    return records, tracker.events


def _write_manifest(out_dir: Path, command: str, options: dict, outputs: list[str]) -> None:
    write_json(
        out_dir / "manifest.json",
        {
            "command": command,
            "options": options,
            "outputs": sorted(outputs),
            "version": __version__,
        },
    )


# ----------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.scenario == "crowded":
        scenario = scenario_crowded(args.seed, n_fish=args.n_fish, n_frames=args.n_frames)
    elif args.scenario == "turning":
        scenario = scenario_turning(args.seed, n_frames=args.n_frames)
    else:
        scenario = scenario_tailbeat(
            args.seed,
            n_frames=args.n_frames,
            tail_period=args.tail_period,
            jitter_std=args.jitter_std,
        )
    gt, grouped = scenario.render_all()
    write_detections(out / "detections.csv", flatten_groups(grouped))
    write_tracks(out / "gt.csv", gt_to_records(gt))
    write_json(out / "meta.json", scenario_meta(scenario))
    _write_manifest(
        out,
        "simulate",
        {
            "scenario": args.scenario,
            "seed": args.seed,
            "n_fish": args.n_fish,
            "n_frames": args.n_frames,
            "tail_period": args.tail_period,
            "jitter_std": args.jitter_std,
        },
        ["detections.csv", "gt.csv", "meta.json"],
    )
    return 0


def _image_size(args) -> tuple[float, float] | None:
    if args.image_size:
        w, _, h = args.image_size.partition("x")
        return float(w), float(h)
    if args.meta:
        meta = read_json(args.meta)
        return float(meta["image_width"]), float(meta["image_height"])
    return None


def cmd_track(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.tracker == "bct":
        spec = "all" if args.modules is None else args.modules.replace(",", "+")
        kind, modules = parse_variant(f"bct:{spec}")
    else:
        kind, modules = parse_variant("bt")
    cfg = build_config(
        args.iou_threshold, args.hidden_length, modules, args.min_hits, _image_size(args)
    )
    detections = read_detections(args.detections)
    records, events = run_variant(detections, kind, cfg)
    write_tracks(out / "tracks.csv", records)
    outputs = ["tracks.csv"]
    if kind == "bct":
        write_events(out / "events.csv", events)
        outputs.append("events.csv")
    _write_manifest(
        out,
        "track",
        {
            "detections": str(args.detections),
            "tracker": args.tracker,
            "modules": args.modules,
            "iou_threshold": args.iou_threshold,
            "hidden_length": args.hidden_length,
            "min_hits": args.min_hits,
            "image_size": args.image_size,
            "meta": str(args.meta) if args.meta else None,
        },
        outputs,
    )
    return 0


def _endpoint_tracks(meta: dict) -> list[EndpointTrack]:
    tracks = []
    for fish in meta.get("fish", []):
        if "endpoints" not in fish:
            continue
        early = fish["endpoints"]["early"]
        late = fish["endpoints"]["late"]
        tracks.append(
            EndpointTrack(
                early_frame=early["frame"],
                early_box=BBox(*early["box"]),
                late_frame=late["frame"],
                late_box=BBox(*late["box"]),
                category=fish.get("category", "Unlabelled"),
            )
        )
    return tracks


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gt = read_tracks(args.gt)
    hyp = read_tracks(args.tracks)
    counts = count_events(gt, hyp, match_iou=args.match_iou)
    lines = [
        "transfer_salmon,transfer_parts,switch_salmon,switch_parts,match_salmon,match_parts",
        ",".join(
            str(v)
            for v in (
                counts.salmon.transfers,
                counts.parts.transfers,
                counts.salmon.switches,
                counts.parts.switches,
                counts.salmon.matches,
                counts.parts.matches,
            )
        ),
    ]
    (out / "event_counts.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs = ["event_counts.csv"]

    if args.meta:
        meta = read_json(args.meta)
        endpoints = _endpoint_tracks(meta)
        if endpoints:
            rates = endpoint_link_rate(endpoints, hyp, min_iou=args.endpoint_iou)
            rows = ["category,linked,total"]
            for category in sorted(rates):
                linked, total = rates[category]
                rows.append(f"{category},{linked},{total}")
            (out / "endpoint_links.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
            outputs.append("endpoint_links.csv")

    _write_manifest(
        out,
        "eval",
        {
            "gt": str(args.gt),
            "tracks": str(args.tracks),
            "match_iou": args.match_iou,
            "endpoint_iou": args.endpoint_iou,
            "meta": str(args.meta) if args.meta else None,
        },
        outputs,
    )
    return 0


def _map_units_to_fish(
    hyp: list[TrackRecord], gt: list[TrackRecord]
) -> dict[int, int]:
    """Majority vote: each unit maps to the fish its salmon box overlaps most."""
    from .geometry import iou as box_iou

    gt_by_frame: dict[int, list[TrackRecord]] = {}
    for rec in gt:
        if rec.cls is ComponentClass.SALMON:
            gt_by_frame.setdefault(rec.frame, []).append(rec)
    votes: dict[int, dict[int, int]] = {}
    for rec in hyp:
        if rec.cls is not ComponentClass.SALMON:
            continue
        best, best_iou = None, 0.3
        for g in gt_by_frame.get(rec.frame, []):
            o = box_iou(rec.box, g.box)
            if o > best_iou:
                best, best_iou = g.track_id, o
        if best is not None:
            unit_votes = votes.setdefault(rec.track_id, {})
            unit_votes[best] = unit_votes.get(best, 0) + 1
    return {
        uid: max(counts, key=lambda k: (counts[k], -k))
        for uid, counts in votes.items()
    }


def cmd_tailbeat(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = Representation(args.representation)
    hyp = read_tracks(args.tracks)
    tracks = records_to_tracks(hyp)
    tracks = filter_quality_tracks(
        tracks,
        min_diagonal=args.min_diagonal,
        min_length=args.min_length,
        require_all_parts=not args.allow_missing_parts,
    )

    meta = read_json(args.meta) if args.meta else None
    gt_extrema: dict[int, list[int]] = {}
    if meta:
        for fish in meta.get("fish", []):
            ex = fish.get("extrema")
            if ex:
                gt_extrema[fish["fish_id"]] = sorted(ex["maxima"] + ex["minima"])
    unit_to_fish: dict[int, int] = {}
    if gt_extrema and args.gt:
        unit_to_fish = _map_units_to_fish(hyp, read_tracks(args.gt))

    all_series = []
    score_rows: list[str] = []
    thresholds = [float(t) for t in args.thresholds.split(",")]
    for track in tracks:
        segments = extract_state(track, rep)
        fish_id = unit_to_fish.get(track.unit_id)
        target = len(gt_extrema[fish_id]) if fish_id in gt_extrema else None
        for seg in segments:
            annotate_extrema(seg, prominence=args.prominence, target_count=target)
        all_series.extend(segments)
        if fish_id in gt_extrema:
            hyp_frames = sorted(
                seg.frames[i]
                for seg in segments
                for i in seg.maxima + seg.minima
            )
            for th in thresholds:
                score = greedy_extrema_match(gt_extrema[fish_id], hyp_frames, th)
                score_rows.append(
                    f"{track.unit_id},{fish_id},{fmt_num(th)},{score.tp},{score.fp},{score.fn}"
                )

    write_series(out / "series.csv", all_series)
    outputs = ["series.csv"]
    if score_rows:
        (out / "extrema_scores.csv").write_text(
            "\n".join(["unit_id,fish_id,threshold,tp,fp,fn"] + score_rows) + "\n",
            encoding="utf-8",
        )
        outputs.append("extrema_scores.csv")
    _write_manifest(
        out,
        "tailbeat",
        {
            "tracks": str(args.tracks),
            "representation": args.representation,
            "min_diagonal": args.min_diagonal,
            "min_length": args.min_length,
            "allow_missing_parts": args.allow_missing_parts,
            "prominence": args.prominence,
            "thresholds": args.thresholds,
            "meta": str(args.meta) if args.meta else None,
            "gt": str(args.gt) if args.gt else None,
        },
        outputs,
    )
    return 0


def _sweep_cell(job: tuple) -> tuple:
    det_path, gt_path, variant, iou_th, hidden, image_size = job
    kind, modules = parse_variant(variant)
    cfg = build_config(iou_th, hidden, modules, image_size=image_size)
    detections = read_detections(det_path)
    records, _ = run_variant(detections, kind, cfg)
    counts = count_events(read_tracks(gt_path), records)
    row = {
        "transfer_salmon": counts.salmon.transfers,
        "transfer_parts": counts.parts.transfers,
        "switch_salmon": counts.salmon.switches,
        "switch_parts": counts.parts.switches,
        "match_salmon": counts.salmon.matches,
        "match_parts": counts.parts.matches,
    }
    return variant, hidden, iou_th, row


def cmd_sweep(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = args.variants.split(",")
    for v in variants:
        parse_variant(v)
    iou_grid = [float(t) for t in args.iou_thresholds.split(",")]
    hidden_grid = [int(h) for h in args.hidden_lengths.split(",")]
    image_size = _image_size(args)

    jobs = [
        (args.detections, args.gt, variant, iou_th, hidden, image_size)
        for variant in variants
        for hidden in hidden_grid
        for iou_th in iou_grid
    ]
    max_workers = min(
        len(jobs),
        os.cpu_count() or 1,
        int(os.environ.get("FINTRACK_MAX_WORKERS", str(os.cpu_count() or 1))),
    )
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(job) for job in jobs]

    by_cell = {(v, h, t): row for v, h, t, row in results}
    columns = (
        "transfer_salmon",
        "transfer_parts",
        "switch_salmon",
        "switch_parts",
        "match_salmon",
        "match_parts",
    )
    cell_lines = ["variant,hidden_length,iou_threshold," + ",".join(columns)]
    avg_lines = ["variant,hidden_length," + ",".join(columns)]
    for variant in variants:
        for hidden in hidden_grid:
            rows = {t: by_cell[(variant, hidden, t)] for t in iou_grid}
            for t in iou_grid:
                cell_lines.append(
                    f"{variant},{hidden},{fmt_num(t)},"
                    + ",".join(str(rows[t][c]) for c in columns)
                )
            avg = sweep_average(rows, iou_grid)
            avg_lines.append(
                f"{variant},{hidden}," + ",".join(f"{avg[c]:.1f}" for c in columns)
            )
    (out / "sweep_cells.csv").write_text("\n".join(cell_lines) + "\n", encoding="utf-8")
    (out / "sweep.csv").write_text("\n".join(avg_lines) + "\n", encoding="utf-8")
    outputs = ["sweep.csv", "sweep_cells.csv"]

    if args.plot:
        _plot_sweep(by_cell, variants, hidden_grid, iou_grid, columns, args.plot)
        outputs.append(str(args.plot))

    _write_manifest(
        out,
        "sweep",
        {
            "detections": str(args.detections),
            "gt": str(args.gt),
            "variants": args.variants,
            "iou_thresholds": args.iou_thresholds,
            "hidden_lengths": args.hidden_lengths,
            "image_size": args.image_size,
            "meta": str(args.meta) if args.meta else None,
            "plot": str(args.plot) if args.plot else None,
        },
        outputs,
    )
    return 0


def _plot_sweep(by_cell, variants, hidden_grid, iou_grid, columns, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 3, figsize=(13, 7), sharex=True)
    titles = ("transfers", "switches", "matches")
    groups = ("salmon", "parts")
    for gi, group in enumerate(groups):
        for ei, event in enumerate(titles):
            ax = axes[gi][ei]
            column = f"{('transfer', 'switch', 'match')[ei]}_{group}"
            for variant in variants:
                for hidden in hidden_grid:
                    ys = [by_cell[(variant, hidden, t)][column] for t in iou_grid]
                    ax.plot(iou_grid, ys, marker="o", label=f"{variant} hl={hidden}")
            ax.set_title(f"{group} {event}")
            ax.set_xlabel("IoU threshold")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fintrack",
        description="Hierarchical fish/body-part tracking on synthetic scenes",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("--scenario", choices=("crowded", "turning", "tailbeat"), required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--n-fish", type=int, default=22)
    p.add_argument("--n-frames", type=int, default=None)
    p.add_argument("--tail-period", type=int, default=24)
    p.add_argument("--jitter-std", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run a tracker over a detection file")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tracker", choices=("bt", "bct"), required=True)
    p.add_argument("--modules", default=None, help="bct only: all|none|turn,bpdis,nobp,bpiou")
    p.add_argument("--iou-threshold", type=float, default=0.2)
    p.add_argument("--hidden-length", type=int, default=3)
    p.add_argument("--min-hits", type=int, default=0)
    p.add_argument("--image-size", default=None, help="WxH for the boundary test")
    p.add_argument("--meta", default=None, help="scene meta.json (image size source)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score tracks against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--match-iou", type=float, default=0.5)
    p.add_argument("--endpoint-iou", type=float, default=0.2)
    p.add_argument("--meta", default=None, help="meta.json with endpoint annotations")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tailbeat", help="tail-state series and extrema scores")
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--representation", choices=[r.value for r in Representation], default="tip"
    )
    p.add_argument("--min-diagonal", type=float, default=200.0)
    p.add_argument("--min-length", type=int, default=50)
    p.add_argument("--allow-missing-parts", action="store_true")
    p.add_argument("--prominence", type=float, default=None)
    p.add_argument("--thresholds", default="1,2,3,4")
    p.add_argument("--meta", default=None, help="meta.json with true extrema")
    p.add_argument("--gt", default=None, help="gt.csv for unit-to-fish mapping")
    p.set_defaults(func=cmd_tailbeat)

    p = sub.add_parser("sweep", help="full threshold/hidden-length/variant grid")
    p.add_argument("--detections", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variants", default="bt,bct:all")
    p.add_argument("--iou-thresholds", default=",".join(str(t) for t in IOU_GRID))
    p.add_argument("--hidden-lengths", default=",".join(str(h) for h in HIDDEN_GRID))
    p.add_argument("--image-size", default=None)
    p.add_argument("--meta", default=None)
    p.add_argument("--plot", default=None, help="write an events-vs-threshold figure")
    p.set_defaults(func=cmd_sweep)

    return parser


_DEFAULT_FRAMES = {"crowded": 200, "turning": 160, "tailbeat": 300}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate" and args.n_frames is None:
        args.n_frames = _DEFAULT_FRAMES[args.scenario]
    try:
        return args.func(args)
    except (FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
