"""Batch front-end wiring the pipeline:

    ingest -> widths -> (eval-mape) -> partition -> tile -> emit -> eval-map

Every command is deterministic given its config and seed; the only
randomness is the split shuffle.  Exit codes: 0 success, 1 usage error,
2 data error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import glob
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import annotations as ann
from . import dataset_emit as emit
from . import detection_eval as deteval
from . import leafwidth as lw
from . import partition as part
from . import tiler
from . import width_estimation as we
from .config import CONFIG_ENV_VAR, PipelineConfig
from .errors import DataError, InternalError, LeafTileError, UsageError

log = logging.getLogger("leaftile")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1
        raise UsageError(message)


def _say(command: str, message: str) -> None:
    print(f"[{command}] {message}")


# ---------------------------------------------------------------- loading


def _glob_annotations(corpus_root: str, pattern: str) -> list[Path]:
    paths = sorted(Path(p) for p in glob.glob(str(Path(corpus_root) / pattern)))
    if not paths:
        raise DataError(f"no annotation files match {pattern!r} under {corpus_root}")
    return paths


def _ingest(corpus_root: str, pattern: str) -> list[ann.ImageRecord]:
    paths = _glob_annotations(corpus_root, pattern)
    return ann.load_corpus((str(p), p.read_bytes()) for p in paths)


def _load_records(args) -> list[ann.ImageRecord]:
    if getattr(args, "records", None):
        return ann.read_records_jsonl(args.records)
    if getattr(args, "annotations", None):
        return _ingest(getattr(args, "corpus_root", ".") or ".", args.annotations)
    raise UsageError("provide --records or --annotations")


def _measure_one(payload: tuple[ann.ImageRecord, int]) -> Optional[lw.LeafWidthRecord]:
    record, min_pixels = payload
    if not any(r.polygon is not None for r in record.regions):
        return None
    return lw.image_leaf_width(record, min_component_pixels=min_pixels)


def _compute_widths(
    records: Sequence[ann.ImageRecord], min_pixels: int, jobs: int
) -> list[lw.LeafWidthRecord]:
    payloads = [(rec, min_pixels) for rec in records]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_measure_one, payloads, chunksize=8))
    else:
        results = [_measure_one(p) for p in payloads]
    out = []
    for record, result in zip(records, results):
        if result is None:
            log.warning("%s: no polygon regions, skipped", record.id)
        else:
            out.append(result)
    return sorted(out, key=lambda r: r.image_id)


def _effective_entries(
    records: Sequence[ann.ImageRecord],
    width_rows: Sequence[lw.WidthRow],
    predictions: Sequence[we.WidthPrediction],
    policy: we.WidthPolicy,
) -> list[part.WidthEntry]:
    """(id, class, effective LW) for every image with an available width."""
    gt = {row.image_id: row.lw_percent for row in width_rows}
    pred = {p.image_id: p.predicted_lw for p in predictions}
    entries: list[part.WidthEntry] = []
    for rec in records:
        try:
            value = we.effective_width(gt.get(rec.id), pred.get(rec.id), policy)
        except DataError:
            log.warning("%s: width unavailable under policy %s, skipped", rec.id, policy.value)
            continue
        cls = rec.regions[0].cls if rec.regions else None
        entries.append((rec.id, cls, value))
    return entries


def _load_sidecar(path: str | None) -> list[we.WidthPrediction]:
    return we.read_sidecar(path) if path else []


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> None:
    records = _ingest(args.corpus_root, args.annotations)
    out = Path(args.out)
    if args.dry_run:
        _say("ingest", f"plan: parse {len(records)} documents -> {out}")
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    ann.write_records_jsonl(records, out)
    _say("ingest", f"records={len(records)} out={out}")


def cmd_widths(args) -> None:
    records = _load_records(args)
    out = Path(args.out)
    if args.dry_run:
        _say("widths", f"plan: measure {len(records)} images -> {out}")
        return
    rows = _compute_widths(records, args.min_component_pixels, args.jobs)
    out.parent.mkdir(parents=True, exist_ok=True)
    lw.write_width_table(rows, out)
    for row in rows:
        _say(
            "widths",
            f"id={row.image_id} lfw_px={row.lfw:.4f} lw={row.lw:.4f} leaves={row.leaf_count}",
        )
    _say("widths", f"rows={len(rows)} out={out}")


def cmd_eval_mape(args) -> None:
    records = _load_records(args)
    class_of = {rec.id: (rec.regions[0].cls if rec.regions else None) for rec in records}
    width_rows = lw.read_width_table(args.widths)
    ground_truth = [
        (row.image_id, class_of.get(row.image_id), row.lw_percent) for row in width_rows
    ]
    predictions = we.read_sidecar(args.sidecar)
    out = Path(args.out)
    if args.dry_run:
        _say("eval-mape", f"plan: score {len(ground_truth)} images -> {out}")
        return
    report = we.mape(ground_truth, predictions)
    out.parent.mkdir(parents=True, exist_ok=True)
    we.write_mape_report(report, out)
    for cls, value in report.per_class.items():
        _say("eval-mape", f"class={cls.label} n={report.per_class_n[cls]} mape={value:.4f}")
    _say("eval-mape", f"overall={report.overall:.4f} n={report.n_total} out={out}")


def cmd_stats(args) -> None:
    records = _load_records(args)
    class_of = {rec.id: (rec.regions[0].cls if rec.regions else None) for rec in records}
    width_rows = lw.read_width_table(args.widths)
    entries = [
        (row.image_id, class_of.get(row.image_id), row.lw_percent) for row in width_rows
    ]
    out = Path(args.out)
    if args.dry_run:
        _say("stats", f"plan: summarize {len(entries)} widths -> {out}")
        return
    overall, per_class = part.compute_stats(entries)
    out.parent.mkdir(parents=True, exist_ok=True)
    part.write_stats(overall, per_class, out)
    _say(
        "stats",
        f"n={overall.n} min={overall.min:.4f} max={overall.max:.4f} "
        f"mean={overall.mean:.4f} sd={overall.sd:.4f} out={out}",
    )


def cmd_partition(args) -> None:
    records = _load_records(args)
    width_rows = lw.read_width_table(args.widths)
    predictions = _load_sidecar(args.sidecar)
    entries = _effective_entries(
        records, width_rows, predictions, we.WidthPolicy(args.policy)
    )
    out_dir = Path(args.out)
    if args.dry_run:
        _say("partition", f"plan: partition {len(entries)} images -> {out_dir}")
        return
    groups = part.partition_by_quantile(entries, args.lower_frac, args.upper_frac)
    out_dir.mkdir(parents=True, exist_ok=True)
    part.write_partition(entries, groups, out_dir / "partition.csv")
    part.write_partition_summary(entries, groups, out_dir / "partition_summary.csv")
    sizes = {g: sum(1 for v in groups.values() if v is g) for g in part.SizeGroup}
    _say(
        "partition",
        f"narrow={sizes[part.SizeGroup.NARROW]} normal={sizes[part.SizeGroup.NORMAL]} "
        f"wide={sizes[part.SizeGroup.WIDE]} out={out_dir}",
    )


def _tile_spec(args, n: int) -> tiler.TileSpec:
    return tiler.TileSpec(
        n=n,
        overlap_fraction=args.overlap,
        min_area_ratio=args.min_area_ratio,
        edge_policy=tiler.EdgePolicy(args.edge_policy),
        min_window=args.min_window,
    )


def _tiles_for_corpus(
    records: Sequence[ann.ImageRecord],
    entries: Sequence[part.WidthEntry],
    spec: tiler.TileSpec,
    keep_negatives: bool,
) -> dict[str, list[tiler.Tile]]:
    lw_of = {image_id: value for image_id, _, value in entries}
    out: dict[str, list[tiler.Tile]] = {}
    for rec in records:
        if rec.id not in lw_of:
            continue
        lfw_px = lw_of[rec.id] / 100.0 * max(rec.width, rec.height)
        out[rec.id] = tiler.tile_image(
            rec, lfw_px, spec, keep_negatives=keep_negatives
        )
    return out


def _write_tile_geometry(
    tiles_by_image: dict[str, list[tiler.Tile]], n: int, out_dir: Path
) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    n_tiles = 0
    with open(out_dir / "tiles.csv", "w", newline="") as fh_t, open(
        out_dir / "boxes.csv", "w", newline=""
    ) as fh_b:
        tiles_writer = csv.writer(fh_t)
        boxes_writer = csv.writer(fh_b)
        tiles_writer.writerow(emit.TILES_HEADER)
        boxes_writer.writerow(
            ["tile_id", "class", "xmin", "ymin", "xmax", "ymax", "area_ratio"]
        )
        for image_id in sorted(tiles_by_image):
            for tile in tiles_by_image[image_id]:
                stem = tiler.tile_name(image_id, n, tile.x0, tile.y0, ext="")
                tiles_writer.writerow(
                    [stem, image_id, tile.x0, tile.y0, tile.side, len(tile.boxes)]
                )
                for cls, box, ratio in tile.boxes:
                    boxes_writer.writerow(
                        [
                            stem,
                            cls.label,
                            f"{box.xmin:.4f}",
                            f"{box.ymin:.4f}",
                            f"{box.xmax:.4f}",
                            f"{box.ymax:.4f}",
                            f"{ratio:.6f}",
                        ]
                    )
                n_tiles += 1
    return n_tiles


def cmd_tile(args) -> None:
    records = _load_records(args)
    width_rows = lw.read_width_table(args.widths)
    predictions = _load_sidecar(args.sidecar)
    entries = _effective_entries(
        records, width_rows, predictions, we.WidthPolicy(args.policy)
    )
    n_values = _parse_n_list(args.n)
    out_root = Path(args.out)
    if args.dry_run:
        for n in n_values:
            _say("tile", f"plan: tile {len(entries)} images at n={n} -> {out_root / f'tiled_n{n}'}")
        return
    for n in n_values:
        spec = _tile_spec(args, n)
        tiles_by_image = _tiles_for_corpus(records, entries, spec, args.keep_negatives)
        n_tiles = _write_tile_geometry(tiles_by_image, n, out_root / f"tiled_n{n}")
        _say("tile", f"n={n} images={len(tiles_by_image)} tiles={n_tiles} out={out_root / f'tiled_n{n}'}")


def cmd_emit(args) -> None:
    records = _load_records(args)
    items = [(rec.id, rec.classes) for rec in records]
    manifest = emit.split_dataset(items, tuple(args.fractions), args.seed)
    out_dir = Path(args.out)
    if args.n is None:
        if args.dry_run:
            _say("emit", f"plan: emit original dataset ({len(records)} images) -> {out_dir}")
            return
        emit.emit_original_dataset(records, manifest, out_dir, args.images_root)
        _say("emit", f"dataset=original items={len(manifest.entries)} out={out_dir}")
        return

    width_rows = lw.read_width_table(args.widths) if args.widths else []
    if not width_rows and not args.sidecar:
        raise UsageError("tiled emit needs --widths and/or --sidecar")
    predictions = _load_sidecar(args.sidecar)
    entries = _effective_entries(
        records, width_rows, predictions, we.WidthPolicy(args.policy)
    )
    if args.dry_run:
        _say("emit", f"plan: emit tiled dataset n={args.n} -> {out_dir}")
        return
    spec = _tile_spec(args, args.n)
    tiles_by_image = _tiles_for_corpus(records, entries, spec, args.keep_negatives)
    tile_manifest = emit.emit_tiled_dataset(
        records,
        tiles_by_image,
        manifest,
        args.n,
        out_dir,
        args.images_root,
        spec.edge_policy,
    )
    _say("emit", f"dataset=tiled_n{args.n} items={len(tile_manifest.entries)} out={out_dir}")


def cmd_eval_map(args) -> None:
    records = _load_records(args)
    ground_truth = deteval.ground_truth_from_records(records)
    out_dir = Path(args.out)
    if args.dry_run:
        _say("eval-map", f"plan: score {len(args.dets)} detection sets -> {out_dir}")
        return
    reports = {}
    for spec_str in args.dets:
        if "=" not in spec_str:
            raise UsageError(f"--dets takes NAME=PATH, got {spec_str!r}")
        name, path = spec_str.split("=", 1)
        detections = deteval.read_detections(path)
        if args.merge_tiles:
            tiles = _read_tiles_csv(Path(args.merge_tiles))
            detections = tiler.merge_tile_detections(tiles, detections, args.iou)
        reports[name] = deteval.mean_ap(detections, ground_truth, args.iou)
    out_dir.mkdir(parents=True, exist_ok=True)
    deteval.write_eval_reports_csv(reports, out_dir / "map_report.csv")
    deteval.write_eval_reports_json(reports, out_dir / "map_report.json")
    for name, report in reports.items():
        _say("eval-map", f"dataset={name} mAP={100.0 * report.mean_ap:.2f} iou={args.iou}")
    _say("eval-map", f"out={out_dir}")


def _read_tiles_csv(dataset_dir: Path) -> list[tiler.Tile]:
    path = dataset_dir / "tiles.csv"
    if not path.exists():
        raise DataError(f"no tiles.csv under {dataset_dir}")
    tiles = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != emit.TILES_HEADER:
            raise DataError(f"{path}: unexpected header {header}")
        for line in reader:
            if not line:
                continue
            _, source, x0, y0, side, _ = line
            tiles.append(
                tiler.Tile(image_id=source, x0=int(x0), y0=int(y0), side=int(side))
            )
    return tiles


def cmd_pipeline(args) -> None:
    cfg = PipelineConfig.load(args.config).override(
        corpus_root=args.corpus_root,
        annotation_glob=args.annotations,
        images_root=args.images_root,
        output_root=args.out,
        n_values=_parse_n_list(args.n) if args.n else None,
        seed=args.seed,
        width_policy=args.policy,
        sidecar=args.sidecar,
        jobs=args.jobs,
    )
    out_root = Path(cfg.output_root)
    images_root = cfg.images_root or cfg.corpus_root

    if args.dry_run:
        _say("pipeline", f"plan: ingest {cfg.corpus_root}/{cfg.annotation_glob}")
        _say("pipeline", f"plan: widths, stats, partition -> {out_root}")
        if cfg.sidecar:
            _say("pipeline", f"plan: eval-mape against {cfg.sidecar}")
        for n in cfg.n_values:
            _say("pipeline", f"plan: tile + emit n={n} -> {out_root / 'datasets' / f'tiled_n{n}'}")
        _say("pipeline", f"plan: emit original -> {out_root / 'datasets' / 'original'}")
        _say("pipeline", f"plan: counts -> {out_root / 'counts.csv'}")
        return

    out_root.mkdir(parents=True, exist_ok=True)
    records = _ingest(cfg.corpus_root, cfg.annotation_glob)
    ann.write_records_jsonl(records, out_root / "records.jsonl")
    _say("pipeline", f"ingest records={len(records)}")

    width_records = _compute_widths(records, cfg.min_component_pixels, cfg.jobs)
    lw.write_width_table(width_records, out_root / "widths.csv")
    _say("pipeline", f"widths rows={len(width_records)}")
    width_rows = lw.read_width_table(out_root / "widths.csv")

    predictions = _load_sidecar(cfg.sidecar)
    class_of = {rec.id: (rec.regions[0].cls if rec.regions else None) for rec in records}
    if predictions:
        ground_truth = [
            (row.image_id, class_of.get(row.image_id), row.lw_percent)
            for row in width_rows
        ]
        report = we.mape(ground_truth, predictions)
        we.write_mape_report(report, out_root / "mape.csv")
        _say("pipeline", f"eval-mape overall={report.overall:.4f}")

    entries = _effective_entries(records, width_rows, predictions, cfg.width_policy_enum)
    overall, per_class = part.compute_stats(entries)
    part.write_stats(overall, per_class, out_root / "stats.csv")
    groups = part.partition_by_quantile(entries)
    part.write_partition(entries, groups, out_root / "partition.csv")
    part.write_partition_summary(entries, groups, out_root / "partition_summary.csv")
    _say("pipeline", f"partition n={len(entries)}")

    items = [(rec.id, rec.classes) for rec in records]
    manifest = emit.split_dataset(items, cfg.split_fractions, cfg.seed)
    emit.write_manifest(manifest, out_root / "manifest.csv")

    manifests: dict[str, emit.DatasetManifest] = {"original": manifest}
    emit.emit_original_dataset(
        records, manifest, out_root / "datasets" / "original", images_root
    )
    _say("pipeline", f"emit dataset=original items={len(manifest.entries)}")
    for n in sorted(cfg.n_values):
        spec = tiler.TileSpec(
            n=n,
            overlap_fraction=cfg.overlap_fraction,
            min_area_ratio=cfg.min_area_ratio,
            edge_policy=cfg.edge_policy_enum,
            min_window=cfg.min_window,
        )
        tiles_by_image = _tiles_for_corpus(records, entries, spec, cfg.keep_negatives)
        _write_tile_geometry(tiles_by_image, n, out_root / f"tiled_n{n}")
        tile_manifest = emit.emit_tiled_dataset(
            records,
            tiles_by_image,
            manifest,
            n,
            out_root / "datasets" / f"tiled_n{n}",
            images_root,
            spec.edge_policy,
        )
        manifests[f"n{n}"] = tile_manifest
        leaks = emit.verify_no_split_leakage(manifest, tile_manifest)
        if leaks:
            raise InternalError(f"split leakage: {leaks[:5]}")
        _say("pipeline", f"emit dataset=tiled_n{n} items={len(tile_manifest.entries)}")

    emit.write_counts_csv(manifests, out_root / "counts.csv")
    _say("pipeline", f"done out={out_root}")


# ---------------------------------------------------------------- parser


def _parse_n_list(raw: str | Sequence[int]) -> tuple[int, ...]:
    if not isinstance(raw, str):
        return tuple(raw)
    try:
        values = tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"bad n list {raw!r}") from None
    if not values:
        raise UsageError("n list is empty")
    return values


def _parse_fractions(raw: str) -> list[float]:
    try:
        parts = [float(x) for x in raw.split(",")]
    except ValueError:
        raise UsageError(f"bad fractions {raw!r}") from None
    if len(parts) != 3:
        raise UsageError("fractions must be train,val,test")
    return parts


def _add_records_args(p: _Parser) -> None:
    p.add_argument("--records", help="records.jsonl from `ingest`")
    p.add_argument("--annotations", help="annotation glob relative to --corpus-root")
    p.add_argument("--corpus-root", default=".", help="root for --annotations")


def _add_tiling_args(p: _Parser) -> None:
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--min-area-ratio", type=float, default=0.07)
    p.add_argument(
        "--edge-policy",
        choices=[e.value for e in tiler.EdgePolicy],
        default=tiler.EdgePolicy.CLAMP_SHIFT.value,
    )
    p.add_argument("--min-window", type=int, default=64)
    p.add_argument("--keep-negatives", action="store_true")


def _add_width_source_args(p: _Parser) -> None:
    p.add_argument("--widths", help="width table from `widths`")
    p.add_argument("--sidecar", help="sidecar prediction file")
    p.add_argument(
        "--policy",
        choices=[w.value for w in we.WidthPolicy],
        default=we.WidthPolicy.GROUND_TRUTH_FIRST.value,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="leaftile", description=__doc__)
    parser.add_argument("--dry-run", action="store_true", help="print the plan, write nothing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[], help="parse + validate annotations")
    _add_records_args(p)
    p.add_argument("-o", "--out", default="out/records.jsonl")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("widths", help="ground-truth leaf widths")
    _add_records_args(p)
    p.add_argument("-o", "--out", default="out/widths.csv")
    p.add_argument("--min-component-pixels", type=int, default=16)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_widths)

    p = sub.add_parser("eval-mape", help="score sidecar predictions")
    _add_records_args(p)
    p.add_argument("--widths", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("-o", "--out", default="out/mape.csv")
    p.set_defaults(func=cmd_eval_mape)

    p = sub.add_parser("stats", help="width distribution statistics")
    _add_records_args(p)
    p.add_argument("--widths", required=True)
    p.add_argument("-o", "--out", default="out/stats.csv")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("partition", help="narrow/normal/wide partition")
    _add_records_args(p)
    _add_width_source_args(p)
    p.add_argument("--lower-frac", type=float, default=0.10)
    p.add_argument("--upper-frac", type=float, default=0.10)
    p.add_argument("-o", "--out", default="out")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("tile", help="tile geometry per N")
    _add_records_args(p)
    _add_width_source_args(p)
    _add_tiling_args(p)
    p.add_argument("--n", default="3,5,7", help="comma-separated N values")
    p.add_argument("-o", "--out", default="out")
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("emit", help="materialize a detector-ready dataset")
    _add_records_args(p)
    _add_width_source_args(p)
    _add_tiling_args(p)
    p.add_argument("--n", type=int, default=None, help="tile coefficient; omit for the original dataset")
    p.add_argument("--images-root", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fractions", type=_parse_fractions, default=[0.8, 0.1, 0.1])
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("eval-map", help="score detections (AP / mAP)")
    _add_records_args(p)
    p.add_argument("--dets", action="append", required=True, help="NAME=PATH, repeatable")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--merge-tiles", default=None, help="tiled dataset dir; merge tile-space detections first")
    p.add_argument("-o", "--out", default="out")
    p.set_defaults(func=cmd_eval_map)

    p = sub.add_parser("pipeline", help="run the full chain")
    p.add_argument("--config", default=None, help=f"JSON config (default ${CONFIG_ENV_VAR})")
    p.add_argument("--corpus-root", default=None)
    p.add_argument("--annotations", default=None)
    p.add_argument("--images-root", default=None)
    p.add_argument("--n", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--policy", choices=[w.value for w in we.WidthPolicy], default=None
    )
    p.add_argument("--sidecar", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def run(argv: Sequence[str] | None = None) -> None:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    args.func(args)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        run(argv)
    except UsageError as exc:
        print(f"error: usage: {_oneline(exc)}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: data: {_oneline(exc)}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"error: internal: {_oneline(exc)}", file=sys.stderr)
        return 3
    except LeafTileError as exc:  # pragma: no cover - base class fallback
        print(f"error: internal: {_oneline(exc)}", file=sys.stderr)
        return 3
    return 0


def _oneline(exc: Exception) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
