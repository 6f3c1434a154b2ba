import hashlib
from pathlib import Path

import pytest

from leaftile.annotations import BBox, DiseaseClass, ImageRecord, LabeledRegion
from leaftile.dataset_emit import (
    DatasetManifest,
    class_count_table,
    emit_original_dataset,
    emit_tiled_dataset,
    manifest_for_tiles,
    read_manifest,
    split_dataset,
    verify_no_split_leakage,
    write_manifest,
    yolo_line,
)
from leaftile.errors import DataError, InternalError
from leaftile.synth import make_corpus
from leaftile.tiler import Tile, TileSpec, tile_image

C = DiseaseClass


def items_for(n: int, cls=C.BLAST, prefix="img"):
    return [(f"{prefix}{i:04d}", (cls,)) for i in range(n)]


class TestSplitDataset:
    def test_620_splits_to_496_62_62(self):
        manifest = split_dataset(items_for(620), seed=1)
        counts = {s: len(manifest.ids_for(s)) for s in ("train", "val", "test")}
        assert counts == {"train": 496, "val": 62, "test": 62}

    def test_ten_items_split_8_1_1(self):
        manifest = split_dataset(items_for(10), seed=0)
        counts = {s: len(manifest.ids_for(s)) for s in ("train", "val", "test")}
        assert counts == {"train": 8, "val": 1, "test": 1}

    def test_same_seed_identical(self):
        a = split_dataset(items_for(57), seed=7)
        b = split_dataset(items_for(57), seed=7)
        assert a == b

    def test_different_seed_differs(self):
        a = split_dataset(items_for(200), seed=1)
        b = split_dataset(items_for(200), seed=2)
        assert a != b

    def test_stratified_per_class(self):
        items = items_for(40, C.BLAST, "a") + items_for(40, C.RED, "b")
        manifest = split_dataset(items, seed=3)
        for cls, prefix in ((C.BLAST, "a"), (C.RED, "b")):
            per = [e for e in manifest.entries if e.item_id.startswith(prefix)]
            n_train = sum(1 for e in per if e.split == "train")
            n_val = sum(1 for e in per if e.split == "val")
            n_test = sum(1 for e in per if e.split == "test")
            assert (n_train, n_val, n_test) == (32, 4, 4)

    def test_too_few_items_per_class_rejected(self):
        with pytest.raises(DataError, match="at least 10"):
            split_dataset(items_for(9))

    def test_fraction_tolerance_within_one(self):
        for n in (11, 23, 57, 101, 619):
            manifest = split_dataset(items_for(n), seed=5)
            for split, frac in (("train", 0.8), ("val", 0.1), ("test", 0.1)):
                assert abs(len(manifest.ids_for(split)) - n * frac) < 1.0

    def test_splits_disjoint_and_complete(self):
        manifest = split_dataset(items_for(101), seed=9)
        all_ids = [e.item_id for e in manifest.entries]
        assert len(all_ids) == len(set(all_ids)) == 101


class TestTileManifest:
    def _tiles(self, image_id="img0000"):
        return [
            Tile(image_id=image_id, x0=0, y0=0, side=100,
                 boxes=((C.BLAST, BBox(0, 0, 10, 10), 1.0),)),
            Tile(image_id=image_id, x0=50, y0=0, side=100, boxes=()),
        ]

    def test_tiles_inherit_source_split(self):
        source = split_dataset(items_for(10), seed=0)
        tile_manifest = manifest_for_tiles(source, self._tiles(), n=3)
        split_of = source.split_of()
        for entry in tile_manifest.entries:
            assert entry.split == split_of["img0000"]

    def test_unknown_source_rejected(self):
        source = split_dataset(items_for(10), seed=0)
        with pytest.raises(DataError, match="missing from manifest"):
            manifest_for_tiles(source, self._tiles("stranger"), n=3)

    def test_leakage_checker_flags_crossings(self):
        source = split_dataset(items_for(10), seed=0)
        good = manifest_for_tiles(source, self._tiles(), n=3)
        assert verify_no_split_leakage(source, good) == []
        flipped = DatasetManifest(
            entries=tuple(
                e.__class__(e.item_id, e.classes, "train" if e.split != "train" else "test")
                for e in good.entries
            ),
            seed=good.seed,
        )
        assert len(verify_no_split_leakage(source, flipped)) == len(good.entries)


class TestYoloLine:
    def test_documented_case(self):
        line = yolo_line(C.BLAST, BBox(30, 30, 70, 70), 300, 300)
        assert line == "0 0.166667 0.166667 0.133333 0.133333"

    def test_full_tile_box(self):
        line = yolo_line(C.NBS, BBox(0, 0, 300, 300), 300, 300)
        assert line == "3 0.500000 0.500000 1.000000 1.000000"

    def test_out_of_frame_box_is_internal_error(self):
        with pytest.raises(InternalError, match="outside"):
            yolo_line(C.BLAST, BBox(0, 0, 400, 50), 300, 300)


class TestManifestIO:
    def test_round_trip(self, tmp_path):
        multi = [(f"m{i}", (C.BLAST, C.RED)) for i in range(10)]
        manifest = split_dataset(
            multi + [("neg", ())] + items_for(10, C.BSP, "c"), seed=2
        )
        path = tmp_path / "manifest.csv"
        write_manifest(manifest, path)
        back = read_manifest(path, seed=2)
        assert back == manifest

    def test_rejects_bad_split(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("id,classes,split\nx,Blast,dev\n")
        with pytest.raises(DataError, match="unknown split"):
            read_manifest(path)


class TestCountsTable:
    def test_totals_row_sums_columns(self):
        m1 = split_dataset(items_for(620, C.BLAST) + items_for(620, C.RED, "r"), seed=0)
        rows = class_count_table({"original": m1})
        assert rows[0] == ["class", "original"]
        assert rows[-1] == ["total", "1240"]

    def test_columns_follow_given_order(self):
        base = items_for(10, C.BLAST)
        manifests = {
            "original": split_dataset(base, seed=0),
            "n3": split_dataset(base, seed=0),
            "n5": split_dataset(base, seed=0),
        }
        rows = class_count_table(manifests)
        assert rows[0] == ["class", "original", "n3", "n5"]

    def test_per_class_counts_match_manifest(self):
        manifest = split_dataset(items_for(15, C.ORANGE) + items_for(12, C.NBS, "n"), seed=1)
        rows = class_count_table({"d": manifest})
        by_class = {r[0]: int(r[1]) for r in rows[1:-1]}
        assert by_class == {"NBS": 12, "Orange": 15}


class TestEmission:
    @pytest.fixture
    def corpus(self, tmp_path):
        root = tmp_path / "corpus"
        make_corpus(root, n_images=20, classes=(C.BLAST, C.RED), seed=4,
                    img_size=(200, 160), width_range=(8, 24))
        from leaftile.annotations import load_corpus

        docs = sorted((root / "annotations").glob("*.json"))
        records = load_corpus((str(p), p.read_bytes()) for p in docs)
        return root, records

    def _tree_hash(self, root: Path) -> dict:
        out = {}
        for path in sorted(root.rglob("*")):
            if path.is_file():
                out[str(path.relative_to(root))] = hashlib.sha256(
                    path.read_bytes()
                ).hexdigest()
        return out

    def test_original_emission_layout(self, corpus, tmp_path):
        root, records = corpus
        manifest = split_dataset([(r.id, r.classes) for r in records], seed=0)
        out = tmp_path / "original"
        emit_original_dataset(records, manifest, out, images_root=root)
        assert (out / "manifest.csv").exists()
        assert (out / "counts.csv").exists()
        for split in ("train", "val", "test"):
            assert (out / f"{split}.txt").exists()
        assert len(list((out / "labels").glob("*.txt"))) == 20
        assert len(list((out / "images").glob("*"))) == 20
        listed = sum(
            len((out / f"{s}.txt").read_text().splitlines()) for s in ("train", "val", "test")
        )
        assert listed == 20

    def test_tiled_emission_and_idempotency(self, corpus, tmp_path):
        root, records = corpus
        manifest = split_dataset([(r.id, r.classes) for r in records], seed=0)
        from leaftile.leafwidth import image_leaf_width

        spec = TileSpec(n=3)
        tiles_by_image = {}
        for rec in records:
            lw = image_leaf_width(rec)
            tiles_by_image[rec.id] = tile_image(rec, lw.lfw, spec)
        out = tmp_path / "tiled"
        tile_manifest = emit_tiled_dataset(
            records, tiles_by_image, manifest, 3, out, images_root=root
        )
        assert verify_no_split_leakage(manifest, tile_manifest) == []
        n_tiles = sum(len(v) for v in tiles_by_image.values())
        assert len(tile_manifest.entries) == n_tiles
        assert len(list((out / "images").glob("*.png"))) == n_tiles
        first = self._tree_hash(out)
        emit_tiled_dataset(records, tiles_by_image, manifest, 3, out, images_root=root)
        assert self._tree_hash(out) == first  # byte-identical re-run

    def test_label_lines_match_boxes(self, corpus, tmp_path):
        root, records = corpus
        manifest = split_dataset([(r.id, r.classes) for r in records], seed=0)
        from leaftile.leafwidth import image_leaf_width
        from leaftile.tiler import tile_name

        spec = TileSpec(n=3)
        rec = records[0]
        lw = image_leaf_width(rec)
        tiles_by_image = {rec.id: tile_image(rec, lw.lfw, spec)}
        out = tmp_path / "one"
        emit_tiled_dataset(records, tiles_by_image, manifest, 3, out, images_root=root)
        for tile in tiles_by_image[rec.id]:
            stem = tile_name(rec.id, 3, tile.x0, tile.y0, ext="")
            lines = (out / "labels" / f"{stem}.txt").read_text().splitlines()
            assert len(lines) == len(tile.boxes)
            for line, (cls, box, _) in zip(lines, tile.boxes):
                assert line == yolo_line(cls, box, tile.side, tile.side)

    def test_dimension_cross_check(self, corpus, tmp_path):
        root, records = corpus
        bad = ImageRecord(
            id=records[0].id,
            path=records[0].path,
            width=records[0].width + 10,
            height=records[0].height,
            regions=records[0].regions,
        )
        manifest = split_dataset([(r.id, r.classes) for r in records], seed=0)
        with pytest.raises(DataError, match="annotation says"):
            emit_original_dataset([bad] + list(records[1:]), manifest, tmp_path / "x", root)
