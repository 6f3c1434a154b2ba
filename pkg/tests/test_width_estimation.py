import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leaftile.annotations import DiseaseClass
from leaftile.errors import DataError
from leaftile.width_estimation import (
    WidthPolicy,
    WidthPrediction,
    effective_width,
    load_predictions,
    mape,
    read_sidecar,
    write_sidecar,
)


def sidecar(rows: str) -> bytes:
    return ("imageId,predictedLW_percent\n" + rows).encode()


class TestLoadPredictions:
    def test_three_rows(self):
        preds = load_predictions(sidecar("a,10.5\nb,2.25\nc,99.0\n"))
        assert [p.image_id for p in preds] == ["a", "b", "c"]
        assert preds[1].predicted_lw == 2.25

    def test_duplicate_id_rejected(self):
        with pytest.raises(DataError, match="duplicate imageId"):
            load_predictions(sidecar("a,10\na,11\n"))

    def test_negative_width_rejected(self):
        with pytest.raises(DataError, match="finite and positive"):
            load_predictions(sidecar("a,-1\n"))

    def test_zero_width_rejected(self):
        with pytest.raises(DataError, match="finite and positive"):
            load_predictions(sidecar("a,0\n"))

    def test_non_numeric_rejected(self):
        with pytest.raises(DataError, match="non-numeric"):
            load_predictions(sidecar("a,wide\n"))

    def test_wrong_header_rejected(self):
        with pytest.raises(DataError, match="header"):
            load_predictions(b"id,value\na,1\n")

    def test_above_hundred_warns_but_loads(self, caplog):
        with caplog.at_level("WARNING"):
            preds = load_predictions(sidecar("a,120\n"))
        assert preds[0].predicted_lw == 120
        assert "above 100" in caplog.text

    def test_write_read_round_trip(self, tmp_path):
        preds = [WidthPrediction("b", 7.5), WidthPrediction("a", 3.25)]
        path = tmp_path / "side.csv"
        write_sidecar(preds, path)
        back = read_sidecar(path)
        assert [p.image_id for p in back] == ["a", "b"]
        assert back[0].predicted_lw == 3.25


def gt(*triples):
    return [(i, c, v) for i, c, v in triples]


def preds(*pairs):
    return [WidthPrediction(i, v) for i, v in pairs]


class TestMape:
    def test_identity_is_zero(self):
        report = mape(gt(("a", None, 10.0)), preds(("a", 10.0)))
        assert report.overall == 0.0

    def test_simple_two_image_case(self):
        report = mape(
            gt(("a", None, 10.0), ("b", None, 20.0)),
            preds(("a", 11.0), ("b", 18.0)),
        )
        assert report.overall == pytest.approx(10.0, abs=1e-12)

    def test_missing_prediction_rejected(self):
        with pytest.raises(DataError, match="missing predictions"):
            mape(gt(("a", None, 10.0), ("b", None, 5.0)), preds(("a", 10.0)))

    def test_zero_ground_truth_rejected(self):
        with pytest.raises(DataError, match="zero"):
            mape(gt(("a", None, 0.0)), preds(("a", 1.0)))

    def test_unknown_prediction_ignored_with_warning(self, caplog):
        with caplog.at_level("WARNING"):
            report = mape(gt(("a", None, 10.0)), preds(("a", 10.0), ("zz", 3.0)))
        assert report.overall == 0.0
        assert "unknown imageId" in caplog.text

    def test_per_class_and_overall_decomposition(self):
        report = mape(
            gt(
                ("a", DiseaseClass.BLAST, 10.0),
                ("b", DiseaseClass.BLAST, 10.0),
                ("c", DiseaseClass.BSP, 20.0),
            ),
            preds(("a", 12.0), ("b", 10.0), ("c", 15.0)),
        )
        assert report.per_class[DiseaseClass.BLAST] == pytest.approx(10.0)
        assert report.per_class[DiseaseClass.BSP] == pytest.approx(25.0)
        assert report.per_class_n == {DiseaseClass.BLAST: 2, DiseaseClass.BSP: 1}
        # overall is the image mean, not the class-mean mean
        assert report.overall == pytest.approx((0.2 + 0.0 + 0.25) / 3 * 100)
        weighted = sum(
            report.per_class[c] * report.per_class_n[c] for c in report.per_class
        ) / sum(report.per_class_n.values())
        assert report.overall == pytest.approx(weighted, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_naive_recomputation(self, seed):
        rng = random.Random(seed)
        classes = list(DiseaseClass)
        truth = [
            (f"img{i}", rng.choice(classes), rng.uniform(0.5, 60.0)) for i in range(50)
        ]
        predictions = preds(*((i, v * rng.uniform(0.5, 1.5)) for i, _, v in truth))
        report = mape(truth, predictions)
        by_id = {p.image_id: p.predicted_lw for p in predictions}
        total = 0.0
        for image_id, _, value in truth:
            total += abs(value - by_id[image_id]) / value
        assert report.overall == pytest.approx(100.0 * total / len(truth), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(
        values=st.lists(st.floats(0.1, 100, allow_nan=False), min_size=1, max_size=40),
        scale=st.floats(0.01, 100, allow_nan=False),
        noise=st.floats(0.5, 1.5, allow_nan=False),
    )
    def test_scale_invariance(self, values, scale, noise):
        truth = [(f"i{k}", None, v) for k, v in enumerate(values)]
        predictions = preds(*((f"i{k}", v * noise) for k, v in enumerate(values)))
        scaled_truth = [(i, c, v * scale) for i, c, v in truth]
        scaled_preds = preds(*((p.image_id, p.predicted_lw * scale) for p in predictions))
        a = mape(truth, predictions).overall
        b = mape(scaled_truth, scaled_preds).overall
        assert a == pytest.approx(b, abs=1e-9, rel=1e-9)


class TestEffectiveWidth:
    def test_ground_truth_first(self):
        assert effective_width(8.0, 9.1, WidthPolicy.GROUND_TRUTH_FIRST) == 8.0

    def test_ground_truth_first_falls_back(self):
        assert effective_width(None, 9.1, WidthPolicy.GROUND_TRUTH_FIRST) == 9.1

    def test_prediction_first(self):
        assert effective_width(8.0, 9.1, WidthPolicy.PREDICTION_FIRST) == 9.1
        assert effective_width(8.0, None, WidthPolicy.PREDICTION_FIRST) == 8.0

    def test_prediction_only_ignores_ground_truth(self):
        assert effective_width(8.0, 9.1, WidthPolicy.PREDICTION_ONLY) == 9.1
        with pytest.raises(DataError, match="width unavailable"):
            effective_width(8.0, None, WidthPolicy.PREDICTION_ONLY)

    def test_both_absent_is_an_error(self):
        with pytest.raises(DataError, match="width unavailable"):
            effective_width(None, None, WidthPolicy.GROUND_TRUTH_FIRST)


def test_fixture_sidecar_parses_and_scores(fixtures_dir, fixture_records):
    from leaftile.leafwidth import image_leaf_width

    predictions = read_sidecar(fixtures_dir / "sidecar_demo.csv")
    truth = []
    for rec in fixture_records:
        lw = image_leaf_width(rec)
        truth.append((rec.id, rec.regions[0].cls, lw.lw))
    report = mape(truth, predictions)
    assert report.overall == pytest.approx(100 * (0.1 + 0.05 + 0.1) / 3, abs=1e-9)
