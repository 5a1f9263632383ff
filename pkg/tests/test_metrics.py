"""Faithfulness and localization metric tests."""

import numpy as np
import pytest
from scipy import ndimage, stats

from ddexplain.metrics import (
    ConfidencePair,
    adcc,
    average_drop,
    average_drop_deletion,
    binarize,
    build_report,
    coherency,
    complexity,
    count_regions,
    increase_in_confidence,
    localization_scores,
    pct_highlighted,
    rasterize_boxes,
    write_report_csv,
)


class TestConfidenceMetrics:
    def test_no_drop(self):
        assert average_drop([ConfidencePair(0.8, 0.8)]) == 0.0

    def test_half_drop(self):
        assert average_drop([ConfidencePair(0.8, 0.4)]) == pytest.approx(0.5)

    def test_increase_clamps_to_zero_drop(self):
        assert average_drop([ConfidencePair(0.5, 0.9)]) == 0.0

    def test_average_drop_matches_scalar_recomputation(self, rng):
        pairs = [ConfidencePair(float(y), float(o)) for y, o in zip(rng.uniform(0.1, 1, 50), rng.uniform(0, 1, 50))]
        expected = sum(max(0.0, p.y - p.o) / p.y for p in pairs) / len(pairs)
        assert average_drop(pairs) == pytest.approx(expected, abs=1e-12)

    def test_average_drop_requires_positive_y(self):
        with pytest.raises(ValueError):
            average_drop([ConfidencePair(0.0, 0.0)])
        with pytest.raises(ValueError):
            average_drop([])

    def test_increase_in_confidence(self):
        assert increase_in_confidence([ConfidencePair(0.5, 0.6)]) == 1.0
        assert increase_in_confidence([ConfidencePair(0.5, 0.5)]) == 0.0  # strict inequality

    def test_increase_matches_count_oracle(self, rng):
        pairs = [ConfidencePair(float(y), float(o)) for y, o in zip(rng.uniform(0.1, 1, 40), rng.uniform(0, 1, 40))]
        expected = sum(1 for p in pairs if p.o > p.y) / len(pairs)
        assert increase_in_confidence(pairs) == pytest.approx(expected)

    def test_deletion_drop(self):
        assert average_drop_deletion([ConfidencePair(0.7, 0.1, 0.7)]) == 0.0
        assert average_drop_deletion([ConfidencePair(1.0, 0.5, 0.0)]) == 1.0

    def test_deletion_matches_scalar_recomputation(self, rng):
        pairs = [
            ConfidencePair(float(y), 0.5, float(d))
            for y, d in zip(rng.uniform(0.1, 1, 30), rng.uniform(0, 1, 30))
        ]
        expected = sum(max(0.0, p.y - p.d) / p.y for p in pairs) / len(pairs)
        assert average_drop_deletion(pairs) == pytest.approx(expected, abs=1e-12)

    def test_pair_range_validation(self):
        with pytest.raises(ValueError):
            ConfidencePair(1.2, 0.5)


class TestMapMetrics:
    def test_complexity_bounds(self, rng):
        assert complexity(np.zeros((4, 4))) == 0.0
        assert complexity(np.ones((4, 4))) == 1.0
        m = rng.random((9, 7))
        assert complexity(m) == pytest.approx(float(m.sum() / m.size))

    def test_coherency_self_correlation(self, rng):
        m = rng.random((6, 6))
        assert coherency(m, m) == pytest.approx(1.0)

    def test_coherency_anticorrelation_clamps_to_zero(self, rng):
        m = rng.random((6, 6))
        assert coherency(m, 1.0 - m) == 0.0

    def test_coherency_constant_maps(self):
        assert coherency(np.ones((3, 3)), np.ones((3, 3))) == 0.0
        assert coherency(np.ones((3, 3)), np.random.default_rng(0).random((3, 3))) == 0.0

    def test_coherency_matches_scipy_pearson(self, rng):
        a, b = rng.random((8, 8)), rng.random((8, 8))
        r = stats.pearsonr(a.ravel(), b.ravel()).statistic
        assert coherency(a, b) == pytest.approx(min(1.0, max(0.0, r)), abs=1e-12)

    def test_adcc_identities(self):
        assert adcc(0.0, 1.0, 0.0) == 1.0
        assert adcc(0.5, 1.0, 0.5) == pytest.approx(0.6, abs=1e-9)
        assert adcc(1.0, 1.0, 0.0) == 0.0  # zero denominator term
        assert adcc(0.0, 0.0, 0.0) == 0.0

    def test_adcc_bounded_by_components(self, rng):
        # harmonic mean lies between the smallest and largest of its terms
        for _ in range(100):
            ad, coh, com = rng.uniform(0, 0.99), rng.uniform(0.01, 1), rng.uniform(0, 0.99)
            v = adcc(ad, coh, com)
            terms = (coh, 1 - com, 1 - ad)
            assert min(terms) - 1e-12 <= v <= max(terms) + 1e-12

    def test_adcc_monotone(self, rng):
        ad, coh, com = 0.3, 0.8, 0.4
        base = adcc(ad, coh, com)
        assert adcc(ad - 0.1, coh, com) >= base
        assert adcc(ad, coh + 0.1, com) >= base
        assert adcc(ad, coh, com - 0.1) >= base


class TestBinarize:
    def test_constant_one_map_all_true(self):
        assert binarize(np.ones((3, 3)), 0.5).all()

    def test_one_hot_map_single_pixel(self):
        m = np.zeros((4, 4))
        m[1, 2] = 1.0
        out = binarize(m, 0.5)
        assert out.sum() == 1 and out[1, 2]

    def test_all_zero_map_stays_false(self):
        assert not binarize(np.zeros((4, 4)), 0.5).any()

    def test_matches_scalar_thresholding(self, rng):
        m = rng.random((10, 10))
        out = binarize(m, 0.7)
        expected = m >= 0.7 * m.max()
        np.testing.assert_array_equal(out, expected)

    def test_invariant_under_positive_rescaling(self, rng):
        m = rng.random((6, 6))
        np.testing.assert_array_equal(binarize(m, 0.4), binarize(5.0 * m, 0.4))

    def test_tau_validation(self):
        with pytest.raises(ValueError):
            binarize(np.ones((2, 2)), 0.0)
        with pytest.raises(ValueError):
            binarize(np.ones((2, 2)), 1.1)


class TestLocalization:
    def test_perfect_match(self):
        mask = rasterize_boxes([[1, 1, 2, 2]], 4, 4)
        assert localization_scores(mask, [[1, 1, 2, 2]]) == (1.0, 1.0, 1.0)

    def test_disjoint(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 0] = True
        iou, precision, recall = localization_scores(mask, [[2, 2, 2, 2]])
        assert (iou, precision, recall) == (0.0, 0.0, 0.0)

    def test_half_overlap_counting(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[:2, :] = True  # top half
        iou, precision, recall = localization_scores(mask, [[0, 0, 2, 4]])  # left half
        assert iou == pytest.approx(1 / 3)
        assert precision == pytest.approx(1 / 2)
        assert recall == pytest.approx(1 / 2)

    def test_empty_mask_zero_precision(self):
        mask = np.zeros((4, 4), dtype=bool)
        iou, precision, recall = localization_scores(mask, [[0, 0, 2, 2]])
        assert (iou, precision, recall) == (0.0, 0.0, 0.0)

    def test_empty_boxes_rejected(self):
        with pytest.raises(ValueError):
            localization_scores(np.ones((4, 4), dtype=bool), [])

    def test_out_of_bounds_box_rejected(self):
        with pytest.raises(ValueError):
            rasterize_boxes([[3, 3, 2, 2]], 4, 4)
        with pytest.raises(ValueError):
            rasterize_boxes([[0, 0, 0, 2]], 4, 4)

    def test_iou_bounded_by_precision_and_recall(self, rng):
        for _ in range(200):
            mask = rng.random((8, 8)) > 0.6
            x, y = int(rng.integers(0, 6)), int(rng.integers(0, 6))
            w, h = int(rng.integers(1, 8 - x)), int(rng.integers(1, 8 - y))
            iou, precision, recall = localization_scores(mask, [[x, y, w, h]])
            assert iou <= precision + 1e-12 or precision == 0.0
            assert iou <= recall + 1e-12

    def test_pct_highlighted(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[0] = True
        assert pct_highlighted(mask) == 0.25


class TestCountRegions:
    def test_empty_mask(self):
        assert count_regions(np.zeros((5, 5), dtype=bool)) == 0

    def test_diagonal_pixels_connect(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[0, 0] = mask[1, 1] = True
        assert count_regions(mask) == 1  # 8-connectivity

    def test_two_separate_regions(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[0, 0] = True
        mask[4, 4] = mask[4, 3] = True
        assert count_regions(mask) == 2

    def test_matches_scipy_labeling(self, rng):
        structure = np.ones((3, 3), dtype=int)
        for _ in range(100):
            mask = rng.random((12, 12)) > 0.7
            _, n = ndimage.label(mask, structure=structure)
            assert count_regions(mask) == n

    def test_transpose_invariance(self, rng):
        for _ in range(20):
            mask = rng.random((6, 9)) > 0.6
            assert count_regions(mask) == count_regions(mask.T)


class TestReport:
    def test_aggregates_are_means_of_records(self):
        records = [
            {"y": 0.8, "o": 0.4, "d": 0.2, "complexity": 0.3, "coherency": 0.9,
             "iou": 0.5, "precision": 0.6, "recall": 0.7, "regions": 1.0, "pct_highlighted": 0.2},
            {"y": 0.6, "o": 0.6, "d": 0.6, "complexity": 0.1, "coherency": 0.7,
             "iou": 0.3, "precision": 0.4, "recall": 0.5, "regions": 2.0, "pct_highlighted": 0.4},
        ]
        report = build_report(records)
        agg = report["aggregates"]
        assert agg["complexity"] == pytest.approx(0.2)
        assert agg["coherency"] == pytest.approx(0.8)
        assert agg["iou"] == pytest.approx(0.4)
        assert agg["average_drop"] == pytest.approx((0.5 + 0.0) / 2)
        assert agg["increase_in_confidence"] == 0.0
        assert agg["average_drop_deletion"] == pytest.approx((0.75 + 0.0) / 2)
        assert agg["adcc"] == pytest.approx(adcc(agg["average_drop"], 0.8, 0.2))
        assert report["records"] == records

    def test_localization_fields_may_be_missing(self):
        records = [{"y": 0.8, "o": 0.4, "d": 0.2, "complexity": 0.3, "coherency": 0.9,
                    "iou": None, "precision": None, "recall": None, "regions": None,
                    "pct_highlighted": None}]
        agg = build_report(records)["aggregates"]
        assert agg["iou"] is None
        assert agg["average_drop"] == pytest.approx(0.5)

    def test_csv_export(self, tmp_path):
        records = [{"y": 0.8, "o": 0.4, "d": 0.2, "complexity": 0.3, "coherency": 0.9,
                    "iou": 0.5, "precision": 0.6, "recall": 0.7, "regions": 1.0,
                    "pct_highlighted": 0.2}]
        report = build_report(records)
        path = tmp_path / "agg.csv"
        write_report_csv(report, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[0].split(",")[0] == "y"
