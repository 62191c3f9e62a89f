"""Counting metrics: MAPE, GAMPE, presence F-score, binned report."""

import json

import numpy as np
import pytest

from cownter import CountPair, DataError, SeedEval, binned_report, gampe, mape, presence_fscore
from cownter.metrics import DEFAULT_BINS, bin_index, bin_label
from oracles import gampe_bruteforce, mape_bruteforce


def random_pairs(rng, n):
    ys = rng.integers(0, 300, n)
    y_hats = np.maximum(ys + rng.normal(0, 20, n), 0.0)
    return [CountPair(int(y), float(yh)) for y, yh in zip(ys, y_hats)]


class TestMape:
    def test_exact_prediction_is_zero(self):
        assert mape([CountPair(5, 5.0)]) == 0.0

    def test_simple_ratio(self):
        assert mape([CountPair(10, 8.0)]) == pytest.approx(0.2, abs=1e-15)

    def test_zero_ground_truth_uses_floor(self):
        assert mape([CountPair(0, 3.0)]) == pytest.approx(3.0, abs=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(DataError, match="at least one"):
            mape([])

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pairs = random_pairs(rng, int(rng.integers(1, 40)))
            expected = mape_bruteforce([p.y for p in pairs], [p.y_hat for p in pairs])
            assert mape(pairs) == pytest.approx(expected, abs=1e-12)

    def test_zero_iff_all_exact(self):
        assert mape([CountPair(3, 3.0), CountPair(0, 0.0)]) == 0.0
        assert mape([CountPair(3, 3.0), CountPair(4, 5.0)]) > 0.0

    def test_error_scale_property(self):
        ys = [4, 9, 0, 120]
        base = [CountPair(y, y + d) for y, d in zip(ys, (1.0, 2.0, 0.5, 30.0))]
        doubled = [CountPair(y, y + 2 * d) for y, d in zip(ys, (1.0, 2.0, 0.5, 30.0))]
        assert mape(doubled) == pytest.approx(2 * mape(base), rel=1e-12)


class TestCountPair:
    def test_rejects_negative_ground_truth(self):
        with pytest.raises(DataError, match=">= 0"):
            CountPair(-1, 0.0)

    def test_rejects_bad_prediction(self):
        with pytest.raises(DataError, match="finite"):
            CountPair(1, float("nan"))
        with pytest.raises(DataError, match="finite"):
            CountPair(1, -0.5)


class TestGampe:
    def test_hand_example(self):
        gt = np.array([[[2, 0], [1, 0]]], dtype=float)
        pred = np.array([[[1, 1], [1, 0]]], dtype=float)
        assert gampe(pred, gt) == pytest.approx(1.5, abs=1e-15)

    def test_grid_one_equals_mape(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            pairs = random_pairs(rng, int(rng.integers(1, 30)))
            pred = np.array([[[p.y_hat]] for p in pairs])
            gt = np.array([[[p.y]] for p in pairs])
            assert gampe(pred, gt) == pytest.approx(mape(pairs), abs=1e-12)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n, g = int(rng.integers(1, 12)), int(rng.integers(1, 5))
            gt = rng.integers(0, 9, (n, g, g)).astype(float)
            pred = np.maximum(gt + rng.normal(0, 2, (n, g, g)), 0.0)
            assert gampe(pred, gt) == pytest.approx(gampe_bruteforce(pred, gt), abs=1e-12)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DataError, match="mismatch"):
            gampe(np.zeros((1, 2, 2)), np.zeros((1, 3, 3)))

    def test_rejects_empty(self):
        with pytest.raises(DataError, match="non-empty"):
            gampe(np.zeros((0, 2, 2)), np.zeros((0, 2, 2)))

    def test_invariant_to_moves_within_cells(self):
        from cownter import points_cell_counts
        from cownter.raster import Point

        # Shifting each point inside its own cell cannot change its cell
        # count, hence cannot change the score.
        pts_a = [Point(1.0, 1.0), Point(6.0, 6.0)]
        pts_b = [Point(2.5, 0.5), Point(5.5, 7.5)]  # same cells on a 2x2 grid of 8px
        cells_a = points_cell_counts(pts_a, 8, 8, 2)
        cells_b = points_cell_counts(pts_b, 8, 8, 2)
        assert np.array_equal(cells_a, cells_b)
        gt = np.array([[[1, 0], [0, 1]]], dtype=float)
        assert gampe(cells_a[None], gt) == gampe(cells_b[None], gt)


class TestPresenceFscore:
    def test_perfect(self):
        pairs = [CountPair(3, 3.0), CountPair(0, 0.0), CountPair(7, 6.0)]
        s = presence_fscore(pairs)
        assert s.precision == 1.0 and s.recall == 1.0 and s.fscore == 1.0
        assert not s.degenerate

    def test_no_predicted_positives(self):
        pairs = [CountPair(3, 0.0), CountPair(5, 0.2)]
        s = presence_fscore(pairs)
        assert s.recall == 0.0
        assert s.fscore == 0.0

    def test_confusion_counts(self):
        pairs = [
            CountPair(1, 1.0),  # TP
            CountPair(2, 3.0),  # TP
            CountPair(0, 2.0),  # FP
            CountPair(4, 0.0),  # FN
            CountPair(0, 0.0),  # TN
        ]
        s = presence_fscore(pairs)
        assert s.precision == pytest.approx(2 / 3)
        assert s.recall == pytest.approx(2 / 3)
        assert s.fscore == pytest.approx(2 / 3)

    def test_degenerate_all_negative(self):
        s = presence_fscore([CountPair(0, 0.0), CountPair(0, 0.1)])
        assert s.degenerate
        assert s.fscore == 0.0

    def test_duplication_invariant(self):
        rng = np.random.default_rng(3)
        pairs = random_pairs(rng, 20)
        a = presence_fscore(pairs)
        b = presence_fscore(pairs + pairs)
        assert (a.precision, a.recall, a.fscore) == (b.precision, b.recall, b.fscore)

    def test_threshold_behavior(self):
        pairs = [CountPair(1, 0.49), CountPair(1, 0.5)]
        s = presence_fscore(pairs, decision_threshold=0.5)
        assert s.recall == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(DataError, match="at least one"):
            presence_fscore([])


class TestBins:
    def test_membership_examples(self):
        assert bin_index(0) == 0
        assert bin_index(7) == 1
        assert bin_index(55) == 2
        assert bin_index(300) == 3

    def test_edges(self):
        assert bin_index(1) == 1
        assert bin_index(10) == 1
        assert bin_index(11) == 2
        assert bin_index(100) == 2
        assert bin_index(101) == 3

    def test_labels(self):
        assert [bin_label(b) for b in DEFAULT_BINS] == ["0", "1-10", "11-100", "101+"]


def make_run(pairs, grid_n=2, rng=None):
    n = len(pairs)
    gt = np.zeros((n, grid_n, grid_n))
    pred = np.zeros((n, grid_n, grid_n))
    for i, p in enumerate(pairs):
        gt[i, 0, 0] = p.y
        pred[i, 0, 0] = p.y_hat
    return SeedEval(pairs=tuple(pairs), pred_cells=pred, gt_cells=gt)


class TestBinnedReport:
    def test_all_empty_perfect_predictor(self):
        pairs = [CountPair(0, 0.0)] * 5
        report = binned_report([make_run(pairs)])
        assert report.n_per_bin == (5, 0, 0, 0)
        assert report.mape_mean[0] == 0.0
        assert report.mape_mean[1] is None and report.n_per_bin[1] == 0

    def test_single_seed_zero_std(self):
        rng = np.random.default_rng(4)
        pairs = random_pairs(rng, 12)
        report = binned_report([make_run(pairs)])
        for std in report.mape_std:
            assert std is None or std == 0.0
        assert report.fscore_std == 0.0

    def test_n_per_bin_sums_to_set_size(self):
        rng = np.random.default_rng(5)
        pairs = random_pairs(rng, 37)
        report = binned_report([make_run(pairs)])
        assert sum(report.n_per_bin) == 37

    def test_per_bin_mape_matches_direct_computation(self):
        rng = np.random.default_rng(6)
        pairs = random_pairs(rng, 40)
        report = binned_report([make_run(pairs)])
        for i, (lo, hi) in enumerate(DEFAULT_BINS):
            members = [p for p in pairs if p.y >= lo and (hi is None or p.y <= hi)]
            if members:
                assert report.mape_mean[i] == pytest.approx(mape(members), abs=1e-12)

    def test_mean_and_std_across_seeds(self):
        pairs_a = [CountPair(4, 4.0)]
        pairs_b = [CountPair(4, 6.0)]
        report = binned_report([make_run(pairs_a), make_run(pairs_b)])
        # bin 1-10: per-seed MAPE 0 and 0.5
        assert report.mape_mean[1] == pytest.approx(0.25)
        assert report.mape_std[1] == pytest.approx(0.25)
        assert report.n_seeds == 2

    def test_rejects_mismatched_ground_truth(self):
        with pytest.raises(DataError, match="disagree"):
            binned_report([make_run([CountPair(1, 1.0)]), make_run([CountPair(2, 2.0)])])

    def test_rejects_no_runs(self):
        with pytest.raises(DataError, match="at least one"):
            binned_report([])

    def test_document_is_stable_and_parseable(self):
        rng = np.random.default_rng(7)
        pairs = random_pairs(rng, 15)
        a = binned_report([make_run(pairs)]).to_document()
        b = binned_report([make_run(pairs)]).to_document()
        assert a == b
        doc = json.loads(a)
        assert doc["bins"] == ["0", "1-10", "11-100", "101+"]
        assert {"per_bin", "presence", "grid_n", "n_seeds"} <= set(doc)

    def test_seed_eval_validates_shapes(self):
        with pytest.raises(DataError, match="shape"):
            SeedEval(
                pairs=(CountPair(1, 1.0),),
                pred_cells=np.zeros((1, 2, 2)),
                gt_cells=np.zeros((1, 3, 3)),
            )
        with pytest.raises(DataError, match="length"):
            SeedEval(
                pairs=(CountPair(1, 1.0),),
                pred_cells=np.zeros((2, 2, 2)),
                gt_cells=np.zeros((2, 2, 2)),
            )
