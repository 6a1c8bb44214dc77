import math

import numpy as np
import pytest

from deepmatch.data import (
    GroundTruth,
    ObservationalDataset,
    SwissRollConfig,
    duplicate_twins,
    gen_propensity_pairs,
    gen_swiss_roll,
    load_csv,
    roll_surface,
    save_csv,
    subset,
    train_test_split,
)
from oracles import knn_scan


class TestRollSurface:
    def test_start_of_roll(self):
        t, h, p = roll_surface(0.0, 0.0)
        assert t == pytest.approx(3 * math.pi / 2, rel=1e-15)
        assert h == 0.0
        assert np.allclose(p, [[0.0, 0.0, -3 * math.pi / 2]], atol=1e-12)

    def test_half_turn(self):
        t, h, p = roll_surface(0.5, 1.0)
        assert t == pytest.approx(3 * math.pi, rel=1e-15)
        assert h == 11.0
        assert np.allclose(p, [[-3 * math.pi, 11.0, 0.0]], atol=1e-12)

    def test_radius_identity(self):
        u = np.linspace(0, 1, 50, endpoint=False)
        t, _, p = roll_surface(u, np.zeros_like(u))
        assert np.all(np.abs(np.hypot(p[:, 0], p[:, 2]) - t) < 1e-9)


class TestSwissRoll:
    def test_shapes_and_arm_balance(self):
        ds = gen_swiss_roll(SwissRollConfig(seed=0))
        assert ds.x.shape == (1500, 3)
        n0, n1 = ds.arm_sizes()
        assert n0 + n1 == 1500
        assert min(n0, n1) > 600  # Bernoulli(0.5) far from degenerate

    def test_six_equal_bands(self):
        ds = gen_swiss_roll(SwissRollConfig(seed=1))
        assert np.array_equal(np.bincount(ds.truth.group), [250] * 6)

    def test_band_sizes_differ_by_at_most_one(self):
        ds = gen_swiss_roll(SwissRollConfig(n=1000, seed=2))
        counts = np.bincount(ds.truth.group)
        assert counts.max() - counts.min() <= 1

    def test_bands_follow_roll_parameter(self):
        ds = gen_swiss_roll(SwissRollConfig(noise_sigma=0.0, seed=3))
        t = np.hypot(ds.x[:, 0], ds.x[:, 2])
        order = np.argsort(t, kind="stable")
        expect = np.empty(len(t), dtype=int)
        expect[order] = np.arange(len(t)) * 6 // len(t)
        assert np.array_equal(expect, ds.truth.group)

    def test_linear_outcomes_against_per_row_dot_products(self):
        cfg = SwissRollConfig(n=40, noise_sigma=0.0, seed=4)
        ds = gen_swiss_roll(cfg)
        a, b = cfg.coeff_control, cfg.coeff_treated
        for i in range(ds.n_units):
            y0 = sum(a[j] * ds.x[i, j] for j in range(3))
            y1 = sum(b[j] * ds.x[i, j] for j in range(3))
            assert ds.truth.y0[i] == pytest.approx(y0, rel=1e-12, abs=1e-12)
            assert ds.truth.y1[i] == pytest.approx(y1, rel=1e-12, abs=1e-12)

    def test_default_coefficients_worked_example(self):
        # a=(1,1,1), b=(2,1,1) on the point (1,2,3): y0=6, y1=7, effect 1
        a, b, point = (1, 1, 1), (2, 1, 1), (1, 2, 3)
        y0 = sum(ai * xi for ai, xi in zip(a, point))
        y1 = sum(bi * xi for bi, xi in zip(b, point))
        assert (y0, y1, y1 - y0) == (6, 7, 1)
        cfg = SwissRollConfig()
        assert cfg.coeff_control == (1.0, 1.0, 1.0)
        assert cfg.coeff_treated == (2.0, 1.0, 1.0)

    def test_unit_effect_is_first_coordinate_for_defaults(self):
        ds = gen_swiss_roll(SwissRollConfig(noise_sigma=0.0, seed=5))
        assert np.allclose(ds.truth.ite_true, ds.x[:, 0], atol=1e-10)

    def test_observed_outcome_selects_by_arm(self):
        ds = gen_swiss_roll(SwissRollConfig(seed=6))
        t = ds.truth
        assert np.array_equal(ds.y_obs, np.where(ds.w == 1, t.y1, t.y0))
        assert np.array_equal(t.ite_true, t.y1 - t.y0)

    def test_outcome_noise_keeps_effect_exact(self):
        ds = gen_swiss_roll(SwissRollConfig(outcome_noise_sigma=0.5, seed=7))
        assert np.array_equal(ds.truth.ite_true, ds.truth.y1 - ds.truth.y0)

    def test_same_seed_identical(self):
        a = gen_swiss_roll(SwissRollConfig(seed=8))
        b = gen_swiss_roll(SwissRollConfig(seed=8))
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.w, b.w)
        assert np.array_equal(a.y_obs, b.y_obs)

    def test_different_seed_differs(self):
        a = gen_swiss_roll(SwissRollConfig(seed=9))
        b = gen_swiss_roll(SwissRollConfig(seed=10))
        assert not np.array_equal(a.x, b.x)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="n must"):
            SwissRollConfig(n=1)
        with pytest.raises(ValueError, match="finite"):
            SwissRollConfig(noise_sigma=float("nan"))
        with pytest.raises(ValueError, match="p_treat"):
            SwissRollConfig(p_treat=1.5)
        with pytest.raises(ValueError, match="sigma"):
            SwissRollConfig(outcome_noise_sigma=-0.1)


class TestPropensityPairs:
    def test_layout_and_pairing(self):
        ds = gen_propensity_pairs(1000, 0.01, seed=0)
        assert ds.x.shape == (2000, 2)
        assert np.array_equal(ds.w[:1000], np.ones(1000, dtype=int))
        assert np.array_equal(ds.w[1000:], np.zeros(1000, dtype=int))
        p = ds.truth.pair_index
        assert np.array_equal(p[p], np.arange(2000))
        assert np.array_equal(p[:1000], np.arange(1000, 2000))

    def test_controls_are_jittered_copies(self):
        sigma = 0.02
        ds = gen_propensity_pairs(500, sigma, seed=1)
        diffs = ds.x[500:] - ds.x[:500]
        assert np.abs(diffs).max() < 6 * sigma
        assert np.abs(ds.y_obs[500:] - ds.y_obs[:500]).max() < 6 * sigma
        assert np.all((ds.x[:500] >= 0) & (ds.x[:500] < 1))

    def test_pair_is_nearest_neighbor_at_small_jitter(self):
        ds = gen_propensity_pairs(300, 1e-4, seed=2)
        treated = list(range(300))
        for i in range(300, 600):
            idx, _ = knn_scan(ds.x.tolist(), ds.w.tolist(), i, 1)
            assert idx[0] == ds.truth.pair_index[i]

    def test_distance_shrinks_with_jitter(self):
        big = gen_propensity_pairs(50, 0.1, seed=3)
        small = gen_propensity_pairs(50, 1e-6, seed=3)
        gap = lambda ds: np.abs(ds.x[50:] - ds.x[:50]).max()
        assert gap(small) < 1e-4 < gap(big)

    def test_no_effect_in_truth(self):
        ds = gen_propensity_pairs(10, 0.05, seed=4)
        assert np.array_equal(ds.truth.ite_true, np.zeros(20))

    def test_zero_jitter_rejected(self):
        with pytest.raises(ValueError, match="jitter"):
            gen_propensity_pairs(10, 0.0, seed=0)
        with pytest.raises(ValueError, match="n must"):
            gen_propensity_pairs(0, 0.1, seed=0)


class TestDuplicateTwins:
    def test_clones_carry_counterfactuals(self):
        ds = gen_swiss_roll(SwissRollConfig(n=60, seed=11))
        tw = duplicate_twins(ds)
        n = ds.n_units
        assert tw.n_units == 2 * n
        assert np.array_equal(tw.x[n:], ds.x)
        assert np.array_equal(tw.w[n:], 1 - ds.w)
        expect = np.where(ds.w == 0, ds.truth.y1, ds.truth.y0)
        assert np.array_equal(tw.y_obs[n:], expect)
        assert np.array_equal(tw.truth.pair_index[:n], np.arange(n) + n)

    def test_requires_truth(self):
        ds = ObservationalDataset(
            x=np.zeros((4, 2)), w=np.array([0, 1, 0, 1]), y_obs=np.zeros(4)
        )
        with pytest.raises(ValueError, match="ground truth"):
            duplicate_twins(ds)


class TestDatasetValidation:
    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            ObservationalDataset(x=np.zeros((3, 2)), w=np.zeros(2, int), y_obs=np.zeros(3))

    def test_nonbinary_treatment(self):
        with pytest.raises(ValueError, match="0 or 1"):
            ObservationalDataset(
                x=np.zeros((2, 1)), w=np.array([0, 2]), y_obs=np.zeros(2)
            )

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            ObservationalDataset(
                x=np.array([[np.inf]]), w=np.array([1]), y_obs=np.zeros(1)
            )

    def test_truth_consistency_enforced(self):
        x = np.zeros((2, 1))
        w = np.array([1, 0])
        good = GroundTruth(
            y0=np.array([1.0, 2.0]),
            y1=np.array([3.0, 4.0]),
            ite_true=np.array([2.0, 2.0]),
            group=np.zeros(2, dtype=int),
        )
        ObservationalDataset(x=x, w=w, y_obs=np.array([3.0, 2.0]), truth=good)
        with pytest.raises(ValueError, match="ite_true"):
            bad = GroundTruth(
                y0=good.y0, y1=good.y1, ite_true=np.array([2.0, 1.0]), group=good.group
            )
            ObservationalDataset(x=x, w=w, y_obs=np.array([3.0, 2.0]), truth=bad)
        with pytest.raises(ValueError, match="y_obs"):
            ObservationalDataset(x=x, w=w, y_obs=np.array([1.0, 2.0]), truth=good)

    def test_pair_must_be_opposite_arm_involution(self):
        x = np.zeros((2, 1))
        w = np.array([1, 1])
        t = GroundTruth(
            y0=np.zeros(2),
            y1=np.zeros(2),
            ite_true=np.zeros(2),
            group=np.zeros(2, dtype=int),
            pair_index=np.array([1, 0]),
        )
        with pytest.raises(ValueError, match="opposite"):
            ObservationalDataset(x=x, w=w, y_obs=np.zeros(2), truth=t)


class TestCsv:
    def test_round_trip_with_full_truth(self, tmp_path):
        ds = gen_propensity_pairs(40, 0.02, seed=5)
        path = tmp_path / "pairs.csv"
        save_csv(ds, path)
        back = load_csv(path)
        assert np.array_equal(back.x, ds.x)
        assert np.array_equal(back.w, ds.w)
        assert np.array_equal(back.y_obs, ds.y_obs)
        assert np.array_equal(back.truth.y0, ds.truth.y0)
        assert np.array_equal(back.truth.pair_index, ds.truth.pair_index)

    def test_round_trip_without_pairs(self, tmp_path):
        ds = gen_swiss_roll(SwissRollConfig(n=30, seed=6))
        path = tmp_path / "roll.csv"
        save_csv(ds, path)
        back = load_csv(path)
        assert np.array_equal(back.x, ds.x)
        assert np.array_equal(back.truth.ite_true, ds.truth.ite_true)
        assert back.truth.pair_index is None

    def test_round_trip_without_truth(self, tmp_path):
        ds = ObservationalDataset(
            x=np.array([[0.25, -1.5], [3.0, 2.0]]),
            w=np.array([1, 0]),
            y_obs=np.array([0.5, -0.5]),
        )
        path = tmp_path / "bare.csv"
        save_csv(ds, path)
        back = load_csv(path)
        assert back.truth is None
        assert np.array_equal(back.x, ds.x)

    def test_header_written(self, tmp_path):
        ds = gen_swiss_roll(SwissRollConfig(n=12, seed=7))
        path = tmp_path / "roll.csv"
        save_csv(ds, path)
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == "x1,x2,x3,w,y_obs,y0,y1,ite_true,group"

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ValueError, match="no rows"):
            load_csv(path)

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("x1,w,y_obs\n", encoding="utf-8")
        with pytest.raises(ValueError, match="no rows"):
            load_csv(path)

    def test_bad_treatment_names_line(self, tmp_path):
        rows = ["x1,w,y_obs"] + [f"{i}.0,0,1.0" for i in range(5)]
        rows[3] = "2.0,2,1.0"  # file line 4
        path = tmp_path / "bad.csv"
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 4.*'w'"):
            load_csv(path)

    def test_non_numeric_value_names_line_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,w,y_obs\n1.0,0,oops\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 2.*'y_obs'"):
            load_csv(path)

    def test_short_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,x2,w,y_obs\n1.0,2.0,0\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 2"):
            load_csv(path)

    def test_unknown_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,w,y_obs,bonus\n1.0,0,2.0,3.0\n", encoding="utf-8")
        with pytest.raises(ValueError, match="bonus"):
            load_csv(path)

    def test_missing_covariates_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("w,y_obs\n0,1.0\n", encoding="utf-8")
        with pytest.raises(ValueError, match="x1"):
            load_csv(path)


class TestSplits:
    def test_split_partitions_indices(self):
        train, test = train_test_split(100, 0.2, seed=0)
        assert len(test) == 20 and len(train) == 80
        assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(100))

    def test_split_deterministic(self):
        a = train_test_split(50, 0.2, seed=1)
        b = train_test_split(50, 0.2, seed=1)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_fraction_bounds(self):
        with pytest.raises(ValueError, match="test_fraction"):
            train_test_split(10, 0.0, seed=0)
        with pytest.raises(ValueError, match="test_fraction"):
            train_test_split(10, 1.0, seed=0)

    def test_subset_keeps_invariants(self):
        ds = gen_swiss_roll(SwissRollConfig(n=60, seed=12))
        train, test = train_test_split(60, 0.25, seed=2)
        sub = subset(ds, test)
        assert sub.n_units == len(test)
        assert np.array_equal(sub.truth.ite_true, ds.truth.ite_true[test])
