import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from therm2vis import dataset as ds
from therm2vis.errors import ConfigurationError, PairingError

from conftest import make_record, synthetic_records, write_corpus


class TestLoadDataset:
    def test_full_corpus_record_count(self, tmp_path):
        write_corpus(tmp_path, n_identities=50, n_variations=21, size=8)
        records = ds.load_dataset(tmp_path)
        assert len(records) == 2100

    def test_empty_directory(self, tmp_path):
        assert ds.load_dataset(tmp_path) == []

    def test_missing_thermal_counterpart(self, tmp_path):
        write_corpus(tmp_path, 5, 8, size=8, skip={(3, 7, "thm")})
        with pytest.raises(PairingError, match=r"identity 3.*variation 7"):
            ds.load_dataset(tmp_path)

    def test_scan_reports_orphans_without_raising(self, tmp_path):
        write_corpus(tmp_path, 2, 2, size=8, skip={(1, 2, "vis")})
        records, problems = ds.scan_dataset(tmp_path)
        assert len(problems) == 1
        assert "identity 1" in problems[0]
        assert len(records) == 2 * 2 * 2 - 2

    def test_missing_root(self, tmp_path):
        with pytest.raises(Exception, match="does not exist"):
            ds.load_dataset(tmp_path / "nope")

    def test_records_sorted_and_valid(self, tmp_path):
        write_corpus(tmp_path, 3, 2, size=8)
        records = ds.load_dataset(tmp_path)
        keys = [(r.identity_id, r.variation_id, r.spectrum) for r in records]
        assert keys == sorted(keys)
        for r in records:
            assert r.pixels.min() >= 0.0 and r.pixels.max() <= 1.0
            assert r.pixels.shape[2] == (3 if r.spectrum == ds.VISIBLE else 1)


class TestPreprocessPair:
    def test_native_thermal_upsample(self):
        thermal = make_record(0, 1, ds.THERMAL, pixels=np.random.default_rng(0).random((120, 120, 1)))
        visible = make_record(0, 1, ds.VISIBLE, size=640)
        pair = ds.preprocess_pair(thermal, visible)
        assert pair.thermal.shape == (128, 128, 3)
        assert pair.visible.shape == (128, 128, 3)
        # replication: all three channels identical
        assert np.max(np.abs(pair.thermal[:, :, 0] - pair.thermal[:, :, 1])) == 0
        assert np.max(np.abs(pair.thermal[:, :, 0] - pair.thermal[:, :, 2])) == 0

    def test_wide_sensor_center_cropped(self):
        grid = np.zeros((120, 160, 1))
        grid[:, 20:140] = 0.5  # center square
        thermal = make_record(0, 1, ds.THERMAL, pixels=grid)
        visible = make_record(0, 1, ds.VISIBLE, size=64)
        pair = ds.preprocess_pair(thermal, visible)
        assert np.allclose(pair.thermal, 0.5)

    def test_identity_resize_keeps_pixels(self):
        rng = np.random.default_rng(1)
        thermal = make_record(0, 1, ds.THERMAL, pixels=rng.random((128, 128, 1)))
        visible = make_record(0, 1, ds.VISIBLE, pixels=rng.random((128, 128, 3)))
        pair = ds.preprocess_pair(thermal, visible)
        assert np.array_equal(pair.visible, visible.pixels)
        assert np.array_equal(pair.thermal[:, :, :1], thermal.pixels)

    def test_constant_input_stays_constant(self):
        thermal = make_record(0, 1, ds.THERMAL, size=120, value=0.25)
        visible = make_record(0, 1, ds.VISIBLE, size=300, value=0.75)
        pair = ds.preprocess_pair(thermal, visible)
        assert np.allclose(pair.thermal, 0.25, atol=1e-6)
        assert np.allclose(pair.visible, 0.75, atol=1e-6)

    def test_mismatched_pair_rejected(self):
        thermal = make_record(0, 1, ds.THERMAL)
        visible = make_record(0, 2, ds.VISIBLE)
        with pytest.raises(PairingError):
            ds.preprocess_pair(thermal, visible)

    def test_wrong_spectra_rejected(self):
        a = make_record(0, 1, ds.VISIBLE)
        b = make_record(0, 1, ds.VISIBLE)
        with pytest.raises(PairingError):
            ds.preprocess_pair(a, b)


class TestIsDark:
    @pytest.mark.parametrize(
        "value,expected",
        [(0.0, True), (1.0, False), (0.049, True), (0.051, False)],
    )
    def test_threshold(self, value, expected):
        rec = make_record(0, 1, ds.VISIBLE, value=value)
        assert ds.is_dark(rec) is expected


class TestMakeFolds:
    def test_ten_fold_over_fifty(self):
        plan = ds.make_folds(range(50), k=10, seed=0)
        assert len(plan.folds) == 10
        for fold in plan.folds:
            assert len(fold.train_identities) == 45
            assert len(fold.test_identities) == 5

    def test_leave_one_out(self):
        plan = ds.make_folds(range(50), k=50, seed=1)
        assert all(len(f.test_identities) == 1 for f in plan.folds)

    def test_deterministic(self):
        a = ds.make_folds(range(50), 10, seed=42)
        b = ds.make_folds(range(50), 10, seed=42)
        assert a == b

    def test_non_divisible_rejected(self):
        with pytest.raises(ConfigurationError):
            ds.make_folds(range(50), k=7, seed=0)

    def test_small_k_rejected(self):
        with pytest.raises(ConfigurationError):
            ds.make_folds(range(50), k=1, seed=0)

    @settings(max_examples=40, deadline=None)
    @given(
        k=st.integers(2, 10),
        per_fold=st.integers(1, 6),
        seed=st.integers(0, 2**31),
    )
    def test_disjointness_and_coverage(self, k, per_fold, seed):
        ids = set(range(k * per_fold))
        plan = ds.make_folds(ids, k, seed)
        seen = []
        for fold in plan.folds:
            assert fold.train_identities & fold.test_identities == frozenset()
            assert fold.train_identities | fold.test_identities == ids
            seen.extend(fold.test_identities)
        assert sorted(seen) == sorted(ids)

    def test_json_round_trip(self):
        plan = ds.make_folds(range(10), 5, seed=3)
        doc = json.loads(plan.to_json())
        assert doc["seed"] == 3
        assert ds.FoldPlan.from_json(plan.to_json()) == plan


class TestTrainingPairs:
    def test_dark_exclusion_count(self):
        records = synthetic_records(50, 21, size=8, dark_variation=5)
        plan = ds.make_folds(range(50), 10, seed=0)
        fold = plan.folds[0]
        pairs = ds.training_pairs(records, fold, exclude_dark=True, size=16)
        assert len(pairs) == 45 * 20

    def test_no_exclusion_count(self):
        records = synthetic_records(50, 21, size=8, dark_variation=5)
        fold = ds.make_folds(range(50), 10, seed=0).folds[0]
        pairs = ds.training_pairs(records, fold, exclude_dark=False, size=16)
        assert len(pairs) == 45 * 21

    def test_empty_train_set(self):
        records = synthetic_records(4, 2, size=8)
        fold = ds.Fold(frozenset(), frozenset(range(4)))
        assert ds.training_pairs(records, fold, size=16) == []

    def test_never_yields_test_identity(self):
        records = synthetic_records(6, 3, size=8)
        plan = ds.make_folds(range(6), 3, seed=5)
        for fold in plan.folds:
            for pair in ds.training_pairs(records, fold, size=16):
                assert pair.identity_id not in fold.test_identities

    def test_channel_replication_invariant(self):
        records = synthetic_records(2, 2, size=8)
        fold = ds.Fold(frozenset(range(2)), frozenset())
        for pair in ds.training_pairs(records, fold, size=16):
            assert np.max(np.abs(pair.thermal[:, :, 0] - pair.thermal[:, :, 2])) == 0
