"""Tests for CSV loading, nested split plans, and scalers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchormoe import data as D
from conftest import dataset_path

DATA = dataset_path("boston.csv")


def test_load_boston():
    table = D.load_csv(DATA, "MEDV")
    assert table.features.shape == (506, 13)
    assert table.target.shape == (506,)
    assert "LSTAT" in table.column_names
    assert table.features.dtype == np.float64


def test_load_by_index_matches_by_name():
    by_name = D.load_csv(DATA, "MEDV")
    by_index = D.load_csv(DATA, 13)
    np.testing.assert_array_equal(by_name.target, by_index.target)


def test_load_missing_file():
    with pytest.raises(D.DataError, match="missing file"):
        D.load_csv("/nonexistent.csv", 0)


def test_load_missing_target_column():
    with pytest.raises(D.DataError, match="missing target column"):
        D.load_csv(DATA, "NOPE")


def test_load_rejects_missing_values(tmp_path):
    p = tmp_path / "bad.csv"
    rows = ["a,b"] + [f"{i},{i * 2}" for i in range(12)]
    rows[5] = "4,"
    p.write_text("\n".join(rows) + "\n")
    with pytest.raises(D.DataError, match="missing value"):
        D.load_csv(p, "b")


def test_load_one_hot(tmp_path):
    p = tmp_path / "cat.csv"
    lines = ["c,y"] + [f"{'red' if i % 2 else 'blue'},{i}" for i in range(12)]
    p.write_text("\n".join(lines) + "\n")
    table = D.load_csv(p, "y", {"one_hot": ["c"]})
    assert table.features.shape == (12, 2)
    np.testing.assert_allclose(table.features.sum(axis=1), 1.0)


def test_table_rejects_small():
    with pytest.raises(D.DataError, match="at least 10 rows"):
        D.Table(np.zeros((5, 2)), np.zeros(5))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(30, 2000), seed=st.integers(0, 10_000))
def test_split_plan_partition(n, seed):
    plan = D.make_split_plan(n, seed)
    plan.validate(n)  # disjoint cover invariants are asserted inside


def test_split_sizes_floor_rounding():
    plan = D.make_split_plan(506, 0)
    assert plan.test_idx.size == 50  # floor(506 * 0.10)
    assert plan.cal_idx.size == 45  # floor(456 * 0.10)
    assert plan.va_idx.size == 82  # floor(411 * 0.20)
    assert plan.tr_idx.size == 329  # remainder
    assert plan.tv_idx.size == 411


def test_split_plan_seed_reproducible():
    a = D.make_split_plan(500, 7)
    b = D.make_split_plan(500, 7)
    assert a.content_hash() == b.content_hash()
    c = D.make_split_plan(500, 8)
    assert a.content_hash() != c.content_hash()


def test_split_plan_json_roundtrip():
    plan = D.make_split_plan(321, 3)
    again = D.SplitPlan.from_json(plan.to_json())
    assert plan.content_hash() == again.content_hash()
    assert again.seed == 3


def test_bad_fractions():
    with pytest.raises(D.DataError, match="fraction"):
        D.make_split_plan(100, 0, D.SplitFractions(test=1.5))


def test_zscaler_population_std():
    values = np.array([1.0, 2.0, 3.0, 4.0])
    sc = D.fit_zscaler(values)
    assert sc.mu == 2.5
    assert sc.sigma == pytest.approx(np.sqrt(1.25))  # population, not sample
    z = sc.apply(values)
    np.testing.assert_allclose(z.mean(), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(), 1.0, atol=1e-12)
    np.testing.assert_allclose(sc.invert(z), values, atol=1e-12)


def test_zscaler_constant_fallback():
    sc = D.fit_zscaler(np.full(8, 3.0))
    assert sc.sigma == 1.0
    np.testing.assert_allclose(sc.apply(np.full(3, 3.0)), 0.0)


def test_column_scaler_zero_variance():
    x = np.column_stack([np.arange(10.0), np.full(10, 7.0)])
    sc = D.fit_column_scaler(x)
    assert sc.stds[1] == 1.0
    out = sc.apply(x)
    np.testing.assert_allclose(out[:, 1], 0.0)
    np.testing.assert_allclose(out[:, 0].std(), 1.0, atol=1e-12)


def test_subsample():
    table = D.load_csv(DATA, "MEDV")
    sub = D.subsample(table, 100, seed=1)
    assert sub.n == 100
    again = D.subsample(table, 100, seed=1)
    np.testing.assert_array_equal(sub.target, again.target)
    with pytest.raises(D.DataError, match="cannot subsample"):
        D.subsample(table, 10_000, seed=0)


def test_augment_with_anchor():
    x = np.zeros((5, 3))
    out = D.augment_with_anchor(x, np.arange(5.0))
    assert out.shape == (5, 4)
    np.testing.assert_array_equal(out[:, 3], np.arange(5.0))
    with pytest.raises(D.DataError, match="anchor length"):
        D.augment_with_anchor(x, np.zeros(4))
