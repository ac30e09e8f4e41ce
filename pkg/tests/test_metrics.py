import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbogodec.metrics import AucReport, auc_report, evaluate, format_table, roc_3d, support_f1


def _brute_curve(scores, mask, taus):
    pd, pf = [], []
    a = scores[mask.astype(bool)]
    b = scores[~mask.astype(bool)]
    for t in taus:
        pd.append(sum(1 for v in a if v >= t) / len(a))
        pf.append(sum(1 for v in b if v >= t) / len(b))
    return np.array(pd), np.array(pf)


def test_four_pixel_hand_case():
    scores = np.array([[0.9, 0.7], [0.6, 0.1]])
    mask = np.array([[1, 1], [0, 0]])
    curve = roc_3d(scores, mask, 101)
    assert set(np.linspace(0, 1, 101)) <= set(curve.taus)
    pd, pf = _brute_curve(scores.ravel(), mask.ravel(), curve.taus)
    np.testing.assert_array_equal(curve.pd, pd)
    np.testing.assert_array_equal(curve.pf, pf)
    # both anomalies outrank both background pixels
    assert auc_report(curve).auc_df == 1.0


def test_random_curve_matches_counting(rng):
    scores = rng.random((6, 7))
    mask = (rng.random((6, 7)) < 0.3).astype(int)
    mask[0, 0], mask[0, 1] = 1, 0
    curve = roc_3d(scores, mask, 51)
    pd, pf = _brute_curve(scores.ravel(), mask.ravel(), curve.taus)
    np.testing.assert_array_equal(curve.pd, pd)
    np.testing.assert_array_equal(curve.pf, pf)


def test_perfect_detector():
    mask = np.zeros((4, 4), dtype=int)
    mask[1:3, 1:3] = 1
    curve = roc_3d(mask.astype(float), mask)
    i = np.searchsorted(curve.taus, 0.5)
    assert curve.pd[i] == 1.0 and curve.pf[i] == 0.0
    assert auc_report(curve).auc_df == pytest.approx(1.0, abs=1e-12)


def test_constant_detector_is_class_blind():
    mask = np.zeros((5, 5), dtype=int)
    mask[0] = 1
    curve = roc_3d(np.full((5, 5), 0.5), mask)
    np.testing.assert_array_equal(curve.pd, curve.pf)
    assert auc_report(curve).auc_df == pytest.approx(0.5, abs=1e-12)


def test_inverted_detector():
    mask = np.zeros((3, 3), dtype=int)
    mask[0, 0] = 1
    assert evaluate(1.0 - mask, mask).auc_df == pytest.approx(0.0, abs=1e-12)


def test_closed_threshold_counts_ties():
    scores = np.array([[0.5, 0.5], [0.5, 0.0]])
    mask = np.array([[1, 0], [0, 0]])
    curve = roc_3d(scores, mask, 3)
    i = list(curve.taus).index(0.5)
    assert curve.pd[i] == 1.0 and curve.pf[i] == pytest.approx(2 / 3)


def test_input_validation():
    mask = np.array([[1, 0], [0, 0]])
    with pytest.raises(ValueError):
        roc_3d(np.ones((2, 2)) * 2, mask)
    with pytest.raises(ValueError):
        roc_3d(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        roc_3d(np.zeros((2, 3)), mask)
    with pytest.raises(ValueError):
        roc_3d(np.zeros((2, 2)), mask, 1)


def test_composite_identities_exact(rng):
    for _ in range(20):
        scores = rng.random((8, 8))
        mask = (rng.random((8, 8)) < 0.2).astype(int)
        mask[0, 0], mask[0, 1] = 1, 0
        r = evaluate(scores, mask, 201)
        assert r.auc_td == r.auc_df + r.auc_dtau
        assert r.auc_bs == r.auc_df - r.auc_ftau
        assert r.auc_td_bs == r.auc_dtau - r.auc_ftau
        assert r.auc_odp == r.auc_df + r.auc_dtau - r.auc_ftau
        assert r.auc_snpr == r.auc_dtau / r.auc_ftau
        for v in (r.auc_df, r.auc_dtau, r.auc_ftau):
            assert 0.0 <= v <= 1.0


def test_snpr_sentinel():
    assert AucReport.from_base(1.0, 0.4, 0.0).auc_snpr == math.inf


def test_worked_example_row():
    r = AucReport.from_base(0.9934, 0.3875, 0.0145)
    assert r.auc_td == pytest.approx(1.3809, abs=1e-12)
    assert r.auc_bs == pytest.approx(0.9789, abs=1e-12)
    assert r.auc_td_bs == pytest.approx(0.3730, abs=1e-12)
    assert r.auc_odp == pytest.approx(1.3664, abs=1e-12)
    assert r.auc_snpr == pytest.approx(26.7241, abs=1e-4)


def test_published_rows_consistent_within_rounding(data_dir):
    """Printed SNPR must lie in the range the 4-decimal inputs allow."""
    with open(data_dir / "published_auc.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 33
    h = 5e-5
    for row in rows:
        dtau, ftau = float(row["auc_dtau"]), float(row["auc_ftau"])
        lo, hi = (dtau - h) / (ftau + h), (dtau + h) / (ftau - h)
        assert lo - 1e-4 <= float(row["auc_snpr"]) <= hi + 1e-4, row["method"]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auc_df_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    scores = rng.random((6, 6))
    mask = np.zeros((6, 6), dtype=int)
    mask.flat[rng.choice(36, 5, replace=False)] = 1
    base = evaluate(scores, mask, 101).auc_df
    g = rng.uniform(0.2, 5.0)
    t = scores ** g + rng.uniform(0, 3) * np.arctan(scores)
    t = (t - t.min()) / (t.max() - t.min())
    assert evaluate(t, mask, 101).auc_df == base


def test_format_table_and_csv():
    r = AucReport.from_base(0.9, 0.3, 0.1)
    text = format_table({"turbo": r, "grx": r})
    lines = text.splitlines()
    assert lines[0].split()[:3] == ["Method", "AUC(D,F)", "AUC(D,tau)"]
    assert lines[1].startswith("turbo")
    assert len({len(ln) for ln in lines}) == 1
    assert AucReport.csv_header().split(",")[0] == "auc_df"
    assert [float(v) for v in r.csv_row().split(",")] == list(r.values())


def test_support_f1():
    truth = np.array([1, 1, 0, 0])
    assert support_f1(truth, truth) == 1.0
    assert support_f1([0, 0, 1, 1], truth) == 0.0
    assert support_f1([1, 0, 1, 0], truth) == pytest.approx(0.5)
