import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momrev import metrics
from momrev.errors import DataError
from util import rng

# independent brute-force oracles


def oracle_counts(pred, gt):
    a = {tuple(c) for c in np.argwhere(np.asarray(pred, dtype=bool))}
    b = {tuple(c) for c in np.argwhere(np.asarray(gt, dtype=bool))}
    return a, b


def oracle_ratio(pred, gt):
    a, b = oracle_counts(pred, gt)
    if not a and not b:
        return (1.0,) * 5
    tp, fp, fn = len(a & b), len(a - b), len(b - a)
    dsc = 2 * tp / (2 * tp + fp + fn)
    iou = tp / (tp + fp + fn)
    rec = tp / (tp + fn) if tp + fn else 0.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    f2 = 5 * prec * rec / (4 * prec + rec) if 4 * prec + rec else 0.0
    return dsc, iou, rec, prec, f2


def oracle_boundary(mask):
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    pts = []
    for i in range(h):
        for j in range(w):
            if not m[i, j]:
                continue
            if (i in (0, h - 1) or j in (0, w - 1)
                    or not (m[i - 1, j] and m[i + 1, j] and m[i, j - 1] and m[i, j + 1])):
                pts.append((i, j))
    return pts


def oracle_hausdorff(pred, gt, variant):
    a, b = oracle_boundary(pred), oracle_boundary(gt)
    if not a and not b:
        return 0.0
    if not a or not b:
        return math.inf
    d = [min(math.dist(p, q) for q in b) for p in a]
    d += [min(math.dist(q, p) for p in a) for q in b]
    return max(d) if variant == "max" else float(np.percentile(d, 95, method="linear"))


def random_mask(r, hw=8):
    return (r.uniform(size=(hw, hw)) < r.uniform(0.05, 0.7)).astype(np.uint8)


# binarize


def test_binarize_tie_goes_foreground():
    assert metrics.binarize(np.array([0.0]))[0] == 1


def test_binarize_negative():
    assert metrics.binarize(np.array([-3.0]))[0] == 0


def test_binarize_zero_threshold_all_ones():
    assert metrics.binarize(rng(1).normal(size=(4, 4)), threshold=0.0).all()


# ratio metrics


def test_perfect_match():
    m = np.array([[1, 1], [0, 1]], dtype=np.uint8)
    assert metrics.dice_iou_prf(m, m) == (1.0, 1.0, 1.0, 1.0, 1.0)


def test_half_overlap_counts():
    pred = np.array([1, 1, 0, 0], dtype=np.uint8).reshape(2, 2)
    gt = np.array([1, 0, 1, 0], dtype=np.uint8).reshape(2, 2)
    dsc, iou, rec, prec, f2 = metrics.dice_iou_prf(pred, gt)
    assert (dsc, rec, prec, f2) == (0.5, 0.5, 0.5, 0.5)
    assert iou == pytest.approx(1 / 3)


def test_empty_conventions():
    empty = np.zeros((3, 3), dtype=np.uint8)
    full = np.ones((3, 3), dtype=np.uint8)
    assert metrics.dice_iou_prf(empty, empty) == (1.0,) * 5
    assert metrics.dice_iou_prf(empty, full) == (0.0,) * 5
    assert metrics.dice_iou_prf(full, empty) == (0.0,) * 5


@pytest.mark.parametrize("seed", range(30))
def test_ratio_metrics_match_bruteforce(seed):
    r = rng(seed)
    pred, gt = random_mask(r), random_mask(r)
    assert metrics.dice_iou_prf(pred, gt) == oracle_ratio(pred, gt)


@given(st.integers(0, 100_000))
@settings(max_examples=50, deadline=None)
def test_dsc_iou_identity_and_duality(seed):
    r = rng(seed)
    pred, gt = random_mask(r), random_mask(r)
    dsc, iou, rec, prec, _ = metrics.dice_iou_prf(pred, gt)
    assert abs(dsc - 2 * iou / (1 + iou)) <= 1e-12
    assert iou <= dsc + 1e-15
    sw = metrics.dice_iou_prf(gt, pred)
    assert sw[0] == dsc and sw[1] == iou
    assert sw[2] == prec and sw[3] == rec  # recall/precision duality


@given(st.integers(0, 100_000))
@settings(max_examples=30, deadline=None)
def test_ratio_metrics_permutation_invariant(seed):
    r = rng(seed)
    pred, gt = random_mask(r), random_mask(r)
    perm = r.permutation(pred.size)
    pp = pred.ravel()[perm].reshape(pred.shape)
    gp = gt.ravel()[perm].reshape(gt.shape)
    assert metrics.dice_iou_prf(pp, gp) == metrics.dice_iou_prf(pred, gt)


# Hausdorff


def test_hausdorff_identical_masks():
    m = random_mask(rng(5))
    assert metrics.hausdorff(m, m) == 0.0


def test_hausdorff_3_4_5():
    a = np.zeros((6, 6), dtype=np.uint8)
    b = np.zeros((6, 6), dtype=np.uint8)
    a[0, 0] = 1
    b[3, 4] = 1
    assert metrics.hausdorff(a, b) == pytest.approx(5.0)


def test_hausdorff_empty_conventions():
    empty = np.zeros((4, 4), dtype=np.uint8)
    full = np.ones((4, 4), dtype=np.uint8)
    assert metrics.hausdorff(empty, empty) == 0.0
    assert math.isinf(metrics.hausdorff(empty, full))


@pytest.mark.parametrize("seed", range(30))
def test_hausdorff_matches_bruteforce(seed):
    r = rng(1000 + seed)
    pred, gt = random_mask(r), random_mask(r)
    for variant in ("max", "hd95"):
        got = metrics.hausdorff(pred, gt, variant)
        want = oracle_hausdorff(pred, gt, variant)
        if math.isinf(want):
            assert math.isinf(got)
        else:
            assert got == pytest.approx(want, abs=1e-12)


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_hausdorff_symmetry_and_hd95_bound(seed):
    r = rng(seed)
    pred, gt = random_mask(r), random_mask(r)
    hmax = metrics.hausdorff(pred, gt, "max")
    assert hmax == metrics.hausdorff(gt, pred, "max")
    h95 = metrics.hausdorff(pred, gt, "hd95")
    if math.isfinite(hmax):
        assert h95 <= hmax + 1e-12


# accuracy / MCC


def oracle_mcc(confusion):
    c = np.asarray(confusion, dtype=np.int64)
    k = c.shape[0]
    t_rows, p_rows = [], []
    for i in range(k):
        for j in range(k):
            for _ in range(int(c[i, j])):
                t = np.zeros(k)
                p = np.zeros(k)
                t[i] = p[j] = 1.0
                t_rows.append(t)
                p_rows.append(p)
    t = np.array(t_rows) - np.mean(t_rows, axis=0)
    p = np.array(p_rows) - np.mean(p_rows, axis=0)
    den = math.sqrt((t * t).sum()) * math.sqrt((p * p).sum())
    return 0.0 if den == 0 else float((t * p).sum() / den)


def test_diagonal_confusion_perfect():
    acc, mcc = metrics.accuracy_mcc(np.diag([3, 5, 2]))
    assert acc == 1.0 and mcc == pytest.approx(1.0)


def test_symmetric_binary_confusion_zero_mcc():
    acc, mcc = metrics.accuracy_mcc(np.array([[1, 1], [1, 1]]))
    assert acc == 0.5 and mcc == 0.0


def test_empty_confusion_raises():
    with pytest.raises(DataError):
        metrics.accuracy_mcc(np.zeros((3, 3)))


@pytest.mark.parametrize("seed", range(30))
def test_mcc_matches_covariance_oracle(seed):
    conf = rng(2000 + seed).integers(0, 25, size=(4, 4))
    if conf.sum() == 0:
        conf[0, 0] = 1
    _, mcc = metrics.accuracy_mcc(conf)
    assert abs(mcc - oracle_mcc(conf)) <= 1e-12


@given(st.integers(0, 100_000))
@settings(max_examples=30, deadline=None)
def test_mcc_invariant_under_class_relabeling(seed):
    r = rng(seed)
    conf = r.integers(0, 15, size=(4, 4))
    if conf.sum() == 0:
        conf[1, 2] = 3
    perm = r.permutation(4)
    _, mcc1 = metrics.accuracy_mcc(conf)
    _, mcc2 = metrics.accuracy_mcc(conf[np.ix_(perm, perm)])
    assert mcc1 == pytest.approx(mcc2, abs=1e-12)


def test_confusion_multiclass_counts():
    m = metrics.confusion_multiclass(np.array([0, 1, 1, 2]), np.array([0, 1, 2, 2]), 3)
    assert m.sum() == 4 and m[1, 2] == 1 and np.trace(m) == 3


# reports


def test_report_column_order_matches_tables():
    assert metrics.SEG_COLUMNS == ["mDSC", "mIoU", "Rec.", "Prec.", "F2", "HD"]
    report = metrics.evaluate_masks([np.ones((2, 2), dtype=np.uint8)],
                                    [np.ones((2, 2), dtype=np.uint8)])
    csv_text = metrics.render_csv(metrics.SEG_COLUMNS, [("mean", report.means)])
    assert csv_text.splitlines()[0] == "name,mDSC,mIoU,Rec.,Prec.,F2,HD"


def test_ground_truth_as_prediction_is_perfect():
    gts = [random_mask(rng(7)), random_mask(rng(8))]
    report = metrics.evaluate_masks(gts, gts)
    means = report.means
    assert means[:5] == [1.0] * 5
    assert means[5] == 0.0
