import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cssl import InputError
from cssl.learners import LearnerState, per_sample_loss
from cssl.metrics import (
    ClassMetrics, Report, accuracy, aggregate, battery_report, classification_report,
    confusion_counts, contemporary_loss, fold_reports, forgetting_diagnostic,
    incremental_delta, mae, prf_per_class,
)
from cssl.protocol import PredictionLog, SealedLabels
from cssl.streamgen import count_from_density, density_map_from_points


def make_log(pred, truth, seq="s"):
    n = len(pred)
    t = np.arange(n)
    fold = np.array(["V"] * (n // 2) + ["T"] * (n - n // 2))
    lg = PredictionLog(np.full(n, seq, dtype=object), t, fold, np.zeros(n, int),
                       np.asarray(pred), np.ones(n))
    return lg, SealedLabels(seq, t, fold, np.asarray(truth))


def brute_prf(counts):
    C = len(counts)
    out = []
    for i in range(C):
        tp = counts[i][i]
        fp = sum(counts[j][i] for j in range(C)) - tp
        fn = sum(counts[i][j] for j in range(C)) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        out.append((p, r, f))
    return out


def test_contemporary_loss_basics():
    lg, tr = make_log([1, 2, 3, 4], [1, 2, 3, 4])
    assert contemporary_loss(lg, tr) == 0
    lg, tr = make_log([1, 2, 3, 0], [1, 2, 3, 4])
    assert contemporary_loss(lg, tr) == 0.25
    assert contemporary_loss(lg, tr, reduce="sum") == 1.0
    lg, tr = make_log([1.0, 2.5], [2.0, 2.0])
    assert contemporary_loss(lg, tr, "absolute") == 0.75


def test_contemporary_loss_is_one_minus_accuracy(rng):
    for _ in range(200):
        n = int(rng.integers(1, 500))
        lg, tr = make_log(rng.integers(0, 3, n), rng.integers(0, 3, n))
        acc = accuracy(lg, tr)
        assert contemporary_loss(lg, tr) + acc == 1.0
        assert contemporary_loss(lg, tr) == 1.0 - acc


def test_accuracy():
    lg, tr = make_log([0, 1, 2], [0, 1, 2])
    assert accuracy(lg, tr) == 1.0
    lg, tr = make_log([1, 2, 0], [0, 1, 2])
    assert accuracy(lg, tr) == 0.0
    rng = np.random.default_rng(0)
    p, y = rng.integers(0, 4, 333), rng.integers(0, 4, 333)
    lg, tr = make_log(p, y)
    hits = 0
    for a, b in zip(p, y):
        hits += int(a == b)
    assert accuracy(lg, tr) == hits / 333
    lg, tr = make_log([], [])
    with pytest.raises(InputError):
        accuracy(lg, tr)


def test_misaligned_log_rejected():
    lg, tr = make_log([0, 1, 2], [0, 1, 2])
    shifted = SealedLabels("s", tr.t + 1, tr.fold, tr.y)
    with pytest.raises(InputError):
        contemporary_loss(lg, shifted)
    with pytest.raises(InputError):
        accuracy(lg, SealedLabels("other", tr.t, tr.fold, tr.y))


def test_prf_examples():
    cm = prf_per_class(np.diag([5, 3, 7]))
    assert np.all(cm.precision == 1) and np.all(cm.recall == 1) and np.all(cm.f1 == 1)
    cm = prf_per_class(np.array([[4, 1, 0], [2, 3, 0], [0, 0, 0]]))
    assert cm.precision[2] == cm.recall[2] == cm.f1[2] == 0


def test_prf_matches_brute_force(rng):
    for _ in range(200):
        counts = rng.integers(0, 20, (3, 3))
        cm = prf_per_class(counts)
        for i, (p, r, f) in enumerate(brute_prf(counts.tolist())):
            assert abs(cm.precision[i] - p) < 1e-12
            assert abs(cm.recall[i] - r) < 1e-12
            assert abs(cm.f1[i] - f) < 1e-12


def test_aggregate_examples():
    cm = ClassMetrics(np.zeros(2), np.zeros(2), np.array([0.8, 0.6]), np.array([50, 50]))
    assert aggregate(cm, "f1", "macro") == pytest.approx(0.7, abs=1e-15)
    assert aggregate(cm, "f1", "weighted") == pytest.approx(0.7, abs=1e-15)
    cm.support = np.array([90, 10])
    assert aggregate(cm, "f1", "weighted") == pytest.approx(0.78, abs=1e-15)


def test_weighted_equals_replicated_mean(rng):
    for _ in range(100):
        counts = rng.integers(0, 15, (4, 4))
        cm = prf_per_class(counts)
        flat = [cm.f1[i] for i in range(4) for _ in range(cm.support[i])]
        if flat:
            assert abs(aggregate(cm, "f1", "weighted") - np.mean(flat)) < 1e-12


def test_uniform_support_makes_macro_equal_weighted(rng):
    for _ in range(50):
        counts = rng.integers(0, 6, (5, 5))
        counts[np.arange(5), np.arange(5)] = 0
        counts[np.arange(5), np.arange(5)] = 30 - counts.sum(1)
        cm = prf_per_class(counts)
        for m in ("precision", "recall", "f1"):
            assert abs(aggregate(cm, m, "macro") - aggregate(cm, m, "weighted")) < 1e-12


def test_class_filter():
    cm = prf_per_class(np.array([[3, 1, 0], [1, 3, 0], [0, 0, 0]]))
    assert aggregate(cm, "recall", "macro", "present_only") == pytest.approx(0.75)
    assert aggregate(cm, "recall", "macro", "all") == pytest.approx(0.5)
    with pytest.raises(InputError):
        aggregate(prf_per_class(np.zeros((2, 2), int)), "f1", "macro", "present_only")


def test_mae():
    assert mae([1, 2, 3], [1, 2, 3]) == 0
    assert mae([3, 5], [1, 9]) == 3.0
    with pytest.raises(InputError):
        mae([1], [1, 2])


def test_mae_of_density_counts(rng):
    preds, truth, grids = [], [], []
    for _ in range(5):
        k = int(rng.integers(0, 20))
        g = density_map_from_points(rng.uniform(0, 30, (k, 2)), 2.0, 30, 30)
        grids.append(g)
        truth.append(k)
        preds.append(k + rng.normal())
    sums = [count_from_density(g) for g in grids]
    assert abs(mae(preds, sums) - mae(preds, truth)) < 1e-6


def test_incremental_delta():
    a = Report("T", 100, "classification", accuracy=0.80)
    b = Report("T", 100, "classification", accuracy=0.77)
    assert incremental_delta(a, a).delta == 0
    assert incremental_delta(a, b).delta == pytest.approx(0.03)
    assert incremental_delta(a, b).delta == -incremental_delta(b, a).delta
    with pytest.raises(InputError):
        incremental_delta(a, Report("V", 100, "classification", accuracy=0.7))


def test_forgetting_identical_states(rng):
    s = LearnerState(rng.standard_normal((3, 2)), rng.standard_normal(3))
    x, y = rng.standard_normal((20, 2)), rng.integers(0, 3, 20)
    assert forgetting_diagnostic(s, s.clone(), x, y).rate == 0


def test_forgetting_engineered_violation():
    # regressor losses: prev (1 - 0)^2 = 1.0, new (sqrt(2) - 0)^2 = 2.0
    x, y = np.array([[1.0]]), np.array([0.0])
    prev = LearnerState(np.array([1.0]), np.asarray(0.0), "regression")
    new = LearnerState(np.array([np.sqrt(2.0)]), np.asarray(0.0), "regression")
    res = forgetting_diagnostic(new, prev, x, y)
    assert res.loss_prev[0] == pytest.approx(1.0) and res.loss_new[0] == pytest.approx(2.0)
    assert res.violations.tolist() == [True] and res.rate == 1.0


def test_forgetting_after_optimising_on_past_set(rng):
    x = rng.standard_normal((40, 3))
    y = x @ np.array([1.0, -2.0, 0.5]) + 0.2
    prev = LearnerState(rng.standard_normal(3), np.asarray(1.0), "regression")
    sol = np.linalg.lstsq(np.hstack([x, np.ones((40, 1))]), y, rcond=None)[0]
    opt = LearnerState(sol[:3], np.asarray(sol[3]), "regression")
    res = forgetting_diagnostic(opt, prev, x, y)
    np.testing.assert_allclose(res.loss_new, per_sample_loss(opt, x, y))
    assert res.rate == 0


def test_forgetting_rate_grows_with_violations(rng):
    prev = LearnerState(np.array([1.0]), np.asarray(0.0), "regression")
    new = LearnerState(np.array([2.0]), np.asarray(0.0), "regression")
    x = np.array([[1.0], [1.0]])
    y = np.array([2.0, 2.0])  # new is exact here
    r0 = forgetting_diagnostic(new, prev, x, y).rate
    x2, y2 = np.vstack([x, [[1.0]]]), np.append(y, 1.0)  # prev exact on the added one
    assert forgetting_diagnostic(new, prev, x2, y2).rate > r0


def test_forgetting_shape_mismatch():
    with pytest.raises(InputError):
        forgetting_diagnostic(LearnerState(np.zeros((2, 3)), np.zeros(2)),
                              LearnerState(np.zeros((3, 3)), np.zeros(3)), np.zeros((1, 3)), [0])


def random_report(rng, fold="T", C=4, n=200):
    y, p = rng.integers(0, C, n), rng.integers(0, C, n)
    return classification_report(confusion_counts(y, p, C), fold)


def test_battery_single_sequence(rng):
    r = random_report(rng)
    assert battery_report([r]).pooled == r
    reg = Report("T", 10, "regression", mae=1.5, abs_error_sum=15.0)
    assert battery_report([reg]).pooled.mae == 1.5


def test_battery_pooled_accuracy_is_mean_for_equal_sizes():
    a = classification_report(np.array([[6, 4], [0, 0]]), "T")
    b = classification_report(np.array([[9, 1], [0, 0]]), "T")
    assert battery_report([a, b]).pooled.accuracy == pytest.approx((0.6 + 0.9) / 2)


def test_battery_counts_sum_and_permutation(rng):
    reps = [random_report(rng) for _ in range(6)]
    total = sum(np.array(r.confusion) for r in reps)
    assert battery_report(reps).pooled.confusion == total.tolist()
    assert battery_report(reps[::-1]).pooled == battery_report(reps).pooled


def test_fold_reports(rng):
    n = 100
    lg, tr = make_log(rng.integers(0, 3, n), rng.integers(0, 3, n))
    reps = fold_reports(lg, tr, "classification", 3)
    assert set(reps) == {"V", "T"}
    assert reps["V"].n + reps["T"].n == n
    assert reps["V"].accuracy == accuracy(lg.select("V"), tr.select("V"))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=80))
def test_metric_ranges(pairs):
    y, p = np.array(pairs).T
    r = classification_report(confusion_counts(y, p, 5), "T")
    for key in ("accuracy", "precision_macro", "precision_weighted", "recall_macro",
                "recall_weighted", "f1_macro", "f1_weighted"):
        assert 0.0 <= r.get(key) <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_mae_properties(xs):
    assert mae(xs, xs) == 0
    assert mae(xs, [0.0] * len(xs)) >= 0
