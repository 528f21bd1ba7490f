import numpy as np
import pytest

from cssl import ConfigError, InputError, learners
from cssl.learners import LearnerState, TrainConfig
from cssl.protocol import (
    MODES, PredictionLog, SelfTrainConfig, Subfold, frozen_predictions, partition_subfolds,
    pseudo_label, pseudo_target, run_continual, run_mode, self_train_session, split_folds,
    strip_sealed, union_supervised, unlabelled_stream,
)
from conftest import small_classification


def stream_of(n, d=2):
    x = np.arange(n * d, dtype=float).reshape(n, d)
    return Subfold(0, x, np.arange(n), np.array(["V"] * n), "s")


@pytest.mark.parametrize("n,sizes", [
    (22500, (7500, 7500, 7500)),
    (2000, (400, 800, 800)),
    (750, (150, 300, 300)),
])
def test_split_sizes(n, sizes):
    seq = small_classification(sizes=sizes)
    assert len(seq) == n
    sp = split_folds(seq, sizes)
    assert (len(sp.S), len(sp.V), len(sp.T)) == sizes
    assert sp.S.t[0] == 0 and sp.V.t[0] == sizes[0] and sp.T.t[-1] == n - 1
    assert sp.V.y is None and sp.T.y is None and sp.S.y is not None
    np.testing.assert_array_equal(sp.sealed.y, seq.y[sizes[0]:])
    np.testing.assert_array_equal(np.concatenate([sp.S.x, sp.V.x, sp.T.x]), seq.x)


def test_split_size_mismatch():
    with pytest.raises(ConfigError):
        split_folds(small_classification(), (300, 300, 299))


@pytest.mark.parametrize("n,size,expected", [(15000, 1500, 10), (1600, 100, 16), (600, 100, 6)])
def test_subfold_counts(n, size, expected):
    subs = partition_subfolds(stream_of(n), size)
    assert len(subs) == expected
    assert [s.index for s in subs] == list(range(expected))


def test_subfolds_reassemble_stream():
    st = stream_of(1050)
    subs = partition_subfolds(st, 100)
    assert len(subs[-1]) == 50
    np.testing.assert_array_equal(np.concatenate([s.x for s in subs]), st.x)
    np.testing.assert_array_equal(np.concatenate([s.t for s in subs]), st.t)
    assert partition_subfolds(stream_of(0), 10) == []
    with pytest.raises(ConfigError):
        partition_subfolds(st, 0)


def state_with_probs(probs):
    probs = np.asarray(probs)
    return LearnerState(np.zeros((len(probs), 2)), np.log(probs))


def test_pseudo_label_selection():
    sf = stream_of(3)
    b = pseudo_label(state_with_probs([0.5, 0.3, 0.2]), sf, 0.4)
    assert b.labels.tolist() == [0, 0, 0]
    np.testing.assert_allclose(b.confidence, 0.5)
    assert b.selected.all()
    b = pseudo_label(state_with_probs([0.35, 0.33, 0.32]), sf, 0.4)
    assert not b.selected.any() and len(b.labels) == 3
    b = pseudo_label(LearnerState(np.random.default_rng(0).standard_normal((3, 2)), np.zeros(3)), sf, 0.0)
    assert b.selected.all()


def test_threshold_is_strict():
    b = pseudo_label(state_with_probs([0.5, 0.5]), stream_of(2), 0.5)
    assert not b.selected.any()


def test_pseudo_label_kind_checks(reg_warm, cls_warm):
    with pytest.raises(InputError):
        pseudo_label(reg_warm, stream_of(2, 4), 0.4)
    with pytest.raises(InputError):
        pseudo_target(cls_warm, stream_of(2, 5))


def test_pseudo_target():
    s = LearnerState(np.zeros(2), np.asarray(3.0), "regression")
    b = pseudo_target(s, stream_of(7))
    assert b.labels.tolist() == [3.0] * 7 and b.n_selected == 7
    rng = np.random.default_rng(0)
    s = LearnerState(rng.standard_normal(2), np.asarray(0.7), "regression")
    sf = stream_of(9)
    np.testing.assert_allclose(pseudo_target(s, sf).labels, learners.predict(s, sf.x), rtol=0, atol=1e-12)


def test_selected_records_are_consistent(cls_split, cls_warm):
    sf = partition_subfolds(unlabelled_stream(cls_split), 100)[3]
    b = pseudo_label(cls_warm, sf, 0.4)
    probs = learners.predict_proba(cls_warm, sf.x)
    assert np.all(b.confidence[b.selected] > 0.4)
    np.testing.assert_array_equal(b.labels, probs.argmax(1))


def test_session_with_nothing_selected(cls_split, cls_warm):
    sf = partition_subfolds(unlabelled_stream(cls_split), 100)[0]
    new, log, rec = self_train_session(cls_warm, sf, SelfTrainConfig(threshold=1.0))
    assert new.equals(cls_warm) and rec.n_selected == 0
    assert len(log) == len(sf)


def test_session_with_zero_learning_rate(cls_split, cls_warm):
    sf = partition_subfolds(unlabelled_stream(cls_split), 100)[0]
    new, log, rec = self_train_session(cls_warm, sf, SelfTrainConfig(learning_rate=0.0))
    assert new.equals(cls_warm) and rec.n_selected > 0
    np.testing.assert_array_equal(log.prediction, learners.predict(cls_warm, sf.x))


def test_session_equals_manual_composition(cls_split, cls_warm):
    sf = partition_subfolds(unlabelled_stream(cls_split), 100)[2]
    cfg = SelfTrainConfig(learning_rate=0.05, seed=4)
    new, log, _ = self_train_session(cls_warm, sf, cfg)
    b = pseudo_label(cls_warm, sf, cfg.threshold)
    manual = learners.fit(cls_warm, b.x[b.selected], b.labels[b.selected], cfg.train_config(sf.index))
    assert new.equals(manual)
    assert not new.equals(cls_warm)
    np.testing.assert_array_equal(log.prediction, learners.predict(manual, sf.x))
    assert set(log.session.tolist()) == {sf.index}


def test_pre_update_uses_incoming_model(cls_split, cls_warm):
    sf = partition_subfolds(unlabelled_stream(cls_split), 100)[2]
    new, log, _ = self_train_session(cls_warm, sf, SelfTrainConfig(eval_mode="pre_update",
                                                                   learning_rate=0.05))
    np.testing.assert_array_equal(log.prediction, learners.predict(cls_warm, sf.x))
    assert set(log.session.tolist()) == {sf.index - 1}
    assert not new.equals(cls_warm)


def test_run_continual_edge_cases(cls_split, cls_warm):
    res = run_continual(cls_warm, [], SelfTrainConfig())
    assert res.final.equals(cls_warm) and len(res.log) == 0
    subs = partition_subfolds(unlabelled_stream(cls_split), 60)
    assert len(subs) == 10
    res = run_continual(cls_warm, subs, SelfTrainConfig(threshold=1.0))
    assert res.final.equals(cls_warm)


def test_run_continual_structure(cls_split, cls_warm):
    subs = partition_subfolds(unlabelled_stream(cls_split), 200)[:3]
    res = run_continual(cls_warm, subs, SelfTrainConfig(learning_rate=0.05), keep_states=True)
    assert len(res.log) == sum(len(s) for s in subs)
    assert np.all(np.diff(res.log.session) >= 0)
    assert np.all(np.diff(res.log.t) == 1)
    assert [r.n_selected for r in res.sessions] == [
        pseudo_label(st, s, 0.4).n_selected
        for st, s in zip([cls_warm] + [r.state for r in res.sessions[:-1]], subs)]
    assert res.sessions[-1].state.equals(res.final)


def test_chaining_is_split_invariant(cls_split, cls_warm):
    subs = partition_subfolds(unlabelled_stream(cls_split), 100)
    cfg = SelfTrainConfig(learning_rate=0.05, seed=7)
    whole = run_continual(cls_warm, subs, cfg)
    first = run_continual(cls_warm, subs[:4], cfg)
    second = run_continual(first.final, subs[4:], cfg)
    assert whole.final.equals(second.final)
    both = PredictionLog.concat([first.log, second.log])
    for col in PredictionLog.COLUMNS:
        np.testing.assert_array_equal(getattr(whole.log, col), getattr(both, col))


def test_subfolds_out_of_order_rejected(cls_split, cls_warm):
    subs = partition_subfolds(unlabelled_stream(cls_split), 100)
    with pytest.raises(InputError):
        run_continual(cls_warm, [subs[1], subs[0]], SelfTrainConfig())


def test_hidden_labels_never_reach_training(cls_split, cls_warm):
    cfg = SelfTrainConfig(learning_rate=0.05)
    blind = strip_sealed(cls_split)
    assert not np.array_equal(blind.sealed.y, cls_split.sealed.y)
    for mode in MODES:
        a = run_mode(cls_split, cls_warm, mode, cfg, 100)
        b = run_mode(blind, cls_warm, mode, cfg, 100)
        assert a.final.equals(b.final)
        np.testing.assert_array_equal(a.log.prediction, b.log.prediction)


def test_log_completeness_and_fold_tags(cls_split, cls_warm):
    for mode in MODES:
        lg = run_mode(cls_split, cls_warm, mode, SelfTrainConfig(learning_rate=0.05), 100).log
        assert len(lg) == len(cls_split.sealed)
        np.testing.assert_array_equal(lg.t, cls_split.sealed.t)
        np.testing.assert_array_equal(lg.fold, cls_split.sealed.fold)


def test_sup_ft_with_perfect_model():
    # one-hot features make a perfect classifier easy to write down
    C = 3
    y = np.tile(np.arange(C), 30)
    x = np.eye(C)[y]
    from cssl.streamgen import Sequence
    sp = split_folds(Sequence(x, y, "classification", C, "p"), (30, 30, 30))
    perfect = LearnerState(10 * np.eye(C), np.zeros(C))
    lg = run_mode(sp, perfect, "sup-ft", SelfTrainConfig(), 10).log
    assert np.all(lg.prediction == sp.sealed.y)


@pytest.mark.parametrize("cfg", [SelfTrainConfig(threshold=1.0), SelfTrainConfig(learning_rate=0.0)])
def test_degenerate_updates_match_sup_ft(cls_split, cls_warm, cfg):
    ref = run_mode(cls_split, cls_warm, "sup-ft", cfg, 100).log
    for mode in ("upd-V", "upd-T", "upd-V+T"):
        lg = run_mode(cls_split, cls_warm, mode, cfg, 100).log
        np.testing.assert_array_equal(lg.prediction, ref.prediction)
        np.testing.assert_array_equal(lg.confidence, ref.confidence)


def test_upd_v_freezes_post_v_state_on_t(cls_split, cls_warm):
    cfg = SelfTrainConfig(learning_rate=0.05)
    res = run_mode(cls_split, cls_warm, "upd-V", cfg, 100)
    again = run_continual(cls_warm, partition_subfolds(unlabelled_stream(cls_split, ("V",)), 100), cfg)
    assert again.final.equals(res.final)
    frozen = frozen_predictions(again.final, unlabelled_stream(cls_split, ("T",)))
    t_log = res.log.select("T")
    np.testing.assert_array_equal(t_log.prediction, frozen.prediction)
    np.testing.assert_array_equal(t_log.confidence, frozen.confidence)


def test_upd_t_keeps_warm_model_on_v(cls_split, cls_warm):
    res = run_mode(cls_split, cls_warm, "upd-T", SelfTrainConfig(learning_rate=0.05), 100)
    v = frozen_predictions(cls_warm, unlabelled_stream(cls_split, ("V",)))
    np.testing.assert_array_equal(res.log.select("V").prediction, v.prediction)
    assert res.subfold_sizes == [100, 100, 100]


def test_mode_runs_are_independent(cls_split, cls_warm):
    cfg = SelfTrainConfig(learning_rate=0.05)
    a1 = run_mode(cls_split, cls_warm, "upd-V", cfg, 100)
    b1 = run_mode(cls_split, cls_warm, "upd-T", cfg, 100)
    b2 = run_mode(cls_split, cls_warm, "upd-T", cfg, 100)
    a2 = run_mode(cls_split, cls_warm, "upd-V", cfg, 100)
    assert a1.final.equals(a2.final) and b1.final.equals(b2.final)


def test_unknown_mode(cls_split, cls_warm):
    with pytest.raises(ConfigError):
        run_mode(cls_split, cls_warm, "upd-X", SelfTrainConfig(), 100)


def test_regression_modes(reg_split, reg_warm):
    cfg = SelfTrainConfig(epochs_per_session=5, learning_rate=0.001)
    for mode in MODES:
        res = run_mode(reg_split, reg_warm, mode, cfg, 100)
        assert len(res.log) == 400
        assert np.all(res.log.confidence == 1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        SelfTrainConfig(threshold=1.5)
    with pytest.raises(ConfigError):
        SelfTrainConfig(eval_mode="whenever")


def test_union_supervised(cls_split):
    x, y = union_supervised([cls_split, cls_split])
    assert len(x) == 2 * len(cls_split.S) and len(y) == len(x)


def test_prediction_log_csv_round_trip(tmp_path, cls_split, cls_warm):
    lg = run_mode(cls_split, cls_warm, "upd-V+T", SelfTrainConfig(learning_rate=0.05), 100).log
    lg.to_csv(tmp_path / "p.csv")
    header = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert header == "sequence_id,t,fold,session,prediction,confidence"
    back = PredictionLog.from_csv(tmp_path / "p.csv")
    for col in PredictionLog.COLUMNS:
        np.testing.assert_array_equal(getattr(back, col), getattr(lg, col))
