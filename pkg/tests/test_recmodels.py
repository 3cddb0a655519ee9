import numpy as np
import pytest

from conftest import browse_session, make_session, make_task
from crossrec.dataio import UserProfile, binarize_session
from crossrec.encoders import task_input
from crossrec.numcore.train import TrainConfig
from crossrec.recmodels import (
    AUTO_PRESET,
    Example,
    HEAD_KINDS,
    PRESETS,
    _init_model,
    _target_vector,
    build_examples,
    extract_attention,
    forward_attention,
    forward_bce,
    forward_weibull,
    load_model,
    loss_bce,
    loss_censored_weibull,
    model_input,
    predict_steps,
    preset_config,
    recommend,
    save_model,
    train_model,
    weibull_score,
)

HEADS = list(HEAD_KINDS)


def tiny_model(catalog, vocab, head, hybrid=False, hidden=3, seed=0, input_dim=None):
    cfg = TrainConfig(hidden_units=hidden, dropout_rate=0.0, seed=seed)
    return _init_model("encode", head, hybrid, input_dim or vocab.width, cfg,
                       catalog, vocab, demo_dim=7)


def random_example(model, t_len, rng, with_labels=False, with_demo=False):
    k = model.n_items
    x = rng.normal(size=(t_len, model.input_dim))
    target = (rng.random(k) < 0.3).astype(float)
    target[rng.integers(k)] = 1.0
    y = u = demo = None
    if with_labels:
        y = rng.integers(0, 6, size=(t_len, k)).astype(float)
        y[0, 0] = 0.0  # exercise the pmf's y == 0 branch
        u = (rng.random((t_len, k)) < 0.5).astype(float)
    if with_demo:
        demo = rng.normal(size=7)
    return Example(x=x, target=target, task=None, y=y, u=u, demo=demo)


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x, dtype=float)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        hi = f()
        x[i] = old - eps
        lo = f()
        x[i] = old
        g[i] = (hi - lo) / (2 * eps)
        it.iternext()
    return g


class TestGradients:
    @pytest.mark.parametrize("head", HEADS)
    @pytest.mark.parametrize("hybrid", [False, True])
    def test_batch_loss_matches_central_differences(self, catalog, vocab, head, hybrid):
        model = tiny_model(catalog, vocab, head, hybrid=hybrid)
        rng = np.random.default_rng(1)
        batch = [
            random_example(model, 2, rng, with_labels=head == "weibull", with_demo=hybrid),
            random_example(model, 3, rng, with_labels=head == "weibull", with_demo=hybrid),
        ]
        dummy = np.random.default_rng(0)
        loss = model.batch_loss(batch, dummy, training=False)
        loss.backward()
        checked = 0
        for name, p in model.params.items():
            if not p.requires_grad:
                continue
            ref = numeric_grad(
                lambda: model.batch_loss(batch, dummy, training=False).data.item(), p.data
            )
            denom = max(np.abs(ref).max(), np.abs(p.grad).max(), 1e-8)
            rel = np.abs(p.grad - ref).max() / denom
            assert rel < 1e-4, f"{name}: rel err {rel:.2e}"
            checked += 1
        assert checked >= 11


class TestForwardParity:
    """The training graph and the numpy inference path agree."""

    def test_bce_single_example(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "bce", hidden=4)
        rng = np.random.default_rng(2)
        ex = random_example(model, 3, rng)
        graph = model.batch_loss([ex], rng, training=False).data.item()
        plain = loss_bce(forward_bce(model, ex.x), ex.target)
        assert graph == pytest.approx(plain, rel=1e-12)

    def test_weibull_single_example(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "weibull", hidden=4)
        rng = np.random.default_rng(3)
        ex = random_example(model, 3, rng, with_labels=True)
        graph = model.batch_loss([ex], rng, training=False).data.item()
        alpha, beta = forward_weibull(model, ex.x)
        plain = np.mean([
            loss_censored_weibull(alpha[t], beta[t], ex.y[t], ex.u[t]) for t in range(3)
        ])
        assert graph == pytest.approx(plain, rel=1e-9)

    def test_attention_single_example(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "attention", hidden=4)
        rng = np.random.default_rng(4)
        ex = random_example(model, 4, rng)
        graph = model.batch_loss([ex], rng, training=False).data.item()
        probs, lam = forward_attention(model, ex.x)
        assert lam.sum() == pytest.approx(1.0, abs=1e-12)
        assert graph == pytest.approx(loss_bce(probs, ex.target), rel=1e-12)

    def test_hybrid_merge_changes_with_profile(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "bce", hybrid=True, hidden=4)
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, vocab.width))
        p1 = forward_bce(model, x, rng.normal(size=7))
        p2 = forward_bce(model, x, rng.normal(size=7) + 5.0)
        assert not np.allclose(p1, p2)

    def test_batching_is_mean_of_singles(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "bce", hidden=4)
        rng = np.random.default_rng(6)
        exs = [random_example(model, t, rng) for t in (2, 3, 3)]
        whole = model.batch_loss(exs, rng, training=False).data.item()
        singles = [model.batch_loss([e], rng, training=False).data.item() for e in exs]
        assert whole == pytest.approx(np.mean(singles), rel=1e-12)


class TestScoring:
    def car_task(self, n_sessions=3):
        sessions = [browse_session("u", f"s{i}", i * 1000, "car") for i in range(n_sessions)]
        return make_task("u", sessions, n_sessions * 1000, ["car"])

    def test_recommend_bce_matches_forward(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "bce", hidden=4)
        task = self.car_task()
        inp = model_input(model, task)
        np.testing.assert_allclose(recommend(model, task), forward_bce(model, inp.matrix))

    def test_recommend_weibull_uses_last_step_median(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "weibull", hidden=4)
        task = self.car_task()
        inp = model_input(model, task)
        alpha, beta = forward_weibull(model, inp.matrix)
        np.testing.assert_allclose(recommend(model, task), weibull_score(alpha[-1], beta[-1]))
        assert np.all(recommend(model, task) < 0)

    def test_hybrid_requires_profile(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "bce", hybrid=True, hidden=4)
        with pytest.raises(ValueError):
            recommend(model, self.car_task())

    def test_predict_steps_prefix_equivalence(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "bce", hidden=4)
        task = self.car_task(3)
        inp = model_input(model, task)
        steps = predict_steps(model, task)
        assert steps.shape == (3, len(catalog.items))
        for i in range(3):
            np.testing.assert_allclose(steps[i], forward_bce(model, inp.matrix[: i + 1]))

    def test_predict_steps_concat_uses_session_boundaries(self, catalog, vocab):
        cfg = TrainConfig(hidden_units=4, dropout_rate=0.0, seed=0)
        model = _init_model("concat", "bce", False, vocab.width, cfg, catalog, vocab)
        task = self.car_task(2)  # sessions of 4 actions each
        inp = model_input(model, task)
        steps = predict_steps(model, task)
        np.testing.assert_allclose(steps[0], forward_bce(model, inp.matrix[:4]))
        np.testing.assert_allclose(steps[1], forward_bce(model, inp.matrix[:8]))

    def test_predict_steps_weibull_rows_are_step_outputs(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "weibull", hidden=4)
        task = self.car_task(3)
        inp = model_input(model, task)
        alpha, beta = forward_weibull(model, inp.matrix)
        steps = predict_steps(model, task)
        for t in range(3):
            np.testing.assert_allclose(steps[t], weibull_score(alpha[t], beta[t]))


class TestAttentionExtraction:
    def tasks(self, counts):
        out = []
        for j, n in enumerate(counts):
            sessions = [browse_session(f"u{j}", f"s{i}", i * 1000, "car") for i in range(n)]
            out.append(make_task(f"u{j}", sessions, n * 1000, ["car"]))
        return out

    def test_rows_sum_to_one_grouped_by_count(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "attention", hidden=4)
        table = extract_attention(model, self.tasks([2, 3, 3, 5]))
        assert set(table) == {2, 3, 5}
        for n, row in table.items():
            assert row.shape == (n,)
            assert row.sum() == pytest.approx(1.0, abs=1e-6)

    def test_concat_weights_pool_per_session(self, catalog, vocab):
        cfg = TrainConfig(hidden_units=4, dropout_rate=0.0, seed=0)
        model = _init_model("concat", "attention", False, vocab.width, cfg, catalog, vocab)
        table = extract_attention(model, self.tasks([3]))
        assert table[3].shape == (3,)
        assert table[3].sum() == pytest.approx(1.0, abs=1e-6)

    def test_requires_attention_head(self, catalog, vocab):
        model = tiny_model(catalog, vocab, "bce", hidden=4)
        with pytest.raises(ValueError):
            extract_attention(model, self.tasks([2]))


class TestExamples:
    def test_target_vector_multi_item(self, catalog):
        task = make_task("u", [], 100, ["car", "roadside"])
        v = _target_vector(task, catalog)
        assert v[catalog.index("car")] == 1.0 and v[catalog.index("roadside")] == 1.0
        assert v.sum() == 2.0

    def test_weibull_examples_need_training_end(self, catalog, vocab, synth_prepped):
        dataset, result = synth_prepped
        model = _init_model("encode", "weibull", False, dataset.vocab.width,
                            TrainConfig(hidden_units=4, dropout_rate=0.0), dataset.catalog,
                            dataset.vocab)
        with pytest.raises(ValueError):
            build_examples(result.split.train[:2], dataset, model)

    def test_labels_expand_to_action_steps_for_concat(self, catalog, vocab, synth_prepped):
        dataset, result = synth_prepped
        task = next(t for t in result.split.train if len(t.sessions) >= 2)
        model = _init_model("concat", "weibull", False, dataset.vocab.width,
                            TrainConfig(hidden_units=4, dropout_rate=0.0), dataset.catalog,
                            dataset.vocab)
        end = max(t.purchase_time for t in result.split.train)
        [ex] = build_examples([task], dataset, model, training_end=end)
        inp = model_input(model, task)
        assert ex.y.shape[0] == inp.matrix.shape[0]
        # all steps of one session share that session's label row
        for i in range(len(task.sessions)):
            rows = ex.y[inp.session_of_step == i]
            assert np.all(rows == rows[0])


class TestPersistence:
    def test_round_trip_scores_identical(self, catalog, vocab, tmp_path):
        for head in HEADS:
            model = tiny_model(catalog, vocab, head, hidden=4, seed=7)
            task = make_task("u", [browse_session("u", "a", 0, "car")], 500, ["car"])
            before = recommend(model, task)
            p = tmp_path / f"{head}.npz"
            save_model(p, model, extra_meta={"note": "t"})
            loaded = load_model(p)
            assert loaded.head_kind == head
            assert loaded.catalog.items == catalog.items
            np.testing.assert_array_equal(recommend(loaded, task), before)

    def test_round_trip_hybrid_scaler(self, catalog, vocab, tmp_path):
        model = tiny_model(catalog, vocab, "bce", hybrid=True, hidden=4)
        model.params["demo_mean"].data[...] = np.arange(7)
        model.params["demo_scale"].data[...] = np.arange(1, 8)
        task = make_task("u", [browse_session("u", "a", 0, "car")], 500, ["car"])
        profile = UserProfile("u", np.arange(7.0), {"car": 1})
        before = recommend(model, task, profile)
        save_model(tmp_path / "h.npz", model)
        loaded = load_model(tmp_path / "h.npz")
        assert not loaded.params["demo_mean"].requires_grad
        np.testing.assert_array_equal(recommend(loaded, task, profile), before)

    def test_wrong_kind_rejected(self, catalog, vocab, tmp_path):
        from crossrec.numcore.checkpoint import save_checkpoint

        save_checkpoint(tmp_path / "x.npz", {"w": np.zeros(2)}, {"model_kind": "other"})
        with pytest.raises(ValueError):
            load_model(tmp_path / "x.npz")


class TestPresets:
    def test_table_is_complete(self):
        from crossrec.encoders import ENCODER_KINDS

        assert set(PRESETS) == {(e, h) for e in ENCODER_KINDS for h in HEAD_KINDS}
        for batch, units, rate in PRESETS.values():
            TrainConfig(batch_size=batch, hidden_units=units, dropout_rate=rate).validate()
        assert AUTO_PRESET == (128, 512)

    def test_preset_config_reads_table(self):
        cfg = preset_config("concat", "weibull", seed=9)
        assert (cfg.batch_size, cfg.hidden_units, cfg.dropout_rate) == (128, 128, 0.3)
        assert cfg.seed == 9

    def test_unknown_combo_rejected(self, synth_prepped):
        dataset, result = synth_prepped
        with pytest.raises(ValueError):
            train_model(result.split, dataset, "encode", "poisson")
        with pytest.raises(ValueError):
            train_model(result.split, dataset, "rnn", "bce")


class TestTrainModel:
    def test_short_run_returns_model_and_history(self, synth_prepped):
        dataset, result = synth_prepped
        cfg = TrainConfig(batch_size=32, hidden_units=32, dropout_rate=0.0,
                          max_epochs=2, patience=2, seed=0)
        model, history, auto_history = train_model(result.split, dataset, "encode", "bce", cfg=cfg)
        assert auto_history is None
        assert len(history.train_losses) == 2
        scores = recommend(model, result.split.test[0])
        assert scores.shape == (len(dataset.catalog.items),)
        assert np.all((0 <= scores) & (scores <= 1))

    def test_auto_encoder_stage(self, synth_prepped):
        dataset, result = synth_prepped
        cfg = TrainConfig(batch_size=32, hidden_units=32, dropout_rate=0.0,
                          max_epochs=1, patience=1, seed=0)
        auto_cfg = TrainConfig(batch_size=64, hidden_units=32, dropout_rate=0.0,
                               max_epochs=1, patience=1, seed=0)
        model, history, auto_history = train_model(
            result.split, dataset, "auto", "bce", cfg=cfg, auto_cfg=auto_cfg
        )
        assert auto_history is not None
        assert model.auto_model is not None
        assert model.input_dim == 32
        assert recommend(model, result.split.test[0]).shape == (len(dataset.catalog.items),)
