"""Cross-session recommenders: GRU over encoded sessions with three heads.

* ``bce``: purchase probabilities from the final hidden state, trained with
  multi-label binary cross-entropy.
* ``weibull``: per-step discrete-Weibull time-to-purchase parameters,
  trained with a censored negative log-likelihood; items are ranked by
  negative predicted median.
* ``attention``: additive attention over the per-step states replaces the
  final state before the sigmoid output.

Any head can carry a demographic hybrid branch: a small feed-forward
encoding of the user profile concatenated with the session representation
and merged by one dense ReLU layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Catalog, Dataset, SECONDS_PER_DAY, build_censored_labels
from .encoders import AutoencoderModel, ENCODER_KINDS, TaskInput, fit_autoencoder, task_input
from .numcore import layers, tensor as T
from .numcore.checkpoint import load_checkpoint, save_checkpoint
from .numcore.layers import GruWeights, glorot
from .numcore.tensor import LOG_FLOOR, Tensor
from .numcore.train import FitHistory, TrainConfig, fit

HEAD_KINDS = ("bce", "weibull", "attention")
DEMO_HIDDEN = 32

GRU_KEYS = ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")

# Tuned hyperparameters per model family: (batch, units, dropout), plus the
# autoencoder's own (batch, units) where one is used.
PRESETS = {
    ("encode", "bce"): (32, 64, 0.3),
    ("concat", "bce"): (128, 64, 0.3),
    ("auto", "bce"): (32, 64, 0.4),
    ("encode", "weibull"): (16, 64, 0.3),
    ("concat", "weibull"): (128, 128, 0.3),
    ("auto", "weibull"): (64, 128, 0.4),
    ("encode", "attention"): (32, 64, 0.3),
    ("concat", "attention"): (128, 64, 0.3),
    ("auto", "attention"): (32, 64, 0.4),
}
AUTO_PRESET = (128, 512)


def preset_config(encoder: str, head: str, seed: int = 0) -> TrainConfig:
    batch, units, rate = PRESETS[(encoder, head)]
    return TrainConfig(batch_size=batch, hidden_units=units, dropout_rate=rate, seed=seed)


# -- discrete Weibull --------------------------------------------------------


def weibull_activation(o1: np.ndarray, o2: np.ndarray) -> tuple:
    """Map the two output layers to (alpha, beta): exp and sigmoid."""
    alpha = np.exp(np.clip(o1, -T.PREACT_CLAMP, T.PREACT_CLAMP))
    beta = 1.0 / (1.0 + np.exp(-np.clip(o2, -T.PREACT_CLAMP, T.PREACT_CLAMP)))
    return alpha, beta


def _check_weibull_args(y, alpha, beta):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("y must be non-negative")
    if np.any(np.asarray(alpha) <= 0) or np.any(np.asarray(beta) <= 0):
        raise ValueError("alpha and beta must be positive")
    return y


def weibull_tail(y, alpha, beta) -> np.ndarray:
    """P(Y > y) = exp(-((y+1)/alpha)^beta)."""
    y = _check_weibull_args(y, alpha, beta)
    return np.exp(-(((y + 1.0) / alpha) ** beta))


def weibull_pmf(y, alpha, beta) -> np.ndarray:
    """P(Y = y) = exp(-(y/alpha)^beta) - exp(-((y+1)/alpha)^beta), 0^beta := 0."""
    y = _check_weibull_args(y, alpha, beta)
    left = np.where(y == 0, 1.0, np.exp(-((np.maximum(y, 1e-300) / alpha) ** beta)))
    return left - weibull_tail(y, alpha, beta)


def loss_censored_weibull(alpha, beta, y, u) -> float:
    """One step's negative log-likelihood summed over items.

    Observed entries (u=1) contribute -log pmf(y), censored ones -log
    tail(y); both arguments are floored at 1e-12.
    """
    u = np.asarray(u, dtype=float)
    pmf = np.maximum(weibull_pmf(y, alpha, beta), LOG_FLOOR)
    tail = np.maximum(weibull_tail(y, alpha, beta), LOG_FLOOR)
    return float(-(u * np.log(pmf) + (1.0 - u) * np.log(tail)).sum())


def weibull_median(alpha, beta) -> np.ndarray:
    """Continuous-Weibull closed form alpha * ln(2)^(1/beta)."""
    return np.asarray(alpha) * np.log(2.0) ** (1.0 / np.asarray(beta))


def weibull_score(alpha, beta) -> np.ndarray:
    """Earlier expected purchase = higher score: the negative median."""
    return -weibull_median(alpha, beta)


def loss_bce(p_hat: np.ndarray, p: np.ndarray) -> float:
    """Multi-label binary cross-entropy with probabilities clamped to [1e-12, 1-1e-12]."""
    q = np.clip(np.asarray(p_hat, dtype=float), LOG_FLOOR, 1.0 - LOG_FLOOR)
    p = np.asarray(p, dtype=float)
    return float(-(p * np.log(q) + (1.0 - p) * np.log(1.0 - q)).sum())


# -- model -------------------------------------------------------------------


@dataclass
class CrossSessionsModel:
    encoder_kind: str
    head_kind: str
    hybrid: bool
    input_dim: int
    hidden: int
    catalog: Catalog
    vocab: object
    params: dict
    auto_model: AutoencoderModel | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_items(self) -> int:
        return len(self.catalog.items)

    def gru_weights(self) -> GruWeights:
        return GruWeights(**{k: self.params[f"gru_{k}"].data for k in GRU_KEYS})

    def gru_graph(self) -> dict:
        return {k: self.params[f"gru_{k}"] for k in GRU_KEYS}

    def scale_demo(self, demo: np.ndarray) -> np.ndarray:
        return (demo - self.params["demo_mean"].data) / self.params["demo_scale"].data

    # ---- training-time loss ------------------------------------------------

    def batch_loss(self, batch: list, rng, training: bool) -> Tensor:
        """Mean per-task loss over a batch of Examples, grouped by length."""
        groups: dict = {}
        for ex in batch:
            groups.setdefault(ex.x.shape[0], []).append(ex)
        rate = self.meta.get("dropout_rate", 0.0) if training else 0.0
        total = None
        for t_len, exs in sorted(groups.items()):
            part = self._group_loss(t_len, exs, rate, rng)
            total = part if total is None else T.add(total, part)
        return T.mul(total, 1.0 / len(batch))

    def _group_loss(self, t_len: int, exs: list, rate: float, rng) -> Tensor:
        x = np.stack([ex.x for ex in exs])  # (g, T, D)
        g = x.shape[0]
        w = self.gru_graph()
        h = Tensor(np.zeros((g, self.hidden)))
        states = []
        for t in range(t_len):
            h = layers.gru_cell_graph(Tensor(x[:, t, :]), h, w)
            states.append(h)

        demo_h = None
        if self.hybrid:
            demo = np.stack([ex.demo for ex in exs])
            demo_h = layers.dense_graph(Tensor(demo), self.params["wd"], self.params["bd"], "relu")

        def drop(t_state):
            return layers.dropout_graph(t_state, rate, rng) if rate > 0 else t_state

        def rep_of(t_state):
            """Session-branch state -> second-layer representation.

            The hybrid merge happens here for the bce and weibull heads;
            the attention head merges after pooling its context instead.
            """
            if self.hybrid and self.head_kind != "attention":
                merged = T.concat([drop(t_state), demo_h], axis=1)
                return layers.dense_graph(merged, self.params["wm"], self.params["bm"], "relu")
            return layers.dense_graph(drop(t_state), self.params["w2"], self.params["b2"], "relu")

        if self.head_kind == "bce":
            rep = rep_of(states[-1])
            p_hat = layers.dense_graph(rep, self.params["wo"], self.params["bo"], "sigmoid")
            target = Tensor(np.stack([ex.target for ex in exs]))
            ll = T.add(
                T.mul(target, T.log(p_hat)),
                T.mul(1.0 - target, T.log(T.add(T.mul(p_hat, -1.0), 1.0))),
            )
            return T.mul(T.tsum(ll), -1.0)

        if self.head_kind == "weibull":
            y = np.stack([ex.y for ex in exs]).astype(float)  # (g, T, K)
            u = np.stack([ex.u for ex in exs]).astype(float)
            total = None
            for t in range(t_len):
                rep = rep_of(states[t])
                o1 = layers.dense_graph(rep, self.params["wo1"], self.params["bo1"])
                o2 = layers.dense_graph(rep, self.params["wo2"], self.params["bo2"])
                alpha = T.exp(o1)
                beta = T.sigmoid(o2)
                yt, ut = y[:, t, :], u[:, t, :]
                inv_a = T.div(Tensor(np.ones_like(yt)), alpha)
                tail = T.exp(T.mul(T.power(T.mul(inv_a, yt + 1.0), beta), -1.0))
                left = T.where_const(
                    yt == 0, 1.0, T.exp(T.mul(T.power(T.mul(inv_a, np.maximum(yt, 1.0)), beta), -1.0))
                )
                pmf = T.add(left, T.mul(tail, -1.0))
                ll = T.add(T.mul(Tensor(ut), T.log(pmf)), T.mul(Tensor(1.0 - ut), T.log(tail)))
                step = T.mul(T.tsum(ll), -1.0)
                total = step if total is None else T.add(total, step)
            return T.mul(total, 1.0 / t_len)  # mean over steps, keeps long tasks from dominating

        # attention head
        scored = [rep_of(s) for s in states]
        e_cols = [T.matmul(T.tanh(T.matmul(s, self.params["wa"])), self.params["va"]) for s in scored]
        lam = T.softmax(T.concat(e_cols, axis=1), axis=1)
        ctx = None
        for t, s in enumerate(scored):
            piece = T.mul(T.take_col(lam, t), s)
            ctx = piece if ctx is None else T.add(ctx, piece)
        if self.hybrid:
            ctx = layers.dense_graph(T.concat([ctx, demo_h], axis=1), self.params["wm"], self.params["bm"], "relu")
        p_hat = layers.dense_graph(ctx, self.params["wo"], self.params["bo"], "sigmoid")
        target = Tensor(np.stack([ex.target for ex in exs]))
        ll = T.add(
            T.mul(target, T.log(p_hat)),
            T.mul(1.0 - target, T.log(T.add(T.mul(p_hat, -1.0), 1.0))),
        )
        return T.mul(T.tsum(ll), -1.0)


def _init_model(encoder: str, head: str, hybrid: bool, input_dim: int, cfg: TrainConfig,
                catalog: Catalog, vocab, demo_dim: int = 0) -> CrossSessionsModel:
    rng = np.random.default_rng(cfg.seed)
    h = cfg.hidden_units
    k = len(catalog.items)
    params: dict = {}
    for key in GRU_KEYS:
        if key.startswith("w"):
            params[f"gru_{key}"] = Tensor(glorot(rng, input_dim, h), requires_grad=True)
        elif key.startswith("u"):
            params[f"gru_{key}"] = Tensor(glorot(rng, h, h), requires_grad=True)
        else:
            params[f"gru_{key}"] = Tensor(np.zeros(h), requires_grad=True)

    if hybrid:
        if demo_dim < 1:
            raise ValueError("hybrid model requires demographic profiles")
        params["wd"] = Tensor(glorot(rng, demo_dim, DEMO_HIDDEN), requires_grad=True)
        params["bd"] = Tensor(np.zeros(DEMO_HIDDEN), requires_grad=True)
        params["wm"] = Tensor(glorot(rng, h + DEMO_HIDDEN, h), requires_grad=True)
        params["bm"] = Tensor(np.zeros(h), requires_grad=True)
        params["demo_mean"] = Tensor(np.zeros(demo_dim))
        params["demo_scale"] = Tensor(np.ones(demo_dim))
    if not hybrid or head == "attention":
        params["w2"] = Tensor(glorot(rng, h, h), requires_grad=True)
        params["b2"] = Tensor(np.zeros(h), requires_grad=True)

    if head == "attention":
        params["wa"] = Tensor(glorot(rng, h, h), requires_grad=True)
        params["va"] = Tensor(glorot(rng, h, 1), requires_grad=True)
    if head == "weibull":
        for suffix in ("1", "2"):
            params[f"wo{suffix}"] = Tensor(glorot(rng, h, k), requires_grad=True)
            params[f"bo{suffix}"] = Tensor(np.zeros(k), requires_grad=True)
    else:
        params["wo"] = Tensor(glorot(rng, h, k), requires_grad=True)
        params["bo"] = Tensor(np.zeros(k), requires_grad=True)

    return CrossSessionsModel(
        encoder_kind=encoder,
        head_kind=head,
        hybrid=hybrid,
        input_dim=input_dim,
        hidden=h,
        catalog=catalog,
        vocab=vocab,
        params=params,
        meta={"dropout_rate": cfg.dropout_rate, "seed": cfg.seed},
    )


# -- inference forward passes -------------------------------------------------


def _hidden_states(model: CrossSessionsModel, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("input sequence is empty")
    w = model.gru_weights()
    h = np.zeros(model.hidden)
    states = np.empty((x.shape[0], model.hidden))
    for t in range(x.shape[0]):
        h = layers.gru_cell(x[t], h, w)
        states[t] = h
    return states


def _demo_hidden(model: CrossSessionsModel, demo: np.ndarray | None) -> np.ndarray:
    if demo is None:
        raise ValueError("profile required for a hybrid model")
    return layers.dense(model.scale_demo(np.asarray(demo, dtype=float)),
                        model.params["wd"].data, model.params["bd"].data, "relu")


def _rep(model: CrossSessionsModel, state: np.ndarray, demo_h: np.ndarray | None) -> np.ndarray:
    if model.hybrid and model.head_kind != "attention":
        merged = np.concatenate([state, demo_h], axis=-1)
        return layers.dense(merged, model.params["wm"].data, model.params["bm"].data, "relu")
    return layers.dense(state, model.params["w2"].data, model.params["b2"].data, "relu")


def forward_bce(model: CrossSessionsModel, x: np.ndarray, demo: np.ndarray | None = None) -> np.ndarray:
    """Per-item purchase probabilities from the final step."""
    states = _hidden_states(model, x)
    demo_h = _demo_hidden(model, demo) if model.hybrid else None
    rep = _rep(model, states[-1], demo_h)
    return layers.dense(rep, model.params["wo"].data, model.params["bo"].data, "sigmoid")


def forward_weibull(model: CrossSessionsModel, x: np.ndarray, demo: np.ndarray | None = None) -> tuple:
    """(alpha, beta) arrays of shape (T, K), one row per step."""
    states = _hidden_states(model, x)
    demo_h = _demo_hidden(model, demo) if model.hybrid else None
    alphas, betas = [], []
    for t in range(states.shape[0]):
        rep = _rep(model, states[t], demo_h)
        o1 = layers.dense(rep, model.params["wo1"].data, model.params["bo1"].data)
        o2 = layers.dense(rep, model.params["wo2"].data, model.params["bo2"].data)
        a, b = weibull_activation(o1, o2)
        alphas.append(a)
        betas.append(b)
    return np.stack(alphas), np.stack(betas)


def forward_attention(model: CrossSessionsModel, x: np.ndarray, demo: np.ndarray | None = None) -> tuple:
    """(per-item probabilities, per-step attention weights)."""
    states = _hidden_states(model, x)
    demo_h = _demo_hidden(model, demo) if model.hybrid else None
    scored = np.stack([_rep(model, states[t], demo_h) for t in range(states.shape[0])])
    e = np.tanh(scored @ model.params["wa"].data) @ model.params["va"].data  # (T, 1)
    e = e[:, 0]
    lam = np.exp(e - e.max())
    lam /= lam.sum()
    ctx = lam @ scored
    if model.hybrid:
        merged = np.concatenate([ctx, demo_h])
        ctx = layers.dense(merged, model.params["wm"].data, model.params["bm"].data, "relu")
    probs = layers.dense(ctx, model.params["wo"].data, model.params["bo"].data, "sigmoid")
    return probs, lam


def forward_hybrid(model: CrossSessionsModel, x: np.ndarray, demo: np.ndarray) -> np.ndarray:
    """Hybrid forward for whatever head the model carries (probabilities)."""
    if not model.hybrid:
        raise ValueError("model has no hybrid branch")
    if model.head_kind == "attention":
        return forward_attention(model, x, demo)[0]
    if model.head_kind == "weibull":
        alpha, beta = forward_weibull(model, x, demo)
        return weibull_score(alpha[-1], beta[-1])
    return forward_bce(model, x, demo)


# -- scoring ------------------------------------------------------------------


def _task_demo(model: CrossSessionsModel, profile) -> np.ndarray | None:
    if not model.hybrid:
        return None
    if profile is None:
        raise ValueError("profile required for a hybrid model")
    return profile.demographics


def model_input(model: CrossSessionsModel, task, cache: dict | None = None) -> TaskInput:
    return task_input(task, model.vocab, model.encoder_kind, model.auto_model, auto_cache=cache)


def recommend(model: CrossSessionsModel, task, profile=None, inp: TaskInput | None = None) -> np.ndarray:
    """Item scores at the final step; higher means recommended sooner."""
    if inp is None:
        inp = model_input(model, task)
    demo = _task_demo(model, profile)
    if model.head_kind == "weibull":
        alpha, beta = forward_weibull(model, inp.matrix, demo)
        return weibull_score(alpha[-1], beta[-1])
    if model.head_kind == "attention":
        return forward_attention(model, inp.matrix, demo)[0]
    return forward_bce(model, inp.matrix, demo)


def predict_steps(model: CrossSessionsModel, task, profile=None, inp: TaskInput | None = None) -> np.ndarray:
    """Score matrix (n_sessions, K): the model's ranking after each session.

    The Weibull head emits per-step outputs natively (the row is the last
    action step of each session for the concat encoder); the other heads
    are re-run on each session prefix.
    """
    if inp is None:
        inp = model_input(model, task)
    demo = _task_demo(model, profile)
    n_sessions = int(inp.session_of_step[-1]) + 1
    last_step = [int(np.max(np.flatnonzero(inp.session_of_step == i))) for i in range(n_sessions)]
    if model.head_kind == "weibull":
        alpha, beta = forward_weibull(model, inp.matrix, demo)
        return np.stack([weibull_score(alpha[t], beta[t]) for t in last_step])
    rows = []
    for t in last_step:
        prefix = inp.matrix[: t + 1]
        if model.head_kind == "attention":
            rows.append(forward_attention(model, prefix, demo)[0])
        else:
            rows.append(forward_bce(model, prefix, demo))
    return np.stack(rows)


def extract_attention(model: CrossSessionsModel, tasks: list, profiles: dict | None = None) -> dict:
    """Mean attention weight per session position, grouped by session count.

    For the concat encoder the per-action weights are summed within each
    session first, so every returned row still sums to 1.
    """
    if model.head_kind != "attention":
        raise ValueError("extract_attention requires an attention head")
    sums: dict = {}
    counts: dict = {}
    for task in tasks:
        inp = model_input(model, task)
        demo = _task_demo(model, (profiles or {}).get(task.user_id))
        _, lam = forward_attention(model, inp.matrix, demo)
        n = int(inp.session_of_step[-1]) + 1
        per_session = np.zeros(n)
        np.add.at(per_session, inp.session_of_step, lam)
        sums[n] = sums.get(n, np.zeros(n)) + per_session
        counts[n] = counts.get(n, 0) + 1
    return {n: sums[n] / counts[n] for n in sorted(sums)}


# -- training orchestration ----------------------------------------------------


@dataclass
class Example:
    x: np.ndarray
    target: np.ndarray
    task: object
    y: np.ndarray | None = None
    u: np.ndarray | None = None
    demo: np.ndarray | None = None


def _target_vector(task, catalog: Catalog) -> np.ndarray:
    v = np.zeros(len(catalog.items))
    for item in task.purchase.items:
        v[catalog.index(item)] = 1.0
    return v


def build_examples(tasks: list, dataset: Dataset, model: CrossSessionsModel,
                   training_end: int | None = None, auto_cache: dict | None = None) -> list:
    """Precompute per-task inputs, targets and (for Weibull) censored labels."""
    need_labels = model.head_kind == "weibull"
    labels = None
    if need_labels:
        if training_end is None:
            raise ValueError("weibull examples need a training_end instant")
        labels = build_censored_labels(tasks, dataset.purchases, training_end, dataset.catalog)
    out = []
    for i, task in enumerate(tasks):
        inp = model_input(model, task, cache=auto_cache)
        demo = None
        if model.hybrid:
            profile = dataset.profiles.get(task.user_id)
            if profile is None:
                raise ValueError(f"profile required for user {task.user_id!r}")
            demo = model.scale_demo(profile.demographics)
        y = u = None
        if need_labels:
            y, u = labels[i]
            y = y[inp.session_of_step]  # expand session labels to steps
            u = u[inp.session_of_step]
        out.append(Example(x=inp.matrix, target=_target_vector(task, dataset.catalog), task=task,
                           y=y, u=u, demo=demo))
    return out


def _demo_scaler(dataset: Dataset, tasks: list) -> tuple:
    rows = []
    for task in tasks:
        profile = dataset.profiles.get(task.user_id)
        if profile is None:
            raise ValueError(f"profile required for user {task.user_id!r}")
        rows.append(profile.demographics)
    m = np.stack(rows)
    mean = m.mean(axis=0)
    scale = np.maximum(m.std(axis=0), 1e-9)
    return mean, scale


def train_model(split, dataset: Dataset, encoder: str, head: str, hybrid: bool = False,
                cfg: TrainConfig | None = None, auto_cfg: TrainConfig | None = None) -> tuple:
    """Train a cross-sessions model on a prep split.

    Returns ``(model, history, auto_history)``; the last is None unless the
    auto encoder was trained as a first stage.
    """
    if encoder not in ENCODER_KINDS or head not in HEAD_KINDS:
        raise ValueError(f"unknown encoder/head: {encoder}/{head}")
    cfg = cfg or preset_config(encoder, head)
    cfg.validate()

    auto_model = auto_history = None
    if encoder == "auto":
        if auto_cfg is None:
            auto_cfg = TrainConfig(batch_size=AUTO_PRESET[0], hidden_units=AUTO_PRESET[1],
                                   dropout_rate=0.0, seed=cfg.seed)
        train_sessions = _unique_sessions(split.train)
        val_sessions = _unique_sessions(split.validation)
        auto_model, auto_history = fit_autoencoder(train_sessions, val_sessions, dataset.vocab, auto_cfg)
        input_dim = auto_cfg.hidden_units
    else:
        input_dim = dataset.vocab.width

    demo_dim = len(next(iter(dataset.profiles.values())).demographics) if dataset.profiles else 0
    model = _init_model(encoder, head, hybrid, input_dim, cfg, dataset.catalog, dataset.vocab, demo_dim)
    model.auto_model = auto_model
    if hybrid:
        mean, scale = _demo_scaler(dataset, split.train)
        model.params["demo_mean"].data[...] = mean
        model.params["demo_scale"].data[...] = scale

    training_end = None
    if head == "weibull":
        training_end = max(t.purchase_time for t in split.train + split.validation)
    cache: dict = {}
    train_examples = build_examples(split.train, dataset, model, training_end, cache)
    val_examples = build_examples(split.validation, dataset, model, training_end, cache)
    history = fit(model, train_examples, val_examples, cfg)
    return model, history, auto_history


def _unique_sessions(tasks: list) -> list:
    seen = set()
    out = []
    for task in tasks:
        for s in task.sessions:
            if s.uid not in seen:
                seen.add(s.uid)
                out.append(s)
    return out


# -- persistence ----------------------------------------------------------------


def save_model(path, model: CrossSessionsModel, extra_meta: dict | None = None) -> None:
    params = {k: v.data for k, v in model.params.items()}
    if model.auto_model is not None:
        params.update({f"auto_{k}": v.data for k, v in model.auto_model.params.items()})
    meta = {
        "model_kind": "cross_sessions",
        "encoder_kind": model.encoder_kind,
        "head_kind": model.head_kind,
        "hybrid": model.hybrid,
        "input_dim": model.input_dim,
        "hidden": model.hidden,
        "auto_hidden": model.auto_model.hidden if model.auto_model else 0,
        "catalog_items": list(model.catalog.items),
        "coverage_of": dict(model.catalog.coverage_of),
        "vocab": {
            "sections": list(model.vocab.sections),
            "objects": list(model.vocab.objects),
            "types": list(model.vocab.types),
        },
        **(extra_meta or {}),
        **model.meta,
    }
    save_checkpoint(path, params, meta)


def load_model(path) -> CrossSessionsModel:
    from .dataio import ActionVocabulary

    params, meta = load_checkpoint(path)
    if meta.get("model_kind") != "cross_sessions":
        raise ValueError(f"{path}: checkpoint is not a cross_sessions model")
    catalog = Catalog(items=meta["catalog_items"], coverage_of=meta["coverage_of"])
    vocab = ActionVocabulary(**meta["vocab"])
    auto_model = None
    auto_params = {k[len("auto_"):]: Tensor(v, requires_grad=True) for k, v in params.items() if k.startswith("auto_")}
    if auto_params:
        auto_model = AutoencoderModel(vocab=vocab, hidden=meta["auto_hidden"], params=auto_params)
    own = {k: Tensor(v, requires_grad=not k.startswith("demo_")) for k, v in params.items() if not k.startswith("auto_")}
    return CrossSessionsModel(
        encoder_kind=meta["encoder_kind"],
        head_kind=meta["head_kind"],
        hybrid=meta["hybrid"],
        input_dim=meta["input_dim"],
        hidden=meta["hidden"],
        catalog=catalog,
        vocab=vocab,
        params=own,
        auto_model=auto_model,
        meta=meta,
    )
