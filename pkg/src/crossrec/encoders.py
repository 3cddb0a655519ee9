"""Session encoders feeding the recommenders.

Three ways to turn a task (an ordered chain of sessions) into the input
sequence of a recurrent recommender:

* ``encode``: each session becomes the element-wise max of its binarized
  action vectors, one step per session.
* ``concat``: all actions of all sessions form one long sequence, one step
  per action.
* ``auto``: each session is embedded by the encoder half of a seq2seq GRU
  autoencoder trained to reconstruct the action sequence, one step per
  session.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import ActionVocabulary, binarize_session
from .numcore import layers, tensor as T
from .numcore.layers import GruWeights, glorot
from .numcore.tensor import Tensor
from .numcore.train import TrainConfig, fit

ENCODER_KINDS = ("encode", "concat", "auto")


@dataclass
class TaskInput:
    """Input matrix for one task: ``matrix[t]`` is the step-t vector.

    ``session_of_step[t]`` maps each step back to the index of the session
    it came from (the identity for session-per-step encoders).
    """

    matrix: np.ndarray
    session_of_step: np.ndarray


def encode_maxpool(action_vectors: np.ndarray) -> np.ndarray:
    """Element-wise maximum over a session's binarized action vectors."""
    m = np.asarray(action_vectors, dtype=float)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError("encode_maxpool needs a non-empty (n_actions, width) matrix")
    return m.max(axis=0)


def concat_sessions(task) -> list:
    """All actions of a task in session order, then action order."""
    if not task.sessions:
        raise ValueError("task has no sessions")
    return [a for s in task.sessions for a in s.actions]


# -- autoencoder -------------------------------------------------------------


@dataclass
class AutoencoderModel:
    """Seq2seq GRU with one softmax head per action component."""

    vocab: ActionVocabulary
    hidden: int
    params: dict  # name -> Tensor

    def head_slices(self) -> tuple:
        ns, no = len(self.vocab.sections), len(self.vocab.objects)
        nt = len(self.vocab.types)
        return (slice(0, ns), slice(ns, ns + no), slice(ns + no, ns + no + nt))

    def _gru(self, prefix: str) -> dict:
        return {k: self.params[f"{prefix}_{k}"] for k in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")}

    def encoder_weights(self) -> GruWeights:
        return GruWeights(**{k: self.params[f"enc_{k}"].data for k in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")})

    def batch_loss(self, batch: list, rng, training: bool) -> Tensor:
        """Mean over sessions of the per-step mean of the three-head CE."""
        groups: dict = {}
        for m in batch:
            groups.setdefault(m.shape[0], []).append(m)
        enc = self._gru("enc")
        dec = self._gru("dec")
        heads = [(self.params["w_sec"], self.params["b_sec"]),
                 (self.params["w_obj"], self.params["b_obj"]),
                 (self.params["w_typ"], self.params["b_typ"])]
        slices = self.head_slices()
        total = None
        for t_len, mats in groups.items():
            x = np.stack(mats)  # (g, T, D)
            g = x.shape[0]
            h = Tensor(np.zeros((g, self.hidden)))
            for t in range(t_len):
                h = layers.gru_cell_graph(Tensor(x[:, t, :]), h, enc)
            hd = h  # decoder starts from the encoder summary
            group_ce = None
            for t in range(t_len):
                prev = np.zeros((g, x.shape[2])) if t == 0 else x[:, t - 1, :]
                hd = layers.gru_cell_graph(Tensor(prev), hd, dec)
                for (w, b), sl in zip(heads, slices):
                    p = layers.dense_graph(hd, w, b, "softmax")
                    ce = T.mul(T.tsum(T.mul(Tensor(x[:, t, sl]), T.log(p))), -1.0)
                    group_ce = ce if group_ce is None else T.add(group_ce, ce)
            group_loss = T.mul(group_ce, 1.0 / t_len)
            total = group_loss if total is None else T.add(total, group_loss)
        return T.mul(total, 1.0 / len(batch))


def _init_autoencoder(vocab: ActionVocabulary, hidden: int, seed: int) -> AutoencoderModel:
    rng = np.random.default_rng(seed)
    d = vocab.width
    params: dict = {}
    for prefix in ("enc", "dec"):
        for k in ("w_z", "w_r", "w_h"):
            params[f"{prefix}_{k}"] = Tensor(glorot(rng, d, hidden), requires_grad=True)
        for k in ("u_z", "u_r", "u_h"):
            params[f"{prefix}_{k}"] = Tensor(glorot(rng, hidden, hidden), requires_grad=True)
        for k in ("b_z", "b_r", "b_h"):
            params[f"{prefix}_{k}"] = Tensor(np.zeros(hidden), requires_grad=True)
    for name, n in (("sec", len(vocab.sections)), ("obj", len(vocab.objects)), ("typ", len(vocab.types))):
        params[f"w_{name}"] = Tensor(glorot(rng, hidden, n), requires_grad=True)
        params[f"b_{name}"] = Tensor(np.zeros(n), requires_grad=True)
    return AutoencoderModel(vocab=vocab, hidden=hidden, params=params)


def fit_autoencoder(train_sessions: list, val_sessions: list, vocab: ActionVocabulary, cfg: TrainConfig):
    """Train the reconstruction autoencoder on binarized sessions.

    Returns ``(model, history)``. Dropout is not used here, so the config's
    dropout rate is ignored.
    """
    model = _init_autoencoder(vocab, cfg.hidden_units, cfg.seed)
    train_mats = [binarize_session(s.actions, vocab) for s in train_sessions]
    val_mats = [binarize_session(s.actions, vocab) for s in val_sessions]
    history = fit(model, train_mats, val_mats, cfg)
    return model, history


def encode_auto(session, model: AutoencoderModel) -> np.ndarray:
    """Final encoder hidden state for one session."""
    mat = binarize_session(session.actions, model.vocab)
    w = model.encoder_weights()
    h = np.zeros(model.hidden)
    for t in range(mat.shape[0]):
        h = layers.gru_cell(mat[t], h, w)
    return h


def reconstruct(model: AutoencoderModel, session_matrix: np.ndarray) -> tuple:
    """Teacher-forced argmax reconstruction, per-component index arrays."""
    enc = model.encoder_weights()
    dec = GruWeights(**{k: model.params[f"dec_{k}"].data for k in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")})
    h = np.zeros(model.hidden)
    for t in range(session_matrix.shape[0]):
        h = layers.gru_cell(session_matrix[t], h, enc)
    preds = ([], [], [])
    hd = h
    for t in range(session_matrix.shape[0]):
        prev = np.zeros(session_matrix.shape[1]) if t == 0 else session_matrix[t - 1]
        hd = layers.gru_cell(prev, hd, dec)
        for out, name in zip(preds, ("sec", "obj", "typ")):
            logits = hd @ model.params[f"w_{name}"].data + model.params[f"b_{name}"].data
            out.append(int(np.argmax(logits)))
    return tuple(np.array(p) for p in preds)


# -- task input assembly -----------------------------------------------------


def task_input(task, vocab: ActionVocabulary, kind: str, auto_model: AutoencoderModel | None = None,
               auto_cache: dict | None = None) -> TaskInput:
    """Build the recommender input matrix for one task."""
    if kind not in ENCODER_KINDS:
        raise ValueError(f"unknown encoder kind {kind!r}")
    if not task.sessions:
        raise ValueError("task has no sessions")
    if kind == "encode":
        rows = [encode_maxpool(binarize_session(s.actions, vocab)) for s in task.sessions]
        return TaskInput(np.stack(rows), np.arange(len(rows)))
    if kind == "concat":
        rows = []
        owner = []
        for i, s in enumerate(task.sessions):
            mat = binarize_session(s.actions, vocab)
            rows.append(mat)
            owner.extend([i] * mat.shape[0])
        return TaskInput(np.concatenate(rows, axis=0), np.array(owner))
    if auto_model is None:
        raise ValueError("auto encoder requires a trained AutoencoderModel")
    rows = []
    for s in task.sessions:
        if auto_cache is not None and s.uid in auto_cache:
            rows.append(auto_cache[s.uid])
        else:
            vec = encode_auto(s, auto_model)
            if auto_cache is not None:
                auto_cache[s.uid] = vec
            rows.append(vec)
    return TaskInput(np.stack(rows), np.arange(len(rows)))
