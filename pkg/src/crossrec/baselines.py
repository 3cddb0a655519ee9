"""Reference competitors for the cross-session recommenders.

All baselines expose ``score(task) -> ndarray`` over the catalog so the
evaluation harness treats them exactly like the neural models. Training
state (counts, factor matrices, neighbor indexes, network weights) is
picklable into the shared checkpoint format.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Catalog, Dataset, ITEM_PREFIX, binarize_session
from .encoders import concat_sessions, encode_maxpool
from .numcore import layers, tensor as T
from .numcore.checkpoint import load_checkpoint, save_checkpoint
from .numcore.layers import glorot
from .numcore.tensor import Tensor
from .numcore.train import TrainConfig, fit

BASELINE_KINDS = ("random", "popular", "svd", "demo", "gru4rec", "gru4rec-concat", "sknn", "sknn-b")

DEMO_PRESET = (32, 32, 0.3)
GRU4REC_PRESET = (32, 256, 0.2)
SKNN_NEIGHBORS = 30
SKNN_BOOST = 0.5


def purchase_counts(tasks: list, catalog: Catalog) -> np.ndarray:
    """Per-item purchase-row counts over the given tasks."""
    counts = np.zeros(len(catalog.items))
    for t in tasks:
        for item in t.purchase.items:
            counts[catalog.index(item)] += 1.0
    return counts


def static_rank(mode: str, counts: np.ndarray | None = None, rng: np.random.Generator | None = None) -> np.ndarray:
    """One scoring vector: purchase counts (popular) or a seeded shuffle (random)."""
    if mode == "popular":
        if counts is None:
            raise ValueError("popular mode needs training purchase counts")
        return np.asarray(counts, dtype=float)
    if mode == "random":
        if rng is None:
            raise ValueError("random mode needs an rng")
        return rng.permutation(len(counts)).astype(float)
    raise ValueError(f"unknown static mode {mode!r}")


@dataclass
class PopularModel:
    kind = "popular"
    catalog: Catalog
    counts: np.ndarray

    def score(self, task) -> np.ndarray:
        return self.counts.copy()


@dataclass
class RandomModel:
    kind = "random"
    catalog: Catalog
    seed: int

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def score(self, task) -> np.ndarray:
        return static_rank("random", np.zeros(len(self.catalog.items)), self._rng)


# -- SVD with repeat-purchase columns -----------------------------------------


@dataclass
class UserItemMatrix:
    """Binary users x item-occurrence-slots matrix.

    A user who bought item k c times has ones in k's first c slots; the
    slot count per item is the maximum c observed (at least one).
    """

    users: list
    items: list
    slots_per_item: np.ndarray  # (K,)
    matrix: np.ndarray  # (n_users, total_slots)

    def slot_start(self, item_index: int) -> int:
        return int(self.slots_per_item[:item_index].sum())

    def row_for_counts(self, counts: np.ndarray) -> np.ndarray:
        row = np.zeros(self.matrix.shape[1])
        for k in range(len(self.items)):
            owned = int(min(counts[k], self.slots_per_item[k]))
            start = self.slot_start(k)
            row[start : start + owned] = 1.0
        return row


def user_purchase_counts(tasks: list, catalog: Catalog) -> dict:
    """user_id -> (K,) purchase-row counts over the given tasks."""
    out: dict = {}
    for t in tasks:
        row = out.setdefault(t.user_id, np.zeros(len(catalog.items)))
        for item in t.purchase.items:
            row[catalog.index(item)] += 1.0
    return out


def build_user_item_matrix(counts_by_user: dict, catalog: Catalog) -> UserItemMatrix:
    users = sorted(counts_by_user)
    k = len(catalog.items)
    max_counts = np.ones(k)
    for row in counts_by_user.values():
        max_counts = np.maximum(max_counts, row)
    slots = max_counts.astype(int)
    uim = UserItemMatrix(users=users, items=list(catalog.items), slots_per_item=slots,
                         matrix=np.zeros((len(users), int(slots.sum()))))
    for i, user in enumerate(users):
        uim.matrix[i] = uim.row_for_counts(counts_by_user[user])
    return uim


def svd_projection(matrix: np.ndarray, factors: int) -> np.ndarray:
    """V_f V_f^T of the rank-``factors`` truncated SVD (no mean centering).

    Multiplying a user row by this projection reproduces that row of the
    truncated reconstruction U_f S_f V_f^T for in-matrix users and folds
    new users in consistently.
    """
    if factors < 1:
        raise ValueError("factors must be >= 1")
    _, s, vt = np.linalg.svd(matrix, full_matrices=False)
    rank = int((s > s.max() * 1e-12).sum()) if s.size and s.max() > 0 else 1
    f = min(factors, rank)
    v = vt[:f].T
    return v @ v.T


def svd_recommend(uim: UserItemMatrix, projection: np.ndarray, user_row: np.ndarray) -> np.ndarray:
    """Reconstructed slot scores collapsed to items (first unowned slot)."""
    recon = user_row @ projection
    scores = np.zeros(len(uim.items))
    for k in range(len(uim.items)):
        start = uim.slot_start(k)
        n = int(uim.slots_per_item[k])
        owned = int(user_row[start : start + n].sum())
        scores[k] = recon[start + min(owned, n - 1)]
    return scores


@dataclass
class SvdModel:
    kind = "svd"
    catalog: Catalog
    uim: UserItemMatrix
    projection: np.ndarray
    counts_by_user: dict
    factors: int

    def score(self, task) -> np.ndarray:
        counts = self.counts_by_user.get(task.user_id)
        row = self.uim.row_for_counts(counts) if counts is not None else np.zeros(self.uim.matrix.shape[1])
        return svd_recommend(self.uim, self.projection, row)


def train_svd(train_tasks: list, catalog: Catalog, factors: int = 1) -> SvdModel:
    counts = user_purchase_counts(train_tasks, catalog)
    uim = build_user_item_matrix(counts, catalog)
    return SvdModel(catalog=catalog, uim=uim, projection=svd_projection(uim.matrix, factors),
                    counts_by_user=counts, factors=factors)


# -- demographic feed-forward ---------------------------------------------------


@dataclass
class DemographicModel:
    kind = "demo"
    catalog: Catalog
    params: dict
    feat_mean: np.ndarray
    feat_scale: np.ndarray
    profiles: dict
    meta: dict = field(default_factory=dict)

    def features(self, user_id: str) -> np.ndarray:
        profile = self.profiles.get(user_id)
        if profile is None:
            raise ValueError(f"profile required for user {user_id!r}")
        portfolio = np.array([profile.portfolio.get(i, 0) for i in self.catalog.items], dtype=float)
        raw = np.concatenate([profile.demographics, portfolio])
        return (raw - self.feat_mean) / self.feat_scale

    def _forward_graph(self, x: np.ndarray, rate: float, rng) -> Tensor:
        h1 = layers.dense_graph(Tensor(x), self.params["w1"], self.params["b1"], "relu")
        if rate > 0:
            h1 = layers.dropout_graph(h1, rate, rng)
        h2 = layers.dense_graph(h1, self.params["w2"], self.params["b2"], "relu")
        return layers.dense_graph(h2, self.params["wo"], self.params["bo"], "sigmoid")

    def batch_loss(self, batch: list, rng, training: bool) -> Tensor:
        x = np.stack([b[0] for b in batch])
        target = Tensor(np.stack([b[1] for b in batch]))
        rate = self.meta.get("dropout_rate", 0.0) if training else 0.0
        p_hat = self._forward_graph(x, rate, rng)
        ll = T.add(T.mul(target, T.log(p_hat)),
                   T.mul(1.0 - target, T.log(T.add(T.mul(p_hat, -1.0), 1.0))))
        return T.mul(T.tsum(ll), -1.0 / len(batch))

    def score(self, task) -> np.ndarray:
        x = self.features(task.user_id)
        h1 = layers.dense(x, self.params["w1"].data, self.params["b1"].data, "relu")
        h2 = layers.dense(h1, self.params["w2"].data, self.params["b2"].data, "relu")
        return layers.dense(h2, self.params["wo"].data, self.params["bo"].data, "sigmoid")


def train_demographic(split, dataset: Dataset, cfg: TrainConfig | None = None) -> tuple:
    cfg = cfg or TrainConfig(batch_size=DEMO_PRESET[0], hidden_units=DEMO_PRESET[1], dropout_rate=DEMO_PRESET[2])
    cfg.validate()
    k = len(dataset.catalog.items)
    n_feat = 7 + k
    rng = np.random.default_rng(cfg.seed)
    h = cfg.hidden_units
    params = {
        "w1": Tensor(glorot(rng, n_feat, h), requires_grad=True),
        "b1": Tensor(np.zeros(h), requires_grad=True),
        "w2": Tensor(glorot(rng, h, h), requires_grad=True),
        "b2": Tensor(np.zeros(h), requires_grad=True),
        "wo": Tensor(glorot(rng, h, k), requires_grad=True),
        "bo": Tensor(np.zeros(k), requires_grad=True),
    }
    model = DemographicModel(catalog=dataset.catalog, params=params,
                             feat_mean=np.zeros(n_feat), feat_scale=np.ones(n_feat),
                             profiles=dataset.profiles,
                             meta={"dropout_rate": cfg.dropout_rate, "seed": cfg.seed})

    raw = []
    for task in split.train:
        profile = dataset.profiles.get(task.user_id)
        if profile is None:
            raise ValueError(f"profile required for user {task.user_id!r}")
        portfolio = np.array([profile.portfolio.get(i, 0) for i in dataset.catalog.items], dtype=float)
        raw.append(np.concatenate([profile.demographics, portfolio]))
    raw = np.stack(raw)
    model.feat_mean = raw.mean(axis=0)
    model.feat_scale = np.maximum(raw.std(axis=0), 1e-9)

    def examples(tasks):
        out = []
        for task in tasks:
            target = np.zeros(k)
            for item in task.purchase.items:
                target[dataset.catalog.index(item)] = 1.0
            out.append((model.features(task.user_id), target))
        return out

    history = fit(model, examples(split.train), examples(split.validation), cfg)
    return model, history


# -- GRU4REC --------------------------------------------------------------------


@dataclass
class Gru4RecModel:
    kind = "gru4rec"
    catalog: Catalog
    vocab: object
    concat: bool
    hidden: int
    params: dict
    meta: dict = field(default_factory=dict)

    def head_slices(self) -> tuple:
        ns, no = len(self.vocab.sections), len(self.vocab.objects)
        return (slice(0, ns), slice(ns, ns + no), slice(ns + no, self.vocab.width))

    def _gru_graph(self) -> dict:
        return {k: self.params[f"gru_{k}"] for k in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")}

    def batch_loss(self, batch: list, rng, training: bool) -> Tensor:
        """Shift-by-one CE over the three heads, teacher-forced."""
        rate = self.meta.get("dropout_rate", 0.0) if training else 0.0
        groups: dict = {}
        for m in batch:
            groups.setdefault(m.shape[0], []).append(m)
        w = self._gru_graph()
        heads = [(self.params["w_sec"], self.params["b_sec"]),
                 (self.params["w_obj"], self.params["b_obj"]),
                 (self.params["w_typ"], self.params["b_typ"])]
        slices = self.head_slices()
        total = None
        for t_len, mats in sorted(groups.items()):
            x = np.stack(mats)
            g = x.shape[0]
            h = Tensor(np.zeros((g, self.hidden)))
            group_ce = None
            for t in range(t_len - 1):  # last action has no next-step target
                h = layers.gru_cell_graph(Tensor(x[:, t, :]), h, w)
                hd = layers.dropout_graph(h, rate, rng) if rate > 0 else h
                rep = layers.dense_graph(hd, self.params["w2"], self.params["b2"], "relu")
                for (wh, bh), sl in zip(heads, slices):
                    p = layers.dense_graph(rep, wh, bh, "softmax")
                    ce = T.mul(T.tsum(T.mul(Tensor(x[:, t + 1, sl]), T.log(p))), -1.0)
                    group_ce = ce if group_ce is None else T.add(group_ce, ce)
            total = T.add(total, T.mul(group_ce, 1.0 / (t_len - 1))) if total is not None else T.mul(group_ce, 1.0 / (t_len - 1))
        return T.mul(total, 1.0 / len(batch))

    def _input_matrix(self, task) -> np.ndarray:
        actions = concat_sessions(task) if self.concat else task.sessions[-1].actions
        if not actions:
            raise ValueError("empty input sequence")
        return binarize_session(actions, self.vocab)

    def next_action_probs(self, task) -> tuple:
        """Softmax distributions of the three heads after the final step."""
        x = self._input_matrix(task)
        w = layers.GruWeights(**{k: self.params[f"gru_{k}"].data
                                 for k in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")})
        h = np.zeros(self.hidden)
        for t in range(x.shape[0]):
            h = layers.gru_cell(x[t], h, w)
        rep = layers.dense(h, self.params["w2"].data, self.params["b2"].data, "relu")
        return tuple(
            layers.dense(rep, self.params[f"w_{n}"].data, self.params[f"b_{n}"].data, "softmax")
            for n in ("sec", "obj", "typ")
        )

    def score(self, task) -> np.ndarray:
        """Object-head probability of each catalog item's token."""
        _, obj_probs, _ = self.next_action_probs(task)
        scores = np.zeros(len(self.catalog.items))
        lookup = {o: i for i, o in enumerate(self.vocab.objects)}
        for k, item in enumerate(self.catalog.items):
            j = lookup.get(ITEM_PREFIX + item)
            if j is not None:
                scores[k] = obj_probs[j]
        return scores


def train_gru4rec(split, dataset: Dataset, concat: bool = False, cfg: TrainConfig | None = None) -> tuple:
    cfg = cfg or TrainConfig(batch_size=GRU4REC_PRESET[0], hidden_units=GRU4REC_PRESET[1],
                             dropout_rate=GRU4REC_PRESET[2])
    cfg.validate()
    vocab = dataset.vocab
    rng = np.random.default_rng(cfg.seed)
    h = cfg.hidden_units
    params: dict = {}
    for k in ("w_z", "w_r", "w_h"):
        params[f"gru_{k}"] = Tensor(glorot(rng, vocab.width, h), requires_grad=True)
    for k in ("u_z", "u_r", "u_h"):
        params[f"gru_{k}"] = Tensor(glorot(rng, h, h), requires_grad=True)
    for k in ("b_z", "b_r", "b_h"):
        params[f"gru_{k}"] = Tensor(np.zeros(h), requires_grad=True)
    params["w2"] = Tensor(glorot(rng, h, h), requires_grad=True)
    params["b2"] = Tensor(np.zeros(h), requires_grad=True)
    for name, n in (("sec", len(vocab.sections)), ("obj", len(vocab.objects)), ("typ", len(vocab.types))):
        params[f"w_{name}"] = Tensor(glorot(rng, h, n), requires_grad=True)
        params[f"b_{name}"] = Tensor(np.zeros(n), requires_grad=True)

    model = Gru4RecModel(catalog=dataset.catalog, vocab=vocab, concat=concat, hidden=h, params=params,
                         meta={"dropout_rate": cfg.dropout_rate, "seed": cfg.seed, "concat": concat})

    def examples(tasks):
        out = []
        for task in tasks:
            m = model._input_matrix(task)
            if m.shape[0] >= 2:
                out.append(m)
        return out

    history = fit(model, examples(split.train), examples(split.validation), cfg)
    return model, history


# -- SKNN -----------------------------------------------------------------------


@dataclass
class NeighborIndex:
    vectors: np.ndarray  # (N, width) pooled binary action vectors
    purchases: np.ndarray  # (N, K) binary

    def __post_init__(self):
        norms = np.linalg.norm(self.vectors, axis=1)
        self._norms = np.where(norms == 0, 1.0, norms)


def pooled_task_vector(task, vocab) -> np.ndarray:
    """Element-wise max over all the task's binarized actions."""
    mats = [binarize_session(s.actions, vocab) for s in task.sessions]
    return encode_maxpool(np.concatenate(mats, axis=0))


def interacted_items(task, catalog: Catalog) -> np.ndarray:
    """Mask of items whose object token occurs in any of the task's sessions."""
    seen = {a.object for s in task.sessions for a in s.actions}
    return np.array([(ITEM_PREFIX + item) in seen for item in catalog.items], dtype=bool)


def sknn_recommend(index: NeighborIndex, query: np.ndarray, interacted: np.ndarray,
                   k_neighbors: int = SKNN_NEIGHBORS, boost: float = 0.0,
                   boost_mode: str = "multiplicative") -> np.ndarray:
    """Similarity-weighted neighbor purchase counts, optionally boosted.

    ``boost=0`` is SKNN_E; a positive boost multiplies (or, with the
    additive mode, increments) the scores of items the user interacted
    with.
    """
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    qn = np.linalg.norm(query)
    sims = np.zeros(index.vectors.shape[0]) if qn == 0 else (index.vectors @ query) / (index._norms * qn)
    top = np.lexsort((np.arange(sims.size), -sims))[:k_neighbors]
    scores = sims[top] @ index.purchases[top]
    if boost > 0:
        if boost_mode == "multiplicative":
            scores = np.where(interacted, scores * (1.0 + boost), scores)
        elif boost_mode == "additive":
            scores = np.where(interacted, scores + boost, scores)
        else:
            raise ValueError(f"unknown boost mode {boost_mode!r}")
    return scores


@dataclass
class SknnModel:
    kind = "sknn"
    catalog: Catalog
    vocab: object
    index: NeighborIndex
    k_neighbors: int = SKNN_NEIGHBORS
    boost: float = 0.0
    boost_mode: str = "multiplicative"

    def score(self, task) -> np.ndarray:
        query = pooled_task_vector(task, self.vocab)
        return sknn_recommend(self.index, query, interacted_items(task, self.catalog),
                              self.k_neighbors, self.boost, self.boost_mode)


def train_sknn(train_tasks: list, dataset: Dataset, k_neighbors: int = SKNN_NEIGHBORS,
               boost: float = 0.0, boost_mode: str = "multiplicative") -> SknnModel:
    vectors = np.stack([pooled_task_vector(t, dataset.vocab) for t in train_tasks])
    purchases = np.zeros((len(train_tasks), len(dataset.catalog.items)))
    for i, t in enumerate(train_tasks):
        for item in t.purchase.items:
            purchases[i, dataset.catalog.index(item)] = 1.0
    return SknnModel(catalog=dataset.catalog, vocab=dataset.vocab,
                     index=NeighborIndex(vectors=vectors, purchases=purchases),
                     k_neighbors=k_neighbors, boost=boost, boost_mode=boost_mode)


# -- shared entry point -----------------------------------------------------------


def train_baseline(name: str, split, dataset: Dataset, cfg: TrainConfig | None = None,
                   seed: int = 0, **kwargs):
    """Train any baseline by CLI name; returns the model object."""
    if name == "popular":
        return PopularModel(dataset.catalog, purchase_counts(split.train, dataset.catalog))
    if name == "random":
        return RandomModel(dataset.catalog, seed)
    if name == "svd":
        return train_svd(split.train, dataset.catalog, factors=kwargs.get("factors", 1))
    if name == "demo":
        return train_demographic(split, dataset, cfg)[0]
    if name == "gru4rec":
        return train_gru4rec(split, dataset, concat=False, cfg=cfg)[0]
    if name == "gru4rec-concat":
        return train_gru4rec(split, dataset, concat=True, cfg=cfg)[0]
    if name == "sknn":
        return train_sknn(split.train, dataset, kwargs.get("k_neighbors", SKNN_NEIGHBORS), 0.0)
    if name == "sknn-b":
        return train_sknn(split.train, dataset, kwargs.get("k_neighbors", SKNN_NEIGHBORS),
                          kwargs.get("boost", SKNN_BOOST), kwargs.get("boost_mode", "multiplicative"))
    raise ValueError(f"unknown baseline {name!r}")


# -- persistence -------------------------------------------------------------------


def save_baseline(path, model, extra_meta: dict | None = None) -> None:
    meta = {"model_kind": f"baseline:{model.kind}", "catalog_items": list(model.catalog.items),
            "coverage_of": dict(model.catalog.coverage_of), **(extra_meta or {})}
    arrays: dict = {}
    if isinstance(model, PopularModel):
        arrays["counts"] = model.counts
    elif isinstance(model, RandomModel):
        meta["seed"] = model.seed
    elif isinstance(model, SvdModel):
        arrays["matrix"] = model.uim.matrix
        arrays["slots"] = model.uim.slots_per_item
        arrays["projection"] = model.projection
        users = sorted(model.counts_by_user)
        arrays["user_counts"] = np.stack([model.counts_by_user[u] for u in users]) if users else np.zeros((0, len(model.catalog.items)))
        meta["users"] = users
        meta["matrix_users"] = model.uim.users
        meta["factors"] = model.factors
    elif isinstance(model, SknnModel):
        arrays["vectors"] = model.index.vectors
        arrays["purchases"] = model.index.purchases
        meta.update(k_neighbors=model.k_neighbors, boost=model.boost, boost_mode=model.boost_mode,
                    vocab={"sections": list(model.vocab.sections), "objects": list(model.vocab.objects),
                           "types": list(model.vocab.types)})
        meta["model_kind"] = "baseline:sknn"
    elif isinstance(model, (DemographicModel, Gru4RecModel)):
        arrays.update({k: v.data for k, v in model.params.items()})
        meta.update(model.meta)
        if isinstance(model, DemographicModel):
            arrays["feat_mean"] = model.feat_mean
            arrays["feat_scale"] = model.feat_scale
        else:
            meta["model_kind"] = "baseline:gru4rec"
            meta["hidden"] = model.hidden
            meta["vocab"] = {"sections": list(model.vocab.sections), "objects": list(model.vocab.objects),
                             "types": list(model.vocab.types)}
    else:
        raise ValueError(f"cannot save baseline of type {type(model).__name__}")
    save_checkpoint(path, arrays, meta)


def load_baseline(path, profiles: dict | None = None):
    from .dataio import ActionVocabulary

    arrays, meta = load_checkpoint(path)
    kind = meta.get("model_kind", "")
    if not kind.startswith("baseline:"):
        raise ValueError(f"{path}: not a baseline checkpoint")
    kind = kind.split(":", 1)[1]
    catalog = Catalog(items=meta["catalog_items"], coverage_of=meta["coverage_of"])
    if kind == "popular":
        return PopularModel(catalog, arrays["counts"])
    if kind == "random":
        return RandomModel(catalog, meta["seed"])
    if kind == "svd":
        uim = UserItemMatrix(users=meta["matrix_users"], items=list(catalog.items),
                             slots_per_item=arrays["slots"].astype(int), matrix=arrays["matrix"])
        counts = {u: arrays["user_counts"][i] for i, u in enumerate(meta["users"])}
        return SvdModel(catalog=catalog, uim=uim, projection=arrays["projection"],
                        counts_by_user=counts, factors=meta["factors"])
    if kind == "sknn":
        vocab = ActionVocabulary(**meta["vocab"])
        return SknnModel(catalog=catalog, vocab=vocab,
                         index=NeighborIndex(vectors=arrays["vectors"], purchases=arrays["purchases"]),
                         k_neighbors=meta["k_neighbors"], boost=meta["boost"], boost_mode=meta["boost_mode"])
    if kind == "demo":
        params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()
                  if k not in ("feat_mean", "feat_scale")}
        return DemographicModel(catalog=catalog, params=params, feat_mean=arrays["feat_mean"],
                                feat_scale=arrays["feat_scale"], profiles=profiles or {}, meta=meta)
    if kind == "gru4rec":
        vocab = ActionVocabulary(**meta["vocab"])
        params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
        return Gru4RecModel(catalog=catalog, vocab=vocab, concat=meta.get("concat", False),
                            hidden=meta["hidden"], params=params, meta=meta)
    raise ValueError(f"unknown baseline kind {kind!r}")
