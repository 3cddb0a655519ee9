"""Ranking evaluation: post filter, top-k metrics, and the study runners.

A model enters evaluation as a plain scoring callable ``task -> scores``
so recommenders and baselines share one harness. Reports keep per-user
rows (metrics plus the user id) so fairness breakdowns can re-aggregate
them later.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .dataio import Dataset, eligibility_mask
from .prep import PrepConfig, run_pipeline
from .segmentation import Task, TaskThreshold

log = logging.getLogger(__name__)

METRICS = ("hr", "precision", "recall", "mrr", "ap")


def apply_post_filter(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Force ineligible items below every eligible one.

    Ineligible scores become min(scores) - 1. If nothing is eligible the
    scores pass through unchanged with a warning.
    """
    scores = np.asarray(scores, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        log.warning("post filter: no eligible items, scores left unchanged")
        return scores.copy()
    out = scores.copy()
    out[~mask] = scores.min() - 1.0
    return out


def rank_items(scores: np.ndarray, item_ids: list) -> list:
    """Item ids by descending score; ties broken by ascending item id."""
    order = sorted(range(len(item_ids)), key=lambda i: (-scores[i], item_ids[i]))
    return [item_ids[i] for i in order]


def metrics_at_k(ranked: list, purchased: set, k: int) -> dict:
    """HR, Precision, Recall, MRR and truncated AP at cutoff ``k``."""
    if not purchased:
        raise ValueError("purchased set is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    top = ranked[:k]
    hits = [i for i, item in enumerate(top) if item in purchased]
    n_hits = len(hits)
    mrr = 1.0 / (hits[0] + 1) if hits else 0.0
    ap = 0.0
    if hits:
        precisions = [(j + 1) / (r + 1) for j, r in enumerate(hits)]  # P@r at each hit rank
        ap = sum(precisions) / min(len(purchased), k)
    return {
        "hr": 1.0 if hits else 0.0,
        "precision": n_hits / k,
        "recall": n_hits / len(purchased),
        "mrr": mrr,
        "ap": ap,
    }


@dataclass
class EvalReport:
    model: str
    k: int
    per_user: list  # rows: {"user_id": ..., metric: value, ...}
    means: dict
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "k": self.k,
            "means": {m: float(v) for m, v in self.means.items()},
            "n_users": len(self.per_user),
            "per_user": self.per_user,
            "meta": self.meta,
        }


def _mean_rows(rows: list) -> dict:
    return {m: float(np.mean([r[m] for r in rows])) for m in METRICS}


def evaluate(score_fn, tasks: list, dataset: Dataset, k: int = 3, model_name: str = "model",
             meta: dict | None = None) -> EvalReport:
    """Score, post-filter, rank and measure every test task."""
    if not tasks:
        raise ValueError("empty test set")
    items = dataset.catalog.items
    rows = []
    for task in tasks:
        scores = np.asarray(score_fn(task), dtype=float)
        mask = eligibility_mask(dataset.profiles.get(task.user_id), dataset.catalog)
        ranked = rank_items(apply_post_filter(scores, mask), items)
        row = metrics_at_k(ranked, set(task.purchase.items), k)
        row["user_id"] = task.user_id
        rows.append(row)
    return EvalReport(model=model_name, k=k, per_user=rows, means=_mean_rows(rows), meta=meta or {})


def per_step_curve(step_fn, tasks: list, dataset: Dataset, k: int = 3) -> dict:
    """Metric means using only the first j sessions, for each step j.

    ``step_fn(task)`` returns an (n_sessions, K) score matrix; row j-1 is
    the model's ranking after session j. Tasks contribute to every step
    up to their own session count.
    """
    items = dataset.catalog.items
    buckets: dict = {}
    for task in tasks:
        step_scores = np.asarray(step_fn(task), dtype=float)
        mask = eligibility_mask(dataset.profiles.get(task.user_id), dataset.catalog)
        purchased = set(task.purchase.items)
        for j in range(step_scores.shape[0]):
            ranked = rank_items(apply_post_filter(step_scores[j], mask), items)
            buckets.setdefault(j + 1, []).append(metrics_at_k(ranked, purchased, k))
    return {
        step: {**_mean_rows(rows), "n_tasks": len(rows)}
        for step, rows in sorted(buckets.items())
    }


# -- retraining studies --------------------------------------------------------
#
# These take a ``trainer`` callable: trainer(dataset, split) -> score_fn.
# The caller closes over model choice and hyperparameters; the study owns
# the data perturbation and the evaluation loop.


def _shuffled_tasks(tasks: list, rng: np.random.Generator) -> list:
    out = []
    for t in tasks:
        order = rng.permutation(len(t.sessions))
        out.append(Task(t.user_id, [t.sessions[i] for i in order], t.purchase))
    return out


def shuffle_study(trainer, dataset: Dataset, split, trials: int = 5, seed: int = 0, k: int = 3) -> dict:
    """Retrain on session-shuffled tasks ``trials`` times and average.

    Every split keeps its membership; only the in-task session order is
    permuted (fresh permutations per trial, deterministic in ``seed``).
    """
    reports = []
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence((seed, trial)))
        shuffled = dc_replace(
            split,
            train=_shuffled_tasks(split.train, rng),
            validation=_shuffled_tasks(split.validation, rng),
            test=_shuffled_tasks(split.test, rng),
        )
        score_fn = trainer(dataset, shuffled)
        reports.append(evaluate(score_fn, shuffled.test, dataset, k, model_name=f"shuffle-{trial}"))
    mean = {m: float(np.mean([r.means[m] for r in reports])) for m in METRICS}
    return {"trials": [r.as_dict() for r in reports], "mean": mean}


ABLATION_FACETS = ("object:items", "object:services", "type:start", "type:act", "type:complete")


def _facet_matcher(facet: str):
    kind, _, value = facet.partition(":")
    if kind == "section" and value:
        return lambda a: a.section == value
    if kind == "object" and value == "items":
        return lambda a: a.object.startswith("item:")
    if kind == "object" and value == "services":
        return lambda a: a.object.startswith("service:")
    if kind == "type" and value in ("start", "act", "complete"):
        return lambda a: a.act_type == value
    raise ValueError(f"unknown ablation facet {facet!r}")


def remove_facet(dataset: Dataset, facet: str) -> Dataset:
    """Raw dataset minus all actions matching the facet."""
    match = _facet_matcher(facet)
    removed = 0
    total = 0
    sessions_out = {}
    for user, sessions in dataset.sessions.items():
        new = []
        for s in sessions:
            kept = [a for a in s.actions if not match(a)]
            removed += len(s.actions) - len(kept)
            total += len(s.actions)
            if kept:  # session keeps its original start time
                new.append(dc_replace(s, actions=kept))
        if new:
            sessions_out[user] = new
    if removed == total:
        raise ValueError(f"facet {facet!r} removes every action")
    return dc_replace(dataset, sessions=sessions_out)


def ablate_actions(trainer, raw_dataset: Dataset, prep_cfg: PrepConfig, facets: list,
                   baseline_report: EvalReport, k: int = 3) -> dict:
    """Retrain and evaluate with each action facet removed.

    Facets with nothing to remove reuse the baseline report. Results carry
    the relative change of each metric against the baseline run.
    """
    out = {}
    for facet in facets:
        match = _facet_matcher(facet)
        present = any(match(a) for ss in raw_dataset.sessions.values() for s in ss for a in s.actions)
        if not present:
            report = baseline_report
        else:
            ablated = remove_facet(raw_dataset, facet)
            prep = run_pipeline(ablated, prep_cfg, TaskThreshold(prep_cfg.threshold_days, float(np.log(prep_cfg.threshold_days * 86400.0))))
            score_fn = trainer(prep.dataset, prep.split)
            report = evaluate(score_fn, prep.split.test, prep.dataset, k, model_name=f"ablate-{facet}")
        rel = {
            m: (report.means[m] - baseline_report.means[m]) / baseline_report.means[m]
            if baseline_report.means[m] else 0.0
            for m in METRICS
        }
        out[facet] = {"means": report.means, "relative_change": rel}
    return out


def threshold_sweep(trainer, raw_dataset: Dataset, prep_cfg: PrepConfig, thresholds: list, k: int = 3) -> dict:
    """Re-run prep, training and evaluation for each threshold (days)."""
    out = {}
    for days in thresholds:
        if days <= 0:
            raise ValueError("thresholds must be positive")
        cfg = dc_replace(prep_cfg, threshold_days=float(days))
        prep = run_pipeline(raw_dataset, cfg, TaskThreshold(float(days), float(np.log(float(days) * 86400.0))))
        score_fn = trainer(prep.dataset, prep.split)
        report = evaluate(score_fn, prep.split.test, prep.dataset, k, model_name=f"threshold-{days}")
        mean_sessions = float(np.mean([len(t.sessions) for t in prep.split.test]))
        out[float(days)] = {"means": report.means, "mean_test_sessions": mean_sessions}
    return out


# -- fairness -------------------------------------------------------------------


def _age_bucket(age: float) -> str:
    lo = int(age // 10) * 10
    return f"{lo}-{lo + 9}"


def group_breakdown(report: EvalReport, attribute: str, profiles: dict) -> dict:
    """Per-group metric means; weighted means recombine to the overall mean.

    ``age-bucket`` bins ages by decade; ``income-decile`` ranks test users
    into ten equal-frequency bins (1..10). Attributes outside the profile
    schema raise.
    """
    if attribute not in ("age-bucket", "income-decile"):
        raise ValueError(f"attribute missing from profile schema: {attribute!r}")

    def need(user_id):
        p = profiles.get(user_id)
        if p is None:
            raise ValueError(f"profile required for user {user_id!r}")
        return p

    if attribute == "age-bucket":
        group_of = {r["user_id"]: _age_bucket(need(r["user_id"]).demographics[0]) for r in report.per_user}
    else:
        incomes = {r["user_id"]: need(r["user_id"]).demographics[2] for r in report.per_user}
        order = sorted(incomes, key=lambda u: (incomes[u], u))
        n = len(order)
        group_of = {u: f"{min(i * 10 // n + 1, 10)}" for i, u in enumerate(order)}

    groups: dict = {}
    for row in report.per_user:
        groups.setdefault(group_of[row["user_id"]], []).append(row)
    table = {}
    for name in sorted(groups):
        rows = groups[name]
        table[name] = {**_mean_rows(rows), "share": len(rows) / len(report.per_user), "n_users": len(rows)}
    return table
