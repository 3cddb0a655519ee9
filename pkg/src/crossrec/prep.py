"""Cleaning pipeline and temporal split.

Order of application: rare-frequency removal, consecutive-duplicate
collapse, session length bounds, task segmentation (see
:mod:`crossrec.segmentation`), recency capping, then the temporal split.
Every stage is a pure function returning new objects; counts of whatever
was dropped accumulate in a report dict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .dataio import ActionVocabulary, Catalog, Dataset, ITEM_PREFIX, PurchaseEvent, Session, _ordered_vocab
from .segmentation import Task, TaskThreshold, estimate_threshold, segment_all


@dataclass
class PrepConfig:
    min_category_freq: float = 0.001
    min_session_len: int = 3
    max_session_len: int = 30
    max_sessions: int = 7
    threshold_days: float = 10.0
    test_fraction: float = 0.10
    validation_fraction: float = 0.10

    def validate(self) -> None:
        if not 0.0 < self.min_category_freq < 1.0:
            raise ValueError("min_category_freq must be in (0,1)")
        if self.min_session_len < 1 or self.max_session_len < self.min_session_len:
            raise ValueError("session length bounds must satisfy 1 <= min <= max")
        if self.max_sessions < 1 or self.threshold_days <= 0:
            raise ValueError("max_sessions and threshold_days must be positive")
        for f in (self.test_fraction, self.validation_fraction):
            if not 0.0 < f < 1.0:
                raise ValueError("split fractions must be in (0,1)")


@dataclass
class Split:
    train: list
    validation: list
    test: list
    leakage_removed: int = 0


def clean_actions(dataset: Dataset, cfg: PrepConfig, report: dict | None = None) -> Dataset:
    """Drop rare items and rare action categories, then collapse duplicates.

    Frequencies are measured once, on the incoming data: items against the
    total purchase-row count, each category against the total action count.
    Removing an item erases it from the catalog, from purchase events and
    from actions referencing it; a coverage item whose base is removed
    becomes a plain base product. Exact consecutive repeats of the same
    (section, object, type) within a session collapse to their first
    occurrence.
    """
    if report is None:
        report = {}

    # item frequencies over purchase rows (an event contributes one row per item)
    item_counts = {i: 0 for i in dataset.catalog.items}
    total_rows = 0
    for events in dataset.purchases.values():
        for ev in events:
            for item in ev.items:
                item_counts[item] += 1
                total_rows += 1
    rare_items = {i for i, c in item_counts.items() if total_rows == 0 or c / total_rows < cfg.min_category_freq}
    keep_items = [i for i in dataset.catalog.items if i not in rare_items]
    if not keep_items:
        raise ValueError("clean_actions removed every item; lower min_category_freq")
    coverage = {
        c: b for c, b in dataset.catalog.coverage_of.items() if c not in rare_items and b not in rare_items
    }
    catalog = Catalog(items=keep_items, coverage_of=coverage)

    purchases = {}
    for user, events in dataset.purchases.items():
        kept = []
        for ev in events:
            items = frozenset(ev.items - rare_items)
            if items:
                kept.append(PurchaseEvent(user, ev.purchase_time, items))
        if kept:
            purchases[user] = kept

    # category frequencies over all actions
    sec_counts: dict = {}
    obj_counts: dict = {}
    typ_counts: dict = {}
    n_actions = 0
    for sessions in dataset.sessions.values():
        for s in sessions:
            for a in s.actions:
                sec_counts[a.section] = sec_counts.get(a.section, 0) + 1
                obj_counts[a.object] = obj_counts.get(a.object, 0) + 1
                typ_counts[a.act_type] = typ_counts.get(a.act_type, 0) + 1
                n_actions += 1

    def rare(counts):
        return {k for k, c in counts.items() if c / n_actions < cfg.min_category_freq}

    rare_sec, rare_obj, rare_typ = rare(sec_counts), rare(obj_counts), rare(typ_counts)
    rare_obj |= {ITEM_PREFIX + i for i in rare_items}

    removed_actions = 0
    removed_dups = 0
    kept_sec: dict = {}
    kept_obj: dict = {}
    kept_typ: dict = {}
    sessions_out: dict = {}
    for user, sessions in dataset.sessions.items():
        new_sessions = []
        for s in sessions:
            actions = []
            for a in s.actions:
                if a.section in rare_sec or a.object in rare_obj or a.act_type in rare_typ:
                    removed_actions += 1
                    continue
                if actions and a.key() == actions[-1].key():
                    removed_dups += 1
                    continue
                actions.append(a)
            for a in actions:
                kept_sec[a.section] = kept_sec.get(a.section, 0) + 1
                kept_obj[a.object] = kept_obj.get(a.object, 0) + 1
                kept_typ[a.act_type] = kept_typ.get(a.act_type, 0) + 1
            new_sessions.append(Session(user, s.session_id, s.start_time, actions))
        sessions_out[user] = new_sessions

    vocab = ActionVocabulary(
        sections=_ordered_vocab(kept_sec), objects=_ordered_vocab(kept_obj), types=_ordered_vocab(kept_typ)
    )
    report.update(
        rare_items_removed=len(rare_items),
        rare_actions_removed=removed_actions,
        duplicate_actions_removed=removed_dups,
    )
    return replace(dataset, catalog=catalog, vocab=vocab, sessions=sessions_out, purchases=purchases)


def bound_sessions(dataset: Dataset, cfg: PrepConfig, tasks: list | None = None, report: dict | None = None):
    """Drop short sessions and truncate long ones to their first actions.

    When ``tasks`` is passed their session lists are re-linked to the
    surviving sessions; a task left with none is dropped and counted.
    Returns the dataset, or ``(dataset, tasks)`` when tasks were given.
    """
    if report is None:
        report = {}
    dropped = truncated = 0
    surviving: dict = {}
    sessions_out: dict = {}
    for user, sessions in dataset.sessions.items():
        kept = []
        for s in sessions:
            if len(s.actions) < cfg.min_session_len:
                dropped += 1
                continue
            actions = s.actions
            if len(actions) > cfg.max_session_len:
                actions = actions[: cfg.max_session_len]
                truncated += 1
            s2 = Session(user, s.session_id, s.start_time, actions)
            kept.append(s2)
            surviving[s2.uid] = s2
        if kept:
            sessions_out[user] = kept
    report.update(short_sessions_dropped=dropped, sessions_truncated=truncated)
    out = replace(dataset, sessions=sessions_out)

    if tasks is None:
        return out
    new_tasks = []
    empty = 0
    for task in tasks:
        linked = [surviving[s.uid] for s in task.sessions if s.uid in surviving]
        if linked:
            new_tasks.append(Task(task.user_id, linked, task.purchase))
        else:
            empty += 1
    report.update(tasks_dropped_empty=empty)
    return out, new_tasks


def cap_recency(task: Task, cfg: PrepConfig) -> Task:
    """Keep the trailing run of sessions with gaps within threshold, max 7."""
    sessions = task.sessions
    limit = cfg.threshold_days * 86400.0
    cut = 0
    for i in range(len(sessions) - 1, 0, -1):
        if sessions[i].start_time - sessions[i - 1].start_time > limit:
            cut = i
            break
    kept = sessions[cut:][-cfg.max_sessions :]
    if len(kept) == len(sessions):
        return task
    return Task(task.user_id, kept, task.purchase)


def temporal_split(tasks: list, cfg: PrepConfig) -> Split:
    """Latest purchases to test, next-latest to validation, leakage removed.

    Tasks sort by purchase time with user id breaking ties. The newest
    ceil(test_fraction * n) form the test set; of the remainder the newest
    ceil(validation_fraction * m) form validation. Training tasks sharing
    any session instance with a held-out task are removed and counted.
    """
    if len(tasks) < 10:
        raise ValueError("split too small: need at least 10 tasks")
    ordered = sorted(tasks, key=lambda t: (t.purchase_time, t.user_id))
    n_test = math.ceil(cfg.test_fraction * len(ordered))
    test = ordered[-n_test:]
    rest = ordered[:-n_test]
    n_val = math.ceil(cfg.validation_fraction * len(rest))
    validation = rest[-n_val:]
    train = rest[:-n_val]
    if not train:
        raise ValueError("split too small: no training tasks remain")

    held_out = set()
    for t in test + validation:
        held_out |= t.session_uids
    kept = [t for t in train if not (t.session_uids & held_out)]
    return Split(train=kept, validation=validation, test=test, leakage_removed=len(train) - len(kept))


@dataclass
class PrepResult:
    dataset: Dataset
    tasks: list
    split: Split
    threshold: TaskThreshold
    gmm: object = None
    report: dict = field(default_factory=dict)


def run_pipeline(dataset: Dataset, cfg: PrepConfig, threshold: TaskThreshold | None = None) -> PrepResult:
    """Full preprocessing chain from an ingested dataset to a 3-way split.

    The inactivity threshold is estimated from the cleaned sessions unless
    one is supplied.
    """
    cfg.validate()
    report: dict = {}
    ds = clean_actions(dataset, cfg, report)
    ds = bound_sessions(ds, cfg, report=report)

    gmm = None
    if threshold is None:
        gmm, threshold = estimate_threshold(ds.sessions)
        cfg = replace(cfg, threshold_days=threshold.t_days)
    report["threshold_days"] = threshold.t_days

    tasks, seg_counts = segment_all(ds.sessions, ds.purchases, threshold)
    report.update(seg_counts)
    tasks = [cap_recency(t, cfg) for t in tasks]
    split = temporal_split(tasks, cfg)
    report.update(
        tasks_total=len(tasks),
        train_tasks=len(split.train),
        validation_tasks=len(split.validation),
        test_tasks=len(split.test),
        leakage_removed=split.leakage_removed,
    )
    return PrepResult(dataset=ds, tasks=tasks, split=split, threshold=threshold, gmm=gmm, report=report)
