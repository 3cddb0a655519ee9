"""Domain model and log ingestion.

Four delimited UTF-8 files describe a dataset:

* events: ``user_id,session_id,timestamp,section,object,type``
* purchases: ``user_id,timestamp,item_id`` (one row per item in an event)
* profiles: ``user_id,age,employment,income,residence,marital,children,
  education`` plus one ``portfolio_<item>`` count column per owned item kind
* catalog: ``item_id,base_item_id`` (blank base marks a base product)

The ``object`` column of the events file distinguishes what an action was
about: ``item:<id>`` references a catalog item, ``service:<name>`` a site
service, and an empty field means the action had no object. Item references
are validated against the catalog; unknown ones reject the row.

Timestamps are ISO-8601 and stored as integer epoch seconds (UTC). Naive
timestamps are taken as UTC.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

NO_OBJECT = "no-object"
ITEM_PREFIX = "item:"
SERVICE_PREFIX = "service:"
SECONDS_PER_DAY = 86400

DEMOGRAPHIC_FIELDS = ("age", "employment", "income", "residence", "marital", "children", "education")


class DataError(ValueError):
    """Fatal problem with an input file."""


def parse_timestamp(text: str) -> int:
    """ISO-8601 string or integer epoch seconds; 'Z' and naive UTC accepted."""
    t = text.strip()
    if t and (t.isdigit() or (t[0] == "-" and t[1:].isdigit())):
        return int(t)
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Action:
    section: str
    object: str
    act_type: str
    timestamp: int

    def key(self) -> tuple:
        return (self.section, self.object, self.act_type)


@dataclass
class Session:
    user_id: str
    session_id: str
    start_time: int
    actions: list

    @property
    def uid(self) -> tuple:
        """Instance identity used for split-leakage checks."""
        return (self.user_id, self.session_id)


@dataclass
class PurchaseEvent:
    user_id: str
    purchase_time: int
    items: frozenset


@dataclass
class Catalog:
    items: list
    coverage_of: dict  # coverage item -> base item

    def __post_init__(self):
        members = set(self.items)
        if len(members) != len(self.items):
            raise DataError("catalog: duplicate item ids")
        for cov, base in self.coverage_of.items():
            if cov not in members or base not in members:
                raise DataError(f"catalog: coverage pair ({cov!r}, {base!r}) references unknown item")
        for start in self.coverage_of:
            seen = set()
            node = start
            while node in self.coverage_of:
                if node in seen:
                    raise DataError(f"catalog: coverage cycle through {node!r}")
                seen.add(node)
                node = self.coverage_of[node]

    @property
    def base_items(self) -> list:
        return [i for i in self.items if i not in self.coverage_of]

    def index(self, item: str) -> int:
        return self.items.index(item)


@dataclass
class UserProfile:
    user_id: str
    demographics: np.ndarray  # age, employment, income, residence, marital, children, education
    portfolio: dict  # item -> owned count


@dataclass
class ActionVocabulary:
    sections: list
    objects: list
    types: list

    def __post_init__(self):
        self._sec = {s: i for i, s in enumerate(self.sections)}
        self._obj = {o: i for i, o in enumerate(self.objects)}
        self._typ = {t: i for i, t in enumerate(self.types)}

    @property
    def width(self) -> int:
        return len(self.sections) + len(self.objects) + len(self.types)

    def indices(self, a: Action) -> tuple:
        """Positions of the three one-hot blocks for ``a``; raises on unknowns."""
        try:
            i = self._sec[a.section]
        except KeyError:
            raise KeyError(f"unknown section {a.section!r}") from None
        try:
            j = self._obj[a.object]
        except KeyError:
            raise KeyError(f"unknown object {a.object!r}") from None
        try:
            k = self._typ[a.act_type]
        except KeyError:
            raise KeyError(f"unknown type {a.act_type!r}") from None
        ns = len(self.sections)
        return (i, ns + j, ns + len(self.objects) + k)

    def decode(self, vec: np.ndarray) -> tuple:
        """Inverse of :func:`binarize_action` for a well-formed vector."""
        ns, no = len(self.sections), len(self.objects)
        s = self.sections[int(np.argmax(vec[:ns]))]
        o = self.objects[int(np.argmax(vec[ns : ns + no]))]
        t = self.types[int(np.argmax(vec[ns + no :]))]
        return (s, o, t)


@dataclass
class Dataset:
    catalog: Catalog
    vocab: ActionVocabulary
    profiles: dict  # user_id -> UserProfile
    sessions: dict  # user_id -> list[Session] sorted by start_time
    purchases: dict  # user_id -> list[PurchaseEvent] sorted by time
    rejects: dict = field(default_factory=dict)
    fingerprint: str = ""

    @property
    def n_users(self) -> int:
        return len(set(self.sessions) | set(self.purchases))

    @property
    def n_sessions(self) -> int:
        return sum(len(s) for s in self.sessions.values())

    @property
    def n_actions(self) -> int:
        return sum(len(s.actions) for ss in self.sessions.values() for s in ss)

    @property
    def n_purchase_events(self) -> int:
        return sum(len(p) for p in self.purchases.values())

    def summary(self) -> dict:
        return {
            "users": self.n_users,
            "items": len(self.catalog.items),
            "purchase_events": self.n_purchase_events,
            "sessions": self.n_sessions,
            "actions": self.n_actions,
            "rejected_rows": dict(self.rejects),
            "fingerprint": self.fingerprint,
        }


def _ordered_vocab(counts: dict) -> list:
    """Frequency-descending with id-ascending tiebreak."""
    return [k for k, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


def _read_rows(path: Path, expected: list) -> tuple:
    """Return (header, rows) of a delimited file; header must start with ``expected``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if header is None or [h.strip() for h in header[: len(expected)]] != expected:
        raise DataError(f"{path}: expected header starting with {','.join(expected)}")
    return header, rows


def ingest(events_file, purchases_file, profiles_file, catalog_file) -> Dataset:
    """Load the four input files into a validated :class:`Dataset`.

    Malformed or unresolvable rows are dropped and counted per file under
    ``Dataset.rejects``; unreadable files and empty results are fatal.
    """
    events_file, purchases_file = Path(events_file), Path(purchases_file)
    profiles_file, catalog_file = Path(profiles_file), Path(catalog_file)
    rejects = {"events": 0, "purchases": 0, "profiles": 0, "catalog": 0}

    _, cat_rows = _read_rows(catalog_file, ["item_id", "base_item_id"])
    items, coverage = [], {}
    for row in cat_rows:
        if len(row) < 2 or not row[0].strip():
            rejects["catalog"] += 1
            continue
        item, base = row[0].strip(), row[1].strip()
        items.append(item)
        if base:
            coverage[item] = base
    if not items:
        raise DataError(f"{catalog_file}: no items")
    catalog = Catalog(items=items, coverage_of=coverage)
    item_set = set(items)

    # events: group rows into sessions per (user, session id)
    _, ev_rows = _read_rows(events_file, ["user_id", "session_id", "timestamp", "section", "object", "type"])
    raw_sessions: dict = {}
    sec_counts: dict = {}
    obj_counts: dict = {}
    typ_counts: dict = {}
    for row in ev_rows:
        if len(row) < 6 or not row[0].strip() or not row[1].strip():
            rejects["events"] += 1
            continue
        user, sid, ts_text, section, obj, typ = (c.strip() for c in row[:6])
        if not section or not typ:
            rejects["events"] += 1
            continue
        try:
            ts = parse_timestamp(ts_text)
        except ValueError:
            rejects["events"] += 1
            continue
        obj = obj or NO_OBJECT
        if obj.startswith(ITEM_PREFIX) and obj[len(ITEM_PREFIX) :] not in item_set:
            rejects["events"] += 1
            continue
        raw_sessions.setdefault((user, sid), []).append(Action(section, obj, typ, ts))
        sec_counts[section] = sec_counts.get(section, 0) + 1
        obj_counts[obj] = obj_counts.get(obj, 0) + 1
        typ_counts[typ] = typ_counts.get(typ, 0) + 1

    sessions: dict = {}
    for (user, sid), actions in raw_sessions.items():
        actions.sort(key=lambda a: a.timestamp)
        sessions.setdefault(user, []).append(Session(user, sid, actions[0].timestamp, actions))
    for user in sessions:
        sessions[user].sort(key=lambda s: (s.start_time, s.session_id))

    # purchases: one row per item, grouped into events by (user, timestamp)
    _, pu_rows = _read_rows(purchases_file, ["user_id", "timestamp", "item_id"])
    grouped: dict = {}
    for row in pu_rows:
        if len(row) < 3 or not row[0].strip():
            rejects["purchases"] += 1
            continue
        user, ts_text, item = (c.strip() for c in row[:3])
        if item not in item_set:
            rejects["purchases"] += 1
            continue
        try:
            ts = parse_timestamp(ts_text)
        except ValueError:
            rejects["purchases"] += 1
            continue
        grouped.setdefault((user, ts), set()).add(item)
    purchases: dict = {}
    for (user, ts), bought in sorted(grouped.items()):
        purchases.setdefault(user, []).append(PurchaseEvent(user, ts, frozenset(bought)))
    for user in purchases:
        purchases[user].sort(key=lambda p: p.purchase_time)

    # profiles
    header, pr_rows = _read_rows(profiles_file, ["user_id", *DEMOGRAPHIC_FIELDS])
    portfolio_cols = []
    for idx, name in enumerate(header):
        name = name.strip()
        if name.startswith("portfolio_"):
            item = name[len("portfolio_") :]
            if item not in item_set:
                raise DataError(f"{profiles_file}: column {name!r} names an unknown item")
            portfolio_cols.append((idx, item))
    profiles: dict = {}
    for row in pr_rows:
        if len(row) < len(header) or not row[0].strip():
            rejects["profiles"] += 1
            continue
        try:
            demo = np.array([float(row[i]) for i in range(1, 1 + len(DEMOGRAPHIC_FIELDS))])
            portfolio = {item: int(float(row[i])) for i, item in portfolio_cols}
        except ValueError:
            rejects["profiles"] += 1
            continue
        if any(v < 0 for v in portfolio.values()):
            rejects["profiles"] += 1
            continue
        profiles[row[0].strip()] = UserProfile(row[0].strip(), demo, portfolio)

    if not sessions or not purchases:
        raise DataError("empty dataset: no sessions or no purchase events after ingestion")

    vocab = ActionVocabulary(
        sections=_ordered_vocab(sec_counts),
        objects=_ordered_vocab(obj_counts),
        types=_ordered_vocab(typ_counts),
    )

    digest = hashlib.sha256()
    for p in (events_file, purchases_file, profiles_file, catalog_file):
        digest.update(p.read_bytes())
    rejected_total = sum(rejects.values())
    if rejected_total:
        log.warning("ingest: rejected %d malformed/unresolvable rows: %s", rejected_total, rejects)

    return Dataset(
        catalog=catalog,
        vocab=vocab,
        profiles=profiles,
        sessions=sessions,
        purchases=purchases,
        rejects=rejects,
        fingerprint=digest.hexdigest()[:16],
    )


def binarize_action(a: Action, v: ActionVocabulary) -> np.ndarray:
    """Concatenated one-hot encoding of (section, object, type); sums to 3."""
    vec = np.zeros(v.width)
    for pos in v.indices(a):
        vec[pos] = 1.0
    return vec


def binarize_session(actions: list, v: ActionVocabulary) -> np.ndarray:
    """Stack of action vectors, shape ``(n_actions, vocab width)``."""
    mat = np.zeros((len(actions), v.width))
    for r, a in enumerate(actions):
        for pos in v.indices(a):
            mat[r, pos] = 1.0
    return mat


def eligibility_mask(profile, catalog: Catalog) -> np.ndarray:
    """Per-item purchase eligibility in catalog order.

    Base products can always be (re)bought; a coverage item requires at
    least one owned unit of its base item. ``profile`` may be None,
    meaning an empty portfolio.
    """
    portfolio = profile.portfolio if profile is not None else {}
    mask = np.zeros(len(catalog.items), dtype=bool)
    for i, item in enumerate(catalog.items):
        base = catalog.coverage_of.get(item)
        mask[i] = True if base is None else portfolio.get(base, 0) >= 1
    return mask


def build_censored_labels(tasks: list, purchases_by_user: dict, training_end: int, catalog: Catalog) -> list:
    """Per-session-step censored day counts for the survival loss.

    For each task, returns ``(y, u)`` integer arrays of shape
    ``(n_sessions, n_items)``. ``u[i,k] = 1`` when the first purchase of
    item k strictly after session i's start falls at or before
    ``training_end``; then ``y[i,k]`` is the whole-day distance to that
    purchase. Otherwise ``y[i,k]`` is the whole-day distance to
    ``training_end``. Purchases after ``training_end`` are unseen, so they
    censor like no purchase at all.
    """
    n_items = len(catalog.items)
    item_idx = {item: i for i, item in enumerate(catalog.items)}
    out = []
    for task in tasks:
        starts = np.array([s.start_time for s in task.sessions])
        if np.any(starts > training_end):
            raise ValueError("training_end precedes a session start")
        # first purchase time of each item strictly after each session start
        times_by_item: dict = {}
        for ev in purchases_by_user.get(task.user_id, []):
            if ev.purchase_time > training_end:
                continue
            for item in ev.items:
                times_by_item.setdefault(item_idx[item], []).append(ev.purchase_time)
        y = (training_end - starts)[:, None] // SECONDS_PER_DAY * np.ones(n_items, dtype=int)
        u = np.zeros((len(starts), n_items), dtype=int)
        for k, times in times_by_item.items():
            t = np.sort(np.array(times))
            pos = np.searchsorted(t, starts, side="right")  # first purchase > start
            hit = pos < len(t)
            u[hit, k] = 1
            y[hit, k] = (t[pos[hit]] - starts[hit]) // SECONDS_PER_DAY
        out.append((y.astype(int), u))
    return out
