"""Synthetic browsing/purchase data with a planted preference rule.

Each generated user carries a latent preferred item k*. With probability
``rho`` their sessions contain e-commerce item views of k* and their
purchase is k*; the rest is uniform noise. Inter-session gaps mix a
short (hours) and a long (weeks) lognormal component so the session/task
segmentation has real structure to find. Demographics can be correlated
with k* to exercise the hybrid models and the fairness breakdown.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import DEMOGRAPHIC_FIELDS, format_timestamp

SECTIONS = ("ecommerce", "information", "account", "claims")
SECTION_PROBS = (0.45, 0.25, 0.20, 0.10)
EPOCH_START = 1704067200  # 2024-01-01T00:00:00Z
LOG_SHORT_GAP = math.log(3600.0)  # within-task: ~1 hour between session starts
LOG_LONG_GAP = math.log(30 * 86400.0)  # between tasks: ~30 days
SHORT_SIGMA = 0.8
LONG_SIGMA = 0.6


@dataclass
class SynthConfig:
    n_users: int = 1000
    n_items: int = 16
    n_base_items: int = 10
    n_service_objects: int = 3
    session_geometric_p: float = 0.46  # capped mean ~= 2.15 sessions/task
    max_sessions: int = 7
    session_length_lambda: float = 7.72  # plus the 3-action floor ~= 10.7 actions
    max_actions: int = 30
    rho: float = 0.9
    demo_corr: float = 0.5
    second_task_prob: float = 0.2
    multi_item_prob: float = 0.1
    signal_position: str = "all"  # "last" plants the rule only in each task's final session
    seed: int = 0

    def validate(self) -> None:
        if self.n_users < 1:
            raise ValueError("n_users must be positive")
        if not 2 <= self.n_base_items <= self.n_items:
            raise ValueError("need at least two base items and n_base_items <= n_items")
        if self.n_service_objects < 1:
            raise ValueError("n_service_objects must be positive")
        if not 0 < self.session_geometric_p <= 1:
            raise ValueError("session_geometric_p must be in (0, 1]")
        if self.max_sessions < 1 or self.max_actions < 3:
            raise ValueError("caps too small: need max_sessions >= 1 and max_actions >= 3")
        if self.session_length_lambda < 0:
            raise ValueError("session_length_lambda must be non-negative")
        for name in ("rho", "demo_corr", "second_task_prob", "multi_item_prob"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.signal_position not in ("all", "last"):
            raise ValueError("signal_position must be 'all' or 'last'")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def expected_sessions_per_task(cfg: SynthConfig) -> float:
    """Mean of the geometric session count after capping."""
    p, cap = cfg.session_geometric_p, cfg.max_sessions
    q = 1.0 - p
    mean = sum(n * p * q ** (n - 1) for n in range(1, cap))
    return mean + cap * q ** (cap - 1)


def expected_actions_per_session(cfg: SynthConfig) -> float:
    """Mean session length: 3-action floor plus a capped Poisson."""
    lam, cap = cfg.session_length_lambda, cfg.max_actions - 3
    pmf = [math.exp(-lam) * lam**j / math.factorial(j) for j in range(cap)]
    mean = sum(j * pj for j, pj in enumerate(pmf))
    return 3.0 + mean + cap * (1.0 - sum(pmf))


def _item_names(cfg: SynthConfig) -> tuple:
    width = max(2, len(str(cfg.n_items - 1)))
    base = [f"prod{i:0{width}d}" for i in range(cfg.n_base_items)]
    coverage = {}
    items = list(base)
    for i in range(cfg.n_base_items, cfg.n_items):
        name = f"cov{i:0{width}d}"
        items.append(name)
        coverage[name] = base[(i - cfg.n_base_items) % cfg.n_base_items]
    return items, coverage


def _planted_weights(n_base: int) -> np.ndarray:
    w = 1.0 / (np.arange(n_base) + 2.0)
    return w / w.sum()


def _noise_action(rng: np.random.Generator, items: list, services: list) -> tuple:
    section = SECTIONS[rng.choice(len(SECTIONS), p=SECTION_PROBS)]
    r = rng.random()
    if r < 0.30:
        obj = ""
    elif r < 0.65:
        obj = "service:" + services[rng.integers(len(services))]
    else:
        obj = "item:" + items[rng.integers(len(items))]
    typ = "act" if rng.random() < 0.85 else "complete"
    return section, obj, typ


def generate(cfg: SynthConfig, out_dir) -> dict:
    """Write the four input files under ``out_dir``; returns paths and counts.

    Output is byte-identical for a fixed config (single generator, fixed
    iteration order, integer timestamps).
    """
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)

    items, coverage = _item_names(cfg)
    base_items = items[: cfg.n_base_items]
    services = [f"svc{j}" for j in range(cfg.n_service_objects)]
    planted_p = _planted_weights(cfg.n_base_items)

    event_rows: list = []
    purchase_rows: list = []
    profile_rows: list = []
    n_sessions = 0

    for u in range(cfg.n_users):
        user = f"u{u:05d}"
        k_star = int(rng.choice(cfg.n_base_items, p=planted_p))
        portfolio = {i: 0 for i in items}
        owned = rng.choice(cfg.n_base_items, size=int(rng.integers(1, 4)), replace=False)
        for i in owned:
            portfolio[base_items[i]] = 2 if rng.random() < 0.15 else 1

        n_tasks = 1 + (rng.random() < cfg.second_task_prob)
        t = float(EPOCH_START + rng.uniform(0, 365 * 86400))
        sid = 0
        for _ in range(n_tasks):
            k_sessions = min(int(rng.geometric(cfg.session_geometric_p)), cfg.max_sessions)
            last_start = int(t)
            for s in range(k_sessions):
                n_sessions += 1
                sid += 1
                start = int(t)
                last_start = start
                length = 3 + min(int(rng.poisson(cfg.session_length_lambda)), cfg.max_actions - 3)
                actions = [(SECTIONS[rng.choice(len(SECTIONS), p=SECTION_PROBS)], "", "start")]
                for _ in range(length - 1):
                    actions.append(_noise_action(rng, items, services))
                eligible = s == k_sessions - 1 if cfg.signal_position == "last" else True
                if eligible and rng.random() < cfg.rho:
                    n_signal = min(1 + int(rng.random() < 0.6), length - 1)
                    for pos in rng.choice(np.arange(1, length), size=n_signal, replace=False):
                        # mixed types so no single action type carries the
                        # whole planted signal; only the item object does
                        typ = "act" if rng.random() < 0.6 else "complete"
                        actions[int(pos)] = ("ecommerce", "item:" + base_items[k_star], typ)
                ts = start
                for section, obj, typ in actions:
                    event_rows.append((user, f"s{sid:04d}", format_timestamp(ts), section, obj, typ))
                    ts += int(rng.uniform(5, 90))
                t = start + math.exp(rng.normal(LOG_SHORT_GAP, SHORT_SIGMA))
            purchase_time = last_start + int(math.exp(rng.normal(math.log(7200.0), 0.5)))
            bought = {base_items[k_star] if rng.random() < cfg.rho else items[rng.integers(cfg.n_items)]}
            if rng.random() < cfg.multi_item_prob:
                bought.add(items[rng.integers(cfg.n_items)])
            for item in sorted(bought):
                purchase_rows.append((user, format_timestamp(purchase_time), item))
                if item in coverage:
                    portfolio[coverage[item]] = max(portfolio[coverage[item]], 1)
            t = purchase_time + math.exp(rng.normal(LOG_LONG_GAP, LONG_SIGMA))

        if rng.random() < cfg.demo_corr:
            age = 20 + (k_star % 6) * 10 + int(rng.integers(0, 10))
            income = int(25000 + k_star * 9000 + rng.uniform(0, 5000))
        else:
            age = int(rng.integers(18, 81))
            income = int(rng.uniform(20000, 120000))
        demo = [age, int(rng.integers(0, 4)), income, int(rng.integers(0, 3)),
                int(rng.integers(0, 2)), int(rng.integers(0, 4)), int(rng.integers(0, 4))]
        profile_rows.append((user, demo, [portfolio[i] for i in items]))

    paths = {
        "events": out / "events.csv",
        "purchases": out / "purchases.csv",
        "profiles": out / "profiles.csv",
        "catalog": out / "catalog.csv",
    }
    with open(paths["catalog"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id", "base_item_id"])
        for item in items:
            w.writerow([item, coverage.get(item, "")])
    with open(paths["events"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "session_id", "timestamp", "section", "object", "type"])
        w.writerows(event_rows)
    with open(paths["purchases"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "timestamp", "item_id"])
        w.writerows(purchase_rows)
    with open(paths["profiles"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", *DEMOGRAPHIC_FIELDS, *[f"portfolio_{i}" for i in items]])
        for user, demo, counts in profile_rows:
            w.writerow([user, *demo, *counts])

    return {
        "paths": {k: str(v) for k, v in paths.items()},
        "counts": {
            "users": cfg.n_users,
            "sessions": n_sessions,
            "actions": len(event_rows),
            "purchase_rows": len(purchase_rows),
        },
        "config": cfg.as_dict(),
    }
