"""Task segmentation from inter-session times.

Users leave and return; the gap statistics of session start times are
bimodal on a log scale (within-task returns after minutes or hours, new
tasks after days or weeks). A two-component Gaussian mixture fitted to
pooled ``ln(seconds)`` gaps separates the two regimes, and the point where
the weighted component densities cross is the inactivity threshold used to
chain sessions into tasks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataio import SECONDS_PER_DAY, PurchaseEvent, Session

log = logging.getLogger(__name__)

MIN_SIGMA = 1e-6


@dataclass
class Gmm2:
    """Two-component univariate Gaussian mixture, means in ascending order."""

    weights: tuple
    means: tuple
    stdevs: tuple
    loglik_history: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        w1, w2 = self.weights
        if not (0.0 < w1 < 1.0 and 0.0 < w2 < 1.0) or abs(w1 + w2 - 1.0) > 1e-9:
            raise ValueError(f"weights must lie in (0,1) and sum to 1, got {self.weights}")
        if not all(np.isfinite(s) and s > 0 for s in self.stdevs):
            raise ValueError(f"stdevs must be finite positive, got {self.stdevs}")
        if self.means[0] > self.means[1]:
            self.means = (self.means[1], self.means[0])
            self.stdevs = (self.stdevs[1], self.stdevs[0])
            self.weights = (self.weights[1], self.weights[0])


@dataclass
class TaskThreshold:
    t_days: float
    log_t: float  # natural-log seconds

    def __post_init__(self):
        if self.t_days <= 0:
            raise ValueError("threshold must be positive")

    @property
    def t_seconds(self) -> float:
        return self.t_days * SECONDS_PER_DAY


@dataclass
class Task:
    """One purchase event and the chain of sessions leading up to it."""

    user_id: str
    sessions: list
    purchase: PurchaseEvent

    @property
    def purchase_time(self) -> int:
        return self.purchase.purchase_time

    @property
    def session_uids(self) -> set:
        return {s.uid for s in self.sessions}


def inter_session_times(sessions: list) -> np.ndarray:
    """Consecutive start-time differences in seconds; empty for < 2 sessions."""
    if len(sessions) < 2:
        return np.array([])
    starts = np.array([s.start_time for s in sessions], dtype=float)
    if np.any(np.diff(starts) < 0):
        raise ValueError("sessions must be sorted by start_time")
    return np.diff(starts)


def pooled_log_gaps(sessions_by_user: dict) -> np.ndarray:
    """ln(seconds) of all users' inter-session gaps; zero gaps floored at 1 s."""
    gaps = [inter_session_times(ss) for ss in sessions_by_user.values() if len(ss) >= 2]
    if not gaps:
        return np.array([])
    pooled = np.concatenate(gaps)
    return np.log(np.maximum(pooled, 1.0))


def _log_pdf(x: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    return -0.5 * np.log(2.0 * np.pi) - np.log(sigma) - 0.5 * ((x - mu) / sigma) ** 2


def fit_gmm_em(log_times, init: Gmm2 | None = None, max_iter: int = 500, tol: float = 1e-8) -> Gmm2:
    """Fit a 2-component mixture by EM.

    Initialization splits the sample at its median and takes each half's
    statistics, so the fit is deterministic. A component collapsing below
    sigma 1e-6 is reset once to the pooled statistics; a second collapse
    is an error.
    """
    x = np.asarray(log_times, dtype=float)
    if x.size < 2 or np.unique(x).size < 2:
        raise ValueError("fit_gmm_em needs at least 2 distinct values")
    if max_iter < 1 or tol <= 0:
        raise ValueError("max_iter must be >= 1 and tol > 0")

    if init is None:
        med = np.median(x)
        lo, hi = x[x <= med], x[x > med]
        if hi.size == 0:  # heavy ties at the median
            lo, hi = x[x < med], x[x >= med]
        mu = np.array([lo.mean(), hi.mean()])
        sigma = np.maximum([lo.std(), hi.std()], 1e-3)
        w = np.array([lo.size, hi.size], dtype=float) / x.size
        w = np.clip(w, 1e-6, 1.0 - 1e-6)
        w /= w.sum()
    else:
        mu = np.array(init.means, dtype=float)
        sigma = np.array(init.stdevs, dtype=float)
        w = np.array(init.weights, dtype=float)

    history = []
    prev_ll = -np.inf
    reinitialized = False
    for _ in range(max_iter):
        # E-step in log space
        joint = np.stack([np.log(w[i]) + _log_pdf(x, mu[i], sigma[i]) for i in range(2)])
        norm = np.logaddexp(joint[0], joint[1])
        resp = np.exp(joint - norm)
        ll = float(norm.sum())
        history.append(ll)

        # M-step
        nk = resp.sum(axis=1)
        dead = [i for i in range(2) if nk[i] < 1e-9]
        if not dead:
            w = nk / x.size
            mu = (resp @ x) / nk
            sigma = np.sqrt((resp * (x - mu[:, None]) ** 2).sum(axis=1) / nk)
            dead = [i for i in range(2) if sigma[i] < MIN_SIGMA]

        if dead:
            if reinitialized:
                raise ArithmeticError("degenerate mixture component after reinitialization")
            log.warning("fit_gmm_em: component(s) %s collapsed, reinitializing", dead)
            for i in dead:
                mu[i] = x.mean() + (i - 0.5) * x.std()
                sigma[i] = max(x.std(), 1e-3)
            w = np.array([0.5, 0.5])
            reinitialized = True

        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll

    w = np.clip(w, 1e-9, 1 - 1e-9)
    w = w / w.sum()
    return Gmm2(weights=tuple(w), means=tuple(mu), stdevs=tuple(sigma), loglik_history=history)


def intersection_threshold(g: Gmm2) -> TaskThreshold:
    """Crossing point of the two weighted densities, back-transformed to days.

    Equating w1*N(x;mu1,s1) = w2*N(x;mu2,s2) in log form gives a quadratic
    a2(x-mu2)^2 - a1(x-mu1)^2 + D = 0 with a_i = 1/(2 s_i^2) and
    D = ln(w1 s2 / (w2 s1)); equal variances reduce it to a linear equation.
    """
    (w1, w2), (mu1, mu2), (s1, s2) = g.weights, g.means, g.stdevs
    if not mu1 < mu2:
        raise ValueError("intersection requires distinct component means")
    a1, a2 = 1.0 / (2.0 * s1 * s1), 1.0 / (2.0 * s2 * s2)
    d = np.log(w1 * s2 / (w2 * s1))
    # coefficients of (a2-a1) x^2 - 2 (a2 mu2 - a1 mu1) x + (a2 mu2^2 - a1 mu1^2 + d) = 0
    qa = a2 - a1
    qb = -2.0 * (a2 * mu2 - a1 * mu1)
    qc = a2 * mu2 * mu2 - a1 * mu1 * mu1 + d
    if abs(qa) < 1e-12 * max(a1, a2):
        roots = np.array([-qc / qb])
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0:
            raise ValueError("components not separable")
        sq = np.sqrt(disc)
        roots = np.array([(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)])
    inside = roots[(roots > mu1) & (roots < mu2)]
    if inside.size == 0:
        raise ValueError("components not separable")
    x = float(inside[0])
    return TaskThreshold(t_days=float(np.exp(x)) / SECONDS_PER_DAY, log_t=x)


def estimate_threshold(sessions_by_user: dict) -> tuple:
    """Pool gaps across users, fit the mixture, return (Gmm2, TaskThreshold)."""
    logs = pooled_log_gaps(sessions_by_user)
    g = fit_gmm_em(logs)
    return g, intersection_threshold(g)


def segment_tasks(sessions: list, purchases: list, t, counters: dict | None = None) -> list:
    """Chain one user's sessions into purchase tasks.

    Sessions chain while consecutive start gaps stay within the threshold;
    a purchase closes the open chain and claims it, and any later session
    begins a new chain. A gap beyond the threshold also starts a fresh
    chain, orphaning the old one. Purchases arriving on an empty chain
    yield no task and are tallied under ``counters['dropped_purchases']``.

    ``t`` is a :class:`TaskThreshold` or a plain number of days.
    """
    t_seconds = t.t_seconds if isinstance(t, TaskThreshold) else float(t) * SECONDS_PER_DAY
    if t_seconds <= 0:
        raise ValueError("threshold must be positive")
    if counters is None:
        counters = {}
    counters.setdefault("dropped_purchases", 0)

    # merged chronological walk; purchases first at equal times so a session
    # starting exactly at the purchase instant falls into the next chain
    events = [(p.purchase_time, 0, p) for p in purchases] + [(s.start_time, 1, s) for s in sessions]
    events.sort(key=lambda e: (e[0], e[1]))

    tasks: list = []
    chain: list = []
    for _, kind, payload in events:
        if kind == 1:
            if chain and payload.start_time - chain[-1].start_time > t_seconds:
                chain = []
            chain.append(payload)
        else:
            if chain:
                tasks.append(Task(user_id=payload.user_id, sessions=list(chain), purchase=payload))
                chain = []
            else:
                counters["dropped_purchases"] += 1
    return tasks


def segment_all(sessions_by_user: dict, purchases_by_user: dict, t) -> tuple:
    """Run :func:`segment_tasks` for every user; returns (tasks, counters)."""
    counters = {"dropped_purchases": 0}
    tasks = []
    for user in sorted(purchases_by_user):
        tasks.extend(segment_tasks(sessions_by_user.get(user, []), purchases_by_user[user], t, counters))
    return tasks, counters
