import dataclasses
import math
from pathlib import Path

import numpy as np
import pytest

from crossrec.dataio import ingest
from crossrec.segmentation import fit_gmm_em, intersection_threshold, pooled_log_gaps
from crossrec.synth import (
    SynthConfig,
    expected_actions_per_session,
    expected_sessions_per_task,
    generate,
)


@pytest.fixture(scope="module")
def bigsynth(tmp_path_factory):
    d = tmp_path_factory.mktemp("bigsynth")
    out = generate(SynthConfig(n_users=1500, rho=0.9, seed=11), d)
    ds = ingest(out["paths"]["events"], out["paths"]["purchases"],
                out["paths"]["profiles"], out["paths"]["catalog"])
    return out, ds


def read_all(paths):
    return {k: Path(p).read_bytes() for k, p in paths.items()}


class TestConfig:
    def test_defaults_valid(self):
        SynthConfig().validate()

    @pytest.mark.parametrize(
        "field,value",
        [
            ("n_users", 0),
            ("n_base_items", 1),
            ("n_base_items", 20),
            ("n_service_objects", 0),
            ("session_geometric_p", 0.0),
            ("max_sessions", 0),
            ("max_actions", 2),
            ("session_length_lambda", -1.0),
            ("rho", 1.5),
            ("demo_corr", -0.1),
            ("second_task_prob", 2.0),
            ("multi_item_prob", -1.0),
            ("signal_position", "first"),
        ],
    )
    def test_bad_values(self, field, value):
        with pytest.raises(ValueError):
            dataclasses.replace(SynthConfig(), **{field: value}).validate()

    def test_as_dict_covers_all_fields(self):
        cfg = SynthConfig(n_users=5, seed=9)
        d = cfg.as_dict()
        assert d["n_users"] == 5 and d["seed"] == 9
        assert set(d) == set(cfg.__dataclass_fields__)


class TestExpectationHelpers:
    """Closed forms against brute-force simulation."""

    def test_sessions_per_task_simulated(self):
        cfg = SynthConfig()
        rng = np.random.default_rng(0)
        draws = np.minimum(rng.geometric(cfg.session_geometric_p, size=400_000),
                           cfg.max_sessions)
        assert expected_sessions_per_task(cfg) == pytest.approx(draws.mean(), rel=0.01)

    def test_actions_per_session_simulated(self):
        cfg = SynthConfig()
        rng = np.random.default_rng(1)
        draws = 3 + np.minimum(rng.poisson(cfg.session_length_lambda, size=400_000),
                               cfg.max_actions - 3)
        assert expected_actions_per_session(cfg) == pytest.approx(draws.mean(), rel=0.01)

    def test_degenerate_caps(self):
        cfg = SynthConfig(max_sessions=1)
        assert expected_sessions_per_task(cfg) == pytest.approx(1.0)
        cfg = SynthConfig(session_length_lambda=0.0)
        assert expected_actions_per_session(cfg) == pytest.approx(3.0)


class TestDeterminism:
    def test_byte_identical_across_runs(self, tmp_path):
        cfg = SynthConfig(n_users=40, seed=5)
        out1 = generate(cfg, tmp_path / "a")
        out2 = generate(SynthConfig(n_users=40, seed=5), tmp_path / "b")
        assert read_all(out1["paths"]) == read_all(out2["paths"])
        assert out1["counts"] == out2["counts"]

    def test_seed_changes_output(self, tmp_path):
        out1 = generate(SynthConfig(n_users=40, seed=5), tmp_path / "a")
        out2 = generate(SynthConfig(n_users=40, seed=6), tmp_path / "b")
        assert read_all(out1["paths"])["events"] != read_all(out2["paths"])["events"]


class TestGeneratedData:
    def test_ingests_with_zero_rejects(self, bigsynth):
        out, ds = bigsynth
        assert all(v == 0 for v in ds.rejects.values())
        assert ds.n_users == out["counts"]["users"]
        assert sum(len(ss) for ss in ds.sessions.values()) == out["counts"]["sessions"]
        assert sum(len(s.actions) for ss in ds.sessions.values() for s in ss) == \
            out["counts"]["actions"]

    def test_catalog_shape(self, bigsynth):
        _, ds = bigsynth
        assert len(ds.catalog.items) == 16
        assert len(ds.catalog.base_items) == 10
        assert ds.catalog.coverage_of["cov10"] == "prod00"
        assert ds.catalog.coverage_of["cov15"] == "prod05"

    def test_empirical_means_match_helpers(self, bigsynth):
        out, ds = bigsynth
        cfg = SynthConfig(**out["config"])
        n_tasks = sum(len(evs) for evs in ds.purchases.values())
        sess_per_task = out["counts"]["sessions"] / n_tasks
        acts_per_sess = out["counts"]["actions"] / out["counts"]["sessions"]
        assert sess_per_task == pytest.approx(expected_sessions_per_task(cfg), rel=0.10)
        assert acts_per_sess == pytest.approx(expected_actions_per_session(cfg), rel=0.10)

    def test_sessions_sorted_and_purchases_after_last_session(self, bigsynth):
        _, ds = bigsynth
        for user, sessions in ds.sessions.items():
            starts = [s.start_time for s in sessions]
            assert starts == sorted(starts)
        # each purchase follows some session of its user
        for user, events in ds.purchases.items():
            first_start = ds.sessions[user][0].start_time
            for ev in events:
                assert ev.purchase_time > first_start

    def test_every_session_opens_with_start_action(self, bigsynth):
        _, ds = bigsynth
        for sessions in ds.sessions.values():
            for s in sessions:
                assert s.actions[0].act_type == "start"
                assert s.actions[0].object == "no-object"

    def test_coverage_purchase_implies_base_ownership(self, bigsynth):
        _, ds = bigsynth
        checked = 0
        for user, events in ds.purchases.items():
            for ev in events:
                for item in ev.items:
                    base = ds.catalog.coverage_of.get(item)
                    if base is not None:
                        assert ds.profiles[user].portfolio.get(base, 0) >= 1
                        checked += 1
        assert checked > 10  # coverage purchases do occur

    def test_gap_distribution_is_bimodal(self, bigsynth):
        _, ds = bigsynth
        logs = pooled_log_gaps(ds.sessions)
        gmm = fit_gmm_em(logs)
        # design: within-task gaps around ln(3600) ~= 8.19, across-task gaps
        # around ln(30 days) plus the purchase delay ~= 14.8
        assert abs(gmm.means[0] - math.log(3600.0)) < 0.6
        assert abs(gmm.means[1] - math.log(30 * 86400.0)) < 0.6
        t = intersection_threshold(gmm)
        assert 0.3 < t.t_days < 8.0


def most_browsed_item(sessions):
    counts = {}
    for s in sessions:
        for a in s.actions:
            if a.object.startswith("item:"):
                counts[a.object[5:]] = counts.get(a.object[5:], 0) + 1
    return max(sorted(counts), key=lambda k: counts[k]) if counts else None


class TestPlantedSignal:
    def test_high_rho_browsing_predicts_purchase(self, bigsynth):
        _, ds = bigsynth
        hits = total = 0
        for user, events in ds.purchases.items():
            mode = most_browsed_item(ds.sessions[user])
            for ev in events:
                total += 1
                hits += mode in ev.items
        assert hits / total > 0.7

    def test_zero_rho_browsing_is_uninformative(self, tmp_path):
        out = generate(SynthConfig(n_users=800, rho=0.0, seed=2), tmp_path)
        ds = ingest(out["paths"]["events"], out["paths"]["purchases"],
                    out["paths"]["profiles"], out["paths"]["catalog"])
        hits = total = 0
        for user, events in ds.purchases.items():
            mode = most_browsed_item(ds.sessions[user])
            for ev in events:
                total += 1
                hits += mode in ev.items
        assert hits / total < 0.2  # chance level is ~1/16

    def test_signal_position_last(self, tmp_path):
        cfg = SynthConfig(n_users=400, rho=1.0, signal_position="last",
                          second_task_prob=0.0, multi_item_prob=0.0, seed=7)
        out = generate(cfg, tmp_path)
        ds = ingest(out["paths"]["events"], out["paths"]["purchases"],
                    out["paths"]["profiles"], out["paths"]["catalog"])
        in_last = in_earlier = n_multi = 0
        for user, events in ds.purchases.items():
            [ev] = events
            [item] = list(ev.items)
            token = f"item:{item}"
            sessions = ds.sessions[user]
            if len(sessions) < 2:
                continue
            n_multi += 1
            in_last += any(a.object == token for a in sessions[-1].actions)
            in_earlier += any(a.object == token for s in sessions[:-1] for a in s.actions)
        assert n_multi > 50
        assert in_last / n_multi > 0.95
        assert in_earlier / n_multi < 0.6  # only noise occurrences

    def test_demo_correlation_links_age_to_planted_item(self, bigsynth):
        # with demo_corr > 0 a slice of users gets age = 20 + (k* % 6) * 10;
        # purchases of the top planted item should skew young
        _, ds = bigsynth
        ages_prod00, ages_prod05 = [], []
        for user, events in ds.purchases.items():
            age = ds.profiles[user].demographics[0]
            for ev in events:
                if "prod00" in ev.items:
                    ages_prod00.append(age)
                if "prod05" in ev.items:
                    ages_prod05.append(age)
        assert np.mean(ages_prod00) < np.mean(ages_prod05)
