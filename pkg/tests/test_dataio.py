import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossrec.dataio import (
    DEMOGRAPHIC_FIELDS,
    NO_OBJECT,
    SECONDS_PER_DAY,
    Action,
    ActionVocabulary,
    Catalog,
    DataError,
    PurchaseEvent,
    Session,
    UserProfile,
    binarize_action,
    binarize_session,
    build_censored_labels,
    eligibility_mask,
    format_timestamp,
    ingest,
    parse_timestamp,
)
from crossrec.segmentation import Task

from conftest import write_dataset


class TestTimestamps:
    def test_iso_with_z_suffix(self):
        assert parse_timestamp("2024-01-01T00:00:00Z") == 1704067200

    def test_iso_with_offset(self):
        assert parse_timestamp("2024-01-01T02:00:00+02:00") == 1704067200

    def test_naive_is_utc(self):
        assert parse_timestamp("2024-01-01T00:00:00") == 1704067200

    def test_epoch_integer(self):
        assert parse_timestamp("1704067200") == 1704067200

    def test_format_round_trip(self):
        assert parse_timestamp(format_timestamp(1704067200)) == 1704067200

    @pytest.mark.parametrize("bad", ["", "not-a-time", "2024-13-40T00:00:00", "12.5.3"])
    def test_bad_values(self, bad):
        with pytest.raises(ValueError):
            parse_timestamp(bad)


class TestCatalog:
    def test_base_items_and_index(self, catalog):
        assert catalog.base_items == ["car", "home", "travel"]
        assert catalog.index("home") == 1
        with pytest.raises(ValueError):
            catalog.index("boat")

    def test_coverage_must_reference_member_items(self):
        with pytest.raises(DataError):
            Catalog(items=["a"], coverage_of={"a": "ghost"})
        with pytest.raises(DataError):
            Catalog(items=["a"], coverage_of={"ghost": "a"})

    def test_coverage_cycle_rejected(self):
        with pytest.raises(DataError):
            Catalog(items=["a", "b"], coverage_of={"a": "b", "b": "a"})

    def test_duplicate_items_rejected(self):
        with pytest.raises(DataError):
            Catalog(items=["a", "a"], coverage_of={})


class TestVocabulary:
    def test_width_and_indices(self, vocab):
        assert vocab.width == 3 + 6 + 3
        a = Action("ecommerce", "item:car", "act", 0)
        s, o, t = vocab.indices(a)
        assert (s, o, t) == (0, 3 + 1, 3 + 6 + 0)

    def test_unknown_category_raises(self, vocab):
        with pytest.raises(KeyError, match="section"):
            vocab.indices(Action("webshop", "item:car", "act", 0))
        with pytest.raises(KeyError, match="object"):
            vocab.indices(Action("ecommerce", "item:boat", "act", 0))
        with pytest.raises(KeyError, match="type"):
            vocab.indices(Action("ecommerce", "item:car", "hover", 0))

    def test_decode_inverts_binarize(self, vocab):
        a = Action("account", "service:quote", "complete", 0)
        vec = binarize_action(a, vocab)
        assert vocab.decode(vec) == ("account", "service:quote", "complete")


@st.composite
def action_and_vocab(draw):
    sections = draw(st.lists(st.text("abcdef", min_size=1, max_size=4), min_size=1, max_size=4, unique=True))
    objects = draw(st.lists(st.text("ghijkl", min_size=1, max_size=4), min_size=1, max_size=5, unique=True))
    types = draw(st.lists(st.text("mnopqr", min_size=1, max_size=4), min_size=1, max_size=3, unique=True))
    v = ActionVocabulary(sections=sections, objects=objects, types=types)
    a = Action(draw(st.sampled_from(sections)), draw(st.sampled_from(objects)),
               draw(st.sampled_from(types)), 0)
    return a, v


class TestBinarize:
    @given(action_and_vocab())
    @settings(max_examples=60)
    def test_exactly_three_hot(self, av):
        a, v = av
        vec = binarize_action(a, v)
        assert vec.shape == (v.width,)
        assert vec.sum() == 3
        assert set(np.unique(vec)) <= {0.0, 1.0}
        s, o, t = v.indices(a)
        assert vec[s] == vec[o] == vec[t] == 1

    def test_session_matrix_stacks_rows(self, vocab):
        acts = [Action("ecommerce", "item:car", "act", 0), Action("account", "no-object", "start", 1)]
        m = binarize_session(acts, vocab)
        assert m.shape == (2, vocab.width)
        np.testing.assert_array_equal(m[0], binarize_action(acts[0], vocab))


class TestEligibility:
    def test_base_always_eligible_coverage_needs_base(self, catalog):
        profile = UserProfile("u", np.zeros(7), {"car": 0, "home": 1, "travel": 0, "roadside": 0})
        mask = eligibility_mask(profile, catalog)
        # car/home/travel are base items; roadside needs an owned car
        np.testing.assert_array_equal(mask, [True, True, True, False])
        profile.portfolio["car"] = 2
        np.testing.assert_array_equal(eligibility_mask(profile, catalog), [True, True, True, True])

    def test_missing_profile_enables_base_only(self, catalog):
        np.testing.assert_array_equal(eligibility_mask(None, catalog), [True, True, True, False])


def day(n):
    return n * SECONDS_PER_DAY


def _mini_task(starts, purchase_day, items):
    sessions = [Session("u", f"s{i}", day(d), []) for i, d in enumerate(starts)]
    return Task("u", sessions, PurchaseEvent("u", day(purchase_day), frozenset(items)))


class TestCensoredLabels:
    def test_hand_worked_case(self, catalog):
        # purchases: car day 5, home day 9; sessions day 0 and day 2
        task = _mini_task([0, 2], 5, ["car"])
        purchases = {"u": [PurchaseEvent("u", day(5), frozenset(["car"])),
                           PurchaseEvent("u", day(9), frozenset(["home"]))]}
        (y, u), = build_censored_labels([task], purchases, day(10), catalog)
        car, home = catalog.index("car"), catalog.index("home")
        assert (y[0, car], u[0, car]) == (5, 1)
        assert (y[1, car], u[1, car]) == (3, 1)
        assert (y[0, home], u[0, home]) == (9, 1)
        assert (y[1, home], u[1, home]) == (7, 1)
        travel = catalog.index("travel")
        assert (y[0, travel], u[0, travel]) == (10, 0)  # never bought: censored at end
        assert (y[1, travel], u[1, travel]) == (8, 0)

    def test_purchase_after_training_end_censors(self, catalog):
        task = _mini_task([0], 5, ["car"])
        purchases = {"u": [PurchaseEvent("u", day(5), frozenset(["car"])),
                           PurchaseEvent("u", day(9), frozenset(["home"]))]}
        (y, u), = build_censored_labels([task], purchases, day(8), catalog)
        home = catalog.index("home")
        assert (y[0, home], u[0, home]) == (8, 0)

    def test_same_instant_purchase_not_counted(self, catalog):
        task = _mini_task([5], 6, ["car"])
        purchases = {"u": [PurchaseEvent("u", day(5), frozenset(["car"]))]}
        (y, u), = build_censored_labels([task], purchases, day(10), catalog)
        assert u[0, catalog.index("car")] == 0  # strictly after the start only

    def test_fractional_days_floor(self, catalog):
        task = _mini_task([0], 2, ["car"])
        purchases = {"u": [PurchaseEvent("u", day(1) + 43200, frozenset(["car"]))]}
        (y, u), = build_censored_labels([task], purchases, day(10), catalog)
        assert (y[0, catalog.index("car")], u[0, catalog.index("car")]) == (1, 1)

    def test_training_end_before_session_start_raises(self, catalog):
        task = _mini_task([5], 6, ["car"])
        with pytest.raises(ValueError):
            build_censored_labels([task], {"u": []}, day(2), catalog)


GOOD_CATALOG = ["car,", "home,", "roadside,car"]


def good_files(tmp):
    events = [
        "u1,s1,2024-01-01T10:00:00Z,ecommerce,item:car,act",
        "u1,s1,2024-01-01T09:59:00Z,information,,start",
        "u1,s2,2024-01-03T10:00:00Z,ecommerce,item:car,act",
        "u2,s1,2024-01-02T10:00:00Z,account,service:quote,act",
    ]
    purchases = [
        "u1,2024-01-05T12:00:00Z,car",
        "u1,2024-01-05T12:00:00Z,roadside",
        "u2,2024-01-06T12:00:00Z,home",
    ]
    profiles = [
        "u1,34,1,50000,0,1,2,3,1,0,0",
        "u2,55,2,70000,1,0,0,1,0,2,1",
    ]
    return write_dataset(tmp, events, purchases, profiles, GOOD_CATALOG)


class TestIngest:
    def test_clean_files_load_fully(self, tmp_path):
        p = good_files(tmp_path)
        ds = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        assert sum(ds.rejects.values()) == 0
        assert ds.catalog.items == ["car", "home", "roadside"]
        assert set(ds.sessions) == {"u1", "u2"}
        assert len(ds.sessions["u1"]) == 2

    def test_actions_sorted_within_session(self, tmp_path):
        p = good_files(tmp_path)
        ds = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        s1 = ds.sessions["u1"][0]
        times = [a.timestamp for a in s1.actions]
        assert times == sorted(times)
        assert s1.start_time == times[0]
        assert s1.actions[0].act_type == "start"

    def test_empty_object_becomes_placeholder(self, tmp_path):
        p = good_files(tmp_path)
        ds = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        assert ds.sessions["u1"][0].actions[0].object == NO_OBJECT

    def test_purchases_group_by_user_and_time(self, tmp_path):
        p = good_files(tmp_path)
        ds = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        assert len(ds.purchases["u1"]) == 1
        assert ds.purchases["u1"][0].items == frozenset({"car", "roadside"})

    def test_vocab_ordered_by_frequency_then_id(self, tmp_path):
        p = good_files(tmp_path)
        ds = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        assert ds.vocab.objects[0] == "item:car"  # 2 occurrences beat 1
        assert ds.vocab.sections[0] == "account" or ds.vocab.sections.index("account") <= 2

    def test_profiles_parse_demographics_and_portfolio(self, tmp_path):
        p = good_files(tmp_path)
        ds = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        prof = ds.profiles["u1"]
        assert len(prof.demographics) == len(DEMOGRAPHIC_FIELDS)
        assert prof.demographics[0] == 34
        assert prof.portfolio == {"car": 1, "home": 0, "roadside": 0}

    def test_malformed_rows_rejected_and_counted(self, tmp_path):
        events = [
            "u1,s1,2024-01-01T10:00:00Z,ecommerce,item:car,act",
            "u1,s1,2024-01-01T10:01:00Z,ecommerce,item:car,act",
            "u1,s1,2024-01-01T10:02:00Z,ecommerce,item:car,act",
            "u1,s1,not-a-time,ecommerce,item:car,act",  # bad timestamp
            "u1,s1,2024-01-01T10:03:00Z,ecommerce,item:ghost,act",  # unknown item
            ",s1,2024-01-01T10:04:00Z,ecommerce,item:car,act",  # no user
            "u1,s1,2024-01-01T10:05:00Z,,item:car,act",  # no section
        ]
        purchases = ["u1,2024-01-05T12:00:00Z,car", "u1,bad-ts,car", "u1,2024-01-06T12:00:00Z,ghost"]
        profiles = ["u1,34,1,50000,0,1,2,3,1,0,0", "u2,34,1,50000,0,1,2,3,-1,0,0"]
        p = write_dataset(tmp_path, events, purchases, profiles, GOOD_CATALOG)
        ds = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        assert ds.rejects == {"events": 4, "purchases": 2, "profiles": 1, "catalog": 0}
        assert len(ds.sessions["u1"][0].actions) == 3
        assert "u2" not in ds.profiles

    def test_bad_header_is_fatal(self, tmp_path):
        p = good_files(tmp_path)
        p["events"].write_text("wrong,header\n", encoding="utf-8")
        with pytest.raises(DataError, match="header"):
            ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])

    def test_unknown_portfolio_column_is_fatal(self, tmp_path):
        p = good_files(tmp_path)
        text = p["profiles"].read_text(encoding="utf-8").replace("portfolio_car", "portfolio_boat")
        p["profiles"].write_text(text, encoding="utf-8")
        with pytest.raises(DataError, match="boat"):
            ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])

    def test_fingerprint_tracks_content(self, tmp_path):
        p = good_files(tmp_path)
        ds1 = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        ds2 = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        assert ds1.fingerprint == ds2.fingerprint
        with open(p["events"], "a", encoding="utf-8") as fh:
            fh.write("u2,s9,2024-01-04T10:00:00Z,account,,start\n")
        ds3 = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        assert ds3.fingerprint != ds1.fingerprint

    def test_summary_counts(self, tmp_path):
        p = good_files(tmp_path)
        ds = ingest(p["events"], p["purchases"], p["profiles"], p["catalog"])
        s = ds.summary()
        assert s["users"] == 2
        assert s["items"] == 3
        assert s["purchase_events"] == 2
        assert s["sessions"] == 3
        assert s["actions"] == 4
