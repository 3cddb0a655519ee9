import numpy as np
import pytest

from crossrec.dataio import (
    Action,
    ActionVocabulary,
    Catalog,
    PurchaseEvent,
    Session,
    ingest,
)
from crossrec.prep import PrepConfig, run_pipeline
from crossrec.segmentation import Task
from crossrec.synth import SynthConfig, generate


@pytest.fixture
def catalog():
    return Catalog(items=["car", "home", "travel", "roadside"], coverage_of={"roadside": "car"})


@pytest.fixture
def vocab():
    return ActionVocabulary(
        sections=["ecommerce", "information", "account"],
        objects=["no-object", "item:car", "item:home", "item:travel", "item:roadside", "service:quote"],
        types=["act", "start", "complete"],
    )


def make_session(user, sid, start, specs):
    """specs: list of (section, object, type); timestamps step by 60s."""
    actions = [Action(sec, obj, typ, start + 60 * i) for i, (sec, obj, typ) in enumerate(specs)]
    return Session(user_id=user, session_id=sid, start_time=start, actions=actions)


def make_task(user, sessions, purchase_time, items):
    return Task(user_id=user, sessions=sessions, purchase=PurchaseEvent(user, purchase_time, frozenset(items)))


def browse_session(user, sid, start, item, vocab_obj=None, n=4):
    """A session of n actions: start, then views of the given item."""
    specs = [("information", "no-object", "start")]
    specs += [("ecommerce", f"item:{item}", "act")] * (n - 1)
    return make_session(user, sid, start, specs)


@pytest.fixture(scope="session")
def synth_prepped(tmp_path_factory):
    """Small synthetic dataset, ingested and prepped once for model tests."""
    d = tmp_path_factory.mktemp("synthdata")
    out = generate(SynthConfig(n_users=250, rho=0.9, seed=3), d)
    ds = ingest(out["paths"]["events"], out["paths"]["purchases"],
                out["paths"]["profiles"], out["paths"]["catalog"])
    return ds, run_pipeline(ds, PrepConfig())


def write_dataset(tmp, events, purchases, profiles, catalog_rows):
    """Write the four CSVs from row lists; returns the four paths."""
    paths = {}
    headers = {
        "events": "user_id,session_id,timestamp,section,object,type",
        "purchases": "user_id,timestamp,item_id",
        "profiles": None,
        "catalog": "item_id,base_item_id",
    }
    items = [r.split(",")[0] for r in catalog_rows]
    headers["profiles"] = ("user_id,age,employment,income,residence,marital,children,education,"
                           + ",".join(f"portfolio_{i}" for i in items))
    for name, rows in (("events", events), ("purchases", purchases),
                       ("profiles", profiles), ("catalog", catalog_rows)):
        p = tmp / f"{name}.csv"
        p.write_text("\n".join([headers[name], *rows]) + "\n", encoding="utf-8")
        paths[name] = p
    return paths


def rng_weights(shapes, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(s) * 0.3 for s in shapes]
