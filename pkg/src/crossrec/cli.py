"""Command-line pipeline: synth -> ingest -> segment -> prep -> train -> eval -> studies.

Everything that affects results lives in a JSON config; flags only pick
the subcommand, the config file and the output directory. Logs go to
stderr, machine-readable artifacts to files. Every artifact embeds the
config hash and seed. Exit codes: 0 ok, 1 runtime failure, 2 bad config.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import replace as dc_replace
from pathlib import Path

import numpy as np

from . import baselines, figures
from .dataio import Dataset, ingest
from .evaluation import (
    ABLATION_FACETS,
    METRICS,
    ablate_actions,
    evaluate,
    group_breakdown,
    per_step_curve,
    shuffle_study,
    threshold_sweep,
)
from .numcore.checkpoint import load_checkpoint
from .numcore.train import TrainConfig
from .prep import PrepConfig, run_pipeline
from .recmodels import (
    HEAD_KINDS,
    extract_attention,
    load_model,
    model_input,
    predict_steps,
    preset_config,
    recommend,
    save_model,
    train_model,
)
from .segmentation import TaskThreshold, fit_gmm_em, intersection_threshold, pooled_log_gaps
from .synth import SynthConfig, generate

log = logging.getLogger("crossrec")


class ConfigError(Exception):
    """Invalid configuration; reported with the offending field, exit 2."""


# -- config plumbing ------------------------------------------------------------


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path}: top level must be a JSON object")
    return cfg


def _build(dc_cls, values: dict, prefix: str):
    fields = dc_cls.__dataclass_fields__
    for key in values:
        if key not in fields:
            raise ConfigError(f"{prefix}.{key}: unknown field")
    try:
        obj = dc_cls(**values)
        obj.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{prefix}: {e}") from e
    return obj


def _data_paths(cfg: dict) -> dict:
    data = cfg.get("data")
    if not isinstance(data, dict):
        raise ConfigError("data: required object with events/purchases/profiles/catalog paths")
    out = {}
    for key in ("events", "purchases", "profiles", "catalog"):
        if key not in data:
            raise ConfigError(f"data.{key}: required path")
        p = Path(data[key])
        if not p.is_file():
            raise ConfigError(f"data.{key}: file not found: {p}")
        out[key] = p
    return out


def _ingest(cfg: dict) -> Dataset:
    paths = _data_paths(cfg)
    return ingest(paths["events"], paths["purchases"], paths["profiles"], paths["catalog"])


def _prep_config(cfg: dict) -> tuple:
    """(PrepConfig, explicit_threshold_or_None) from the config's prep block."""
    prep_dict = dict(cfg.get("prep", {}))
    pcfg = _build(PrepConfig, prep_dict, "prep")
    threshold = None
    if "threshold_days" in prep_dict:
        days = float(prep_dict["threshold_days"])
        threshold = TaskThreshold(days, math.log(days * 86400.0))
    return pcfg, threshold


def _run_prep(cfg: dict):
    dataset = _ingest(cfg)
    pcfg, threshold = _prep_config(cfg)
    return dataset, run_pipeline(dataset, pcfg, threshold)


def _model_block(cfg: dict) -> tuple:
    model = cfg.get("model")
    if not isinstance(model, dict):
        raise ConfigError("model: required object with encoder/head")
    encoder = model.get("encoder")
    head = model.get("head")
    if encoder not in ("encode", "concat", "auto"):
        raise ConfigError(f"model.encoder: must be encode|concat|auto, got {encoder!r}")
    if head not in HEAD_KINDS:
        raise ConfigError(f"model.head: must be one of {'|'.join(HEAD_KINDS)}, got {head!r}")
    hybrid = bool(model.get("hybrid", False))
    for key in model:
        if key not in ("encoder", "head", "hybrid"):
            raise ConfigError(f"model.{key}: unknown field")
    return encoder, head, hybrid


def _train_config(cfg: dict, encoder: str, head: str) -> TrainConfig:
    seed = int(cfg.get("seed", 0))
    base = preset_config(encoder, head, seed=seed)
    overrides = dict(cfg.get("train", {}))
    for key in overrides:
        if key not in TrainConfig.__dataclass_fields__:
            raise ConfigError(f"train.{key}: unknown field")
    out = dc_replace(base, **overrides, seed=seed) if "seed" not in overrides else dc_replace(base, **overrides)
    try:
        out.validate()
    except ValueError as e:
        raise ConfigError(f"train: {e}") from e
    return out


def _write_json(path: Path, payload: dict, cfg_hash: str, seed) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"config_hash": cfg_hash, "seed": seed, **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=False, default=_jsonify)
        fh.write("\n")
    log.info("wrote %s", path)
    return path


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_metrics_csv(path: Path, rows: list, cfg_hash: str, seed) -> Path:
    """Delimited report: metric,cutoff,model,group,value."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg_hash} seed={seed}\n")
        w = csv.writer(fh)
        w.writerow(["metric", "cutoff", "model", "group", "value"])
        w.writerows(rows)
    log.info("wrote %s", path)
    return path


def _metric_rows(means: dict, k: int, model: str, group: str) -> list:
    return [(m, k, model, group, f"{means[m]:.6f}") for m in METRICS if m in means]


# -- model/checkpoint scoring ----------------------------------------------------


def _load_any_checkpoint(path: str, dataset: Dataset):
    """(label, score_fn, loaded_model) for a model or baseline checkpoint."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"checkpoint: file not found: {p}")
    _, meta = load_checkpoint(p)
    kind = meta.get("model_kind", "")
    if kind == "cross_sessions":
        model = load_model(p)
        _check_catalog(model.catalog, dataset)
        cache: dict = {}

        def score_fn(task):
            profile = dataset.profiles.get(task.user_id)
            return recommend(model, task, profile, model_input(model, task, cache))

        label = f"{model.encoder_kind}-{model.head_kind}" + ("-hybrid" if model.hybrid else "")
        return label, score_fn, model
    if kind.startswith("baseline:"):
        model = baselines.load_baseline(p, profiles=dataset.profiles)
        _check_catalog(model.catalog, dataset)
        return kind.split(":", 1)[1], model.score, model
    raise ConfigError(f"checkpoint: unrecognized kind {kind!r} in {p}")


def _check_catalog(model_catalog, dataset: Dataset) -> None:
    if list(model_catalog.items) != list(dataset.catalog.items):
        raise ValueError("checkpoint catalog does not match the prepared dataset; "
                         "evaluate with the same data and prep config used for training")


def _make_trainer(cfg: dict):
    """trainer(dataset, split) -> score_fn for the studies, from the config."""
    if "baseline" in cfg:
        name = _baseline_name(cfg)

        def trainer(dataset, split):
            model = baselines.train_baseline(name, split, dataset,
                                             cfg=_baseline_train_config(cfg, name),
                                             seed=int(cfg.get("seed", 0)),
                                             **_baseline_params(cfg))
            return model.score

        return trainer, name

    encoder, head, hybrid = _model_block(cfg)
    tcfg = _train_config(cfg, encoder, head)

    def trainer(dataset, split):
        model, _, _ = train_model(split, dataset, encoder, head, hybrid, cfg=tcfg)
        cache: dict = {}

        def score_fn(task):
            profile = dataset.profiles.get(task.user_id)
            return recommend(model, task, profile, model_input(model, task, cache))

        return score_fn

    label = f"{encoder}-{head}" + ("-hybrid" if hybrid else "")
    return trainer, label


def _baseline_name(cfg: dict) -> str:
    block = cfg.get("baseline")
    if not isinstance(block, dict) or "name" not in block:
        raise ConfigError("baseline.name: required")
    name = block["name"]
    if name not in baselines.BASELINE_KINDS:
        raise ConfigError(f"baseline.name: must be one of {'|'.join(baselines.BASELINE_KINDS)}")
    for key in block:
        if key not in ("name", "factors", "k_neighbors", "boost", "boost_mode"):
            raise ConfigError(f"baseline.{key}: unknown field")
    return name


def _baseline_params(cfg: dict) -> dict:
    block = dict(cfg.get("baseline", {}))
    block.pop("name", None)
    return block


def _baseline_train_config(cfg: dict, name: str) -> TrainConfig | None:
    if name not in ("demo", "gru4rec", "gru4rec-concat") or "train" not in cfg:
        return None
    seed = int(cfg.get("seed", 0))
    preset = baselines.DEMO_PRESET if name == "demo" else baselines.GRU4REC_PRESET
    base = TrainConfig(batch_size=preset[0], hidden_units=preset[1], dropout_rate=preset[2], seed=seed)
    overrides = dict(cfg.get("train", {}))
    for key in overrides:
        if key not in TrainConfig.__dataclass_fields__:
            raise ConfigError(f"train.{key}: unknown field")
    out = dc_replace(base, **overrides)
    try:
        out.validate()
    except ValueError as e:
        raise ConfigError(f"train: {e}") from e
    return out


# -- subcommand handlers -----------------------------------------------------------


def cmd_synth(cfg: dict, out: Path, h: str) -> None:
    scfg = _build(SynthConfig, dict(cfg.get("synth", {})), "synth")
    summary = generate(scfg, out)
    _write_json(out / "synth_summary.json", summary, h, scfg.seed)


def cmd_ingest(cfg: dict, out: Path, h: str) -> None:
    dataset = _ingest(cfg)
    _write_json(out / "ingest_summary.json", {"summary": dataset.summary()}, h, cfg.get("seed", 0))


def cmd_segment(cfg: dict, out: Path, h: str) -> None:
    from .prep import bound_sessions, clean_actions

    dataset = _ingest(cfg)
    pcfg, _ = _prep_config(cfg)
    ds = bound_sessions(clean_actions(dataset, pcfg), pcfg)
    logs = pooled_log_gaps(ds.sessions)
    gmm = fit_gmm_em(logs)
    threshold = intersection_threshold(gmm)
    payload = {
        "threshold_days": threshold.t_days,
        "log_t": threshold.log_t,
        "n_gaps": int(logs.size),
        "gmm": {"weights": list(gmm.weights), "means": list(gmm.means), "stdevs": list(gmm.stdevs),
                "n_iterations": len(gmm.loglik_history)},
    }
    _write_json(out / "threshold.json", payload, h, cfg.get("seed", 0))
    figures.render_segmentation(logs, gmm, threshold, out / "segmentation.png",
                                meta={"config_hash": h, "seed": cfg.get("seed", 0)})


def cmd_prep(cfg: dict, out: Path, h: str) -> None:
    _, result = _run_prep(cfg)
    payload = {"report": result.report, "threshold_days": result.threshold.t_days,
               "summary": result.dataset.summary()}
    _write_json(out / "prep_report.json", payload, h, cfg.get("seed", 0))


def cmd_train(cfg: dict, out: Path, h: str) -> None:
    encoder, head, hybrid = _model_block(cfg)
    tcfg = _train_config(cfg, encoder, head)
    _, result = _run_prep(cfg)
    model, history, auto_history = train_model(result.split, result.dataset, encoder, head, hybrid, cfg=tcfg)
    save_model(out / "model.npz", model, extra_meta={"config_hash": h, "seed": tcfg.seed})
    payload = {"model": f"{encoder}-{head}" + ("-hybrid" if hybrid else ""),
               "history": history.as_dict(),
               "auto_history": auto_history.as_dict() if auto_history else None,
               "prep_report": result.report}
    _write_json(out / "train_history.json", payload, h, tcfg.seed)


def cmd_train_baseline(cfg: dict, out: Path, h: str) -> None:
    name = _baseline_name(cfg)
    seed = int(cfg.get("seed", 0))
    _, result = _run_prep(cfg)
    model = baselines.train_baseline(name, result.split, result.dataset,
                                     cfg=_baseline_train_config(cfg, name), seed=seed,
                                     **_baseline_params(cfg))
    baselines.save_baseline(out / f"baseline_{name}.npz", model,
                            extra_meta={"config_hash": h, "seed": seed})
    _write_json(out / f"baseline_{name}.json", {"baseline": name, "prep_report": result.report}, h, seed)


def cmd_eval(cfg: dict, out: Path, h: str) -> None:
    if "checkpoint" not in cfg:
        raise ConfigError("checkpoint: required path to a trained model")
    k = int(cfg.get("k", 3))
    _, result = _run_prep(cfg)
    label, score_fn, _ = _load_any_checkpoint(cfg["checkpoint"], result.dataset)
    report = evaluate(score_fn, result.split.test, result.dataset, k, model_name=label,
                      meta={"config_hash": h, "seed": cfg.get("seed", 0)})
    _write_json(out / "eval_report.json", report.as_dict(), h, cfg.get("seed", 0))
    _write_metrics_csv(out / "metrics.csv", _metric_rows(report.means, k, label, "all"),
                       h, cfg.get("seed", 0))
    figures.render_metric_bars({label: report.means}, out / "metrics.png",
                               title=f"test metrics @ {k}", meta={"config_hash": h})


def cmd_per_step(cfg: dict, out: Path, h: str) -> None:
    if "checkpoint" not in cfg:
        raise ConfigError("checkpoint: required path to a trained model")
    k = int(cfg.get("k", 3))
    _, result = _run_prep(cfg)
    label, _, model = _load_any_checkpoint(cfg["checkpoint"], result.dataset)
    if not hasattr(model, "head_kind"):
        raise ConfigError("checkpoint: per-step curves need a cross-sessions model")
    cache: dict = {}

    def step_fn(task):
        profile = result.dataset.profiles.get(task.user_id)
        return predict_steps(model, task, profile, model_input(model, task, cache))

    curve = per_step_curve(step_fn, result.split.test, result.dataset, k)
    _write_json(out / "per_step.json", {"model": label, "curve": curve}, h, cfg.get("seed", 0))
    rows = []
    for step, means in curve.items():
        rows.extend(_metric_rows(means, k, label, f"step{step}"))
        rows.append(("n_tasks", k, label, f"step{step}", str(means["n_tasks"])))
    _write_metrics_csv(out / "per_step.csv", rows, h, cfg.get("seed", 0))
    figures.render_per_step(curve, out / "per_step.png", meta={"config_hash": h})
    if model.head_kind == "attention":
        weights = extract_attention(model, result.split.test, result.dataset.profiles)
        _write_json(out / "attention.json",
                    {"weights": {str(n): w for n, w in weights.items()}}, h, cfg.get("seed", 0))
        figures.render_attention(weights, out / "attention.png", meta={"config_hash": h})


def cmd_shuffle_study(cfg: dict, out: Path, h: str) -> None:
    k = int(cfg.get("k", 3))
    trials = int(cfg.get("trials", 5))
    seed = int(cfg.get("seed", 0))
    _, result = _run_prep(cfg)
    trainer, label = _make_trainer(cfg)
    baseline = evaluate(trainer(result.dataset, result.split), result.split.test, result.dataset,
                        k, model_name=label)
    study = shuffle_study(trainer, result.dataset, result.split, trials=trials, seed=seed, k=k)
    payload = {"model": label, "original": baseline.means, "shuffled_mean": study["mean"],
               "delta": {m: study["mean"][m] - baseline.means[m] for m in METRICS},
               "trials": [t["means"] for t in study["trials"]]}
    _write_json(out / "shuffle_study.json", payload, h, seed)
    rows = _metric_rows(baseline.means, k, label, "original")
    rows += _metric_rows(study["mean"], k, label, "shuffled")
    _write_metrics_csv(out / "shuffle_study.csv", rows, h, seed)
    figures.render_metric_bars({"original": baseline.means, "shuffled": study["mean"]},
                               out / "shuffle_study.png", title="session-order shuffle",
                               meta={"config_hash": h})


def cmd_ablate(cfg: dict, out: Path, h: str) -> None:
    k = int(cfg.get("k", 3))
    facets = cfg.get("facets", list(ABLATION_FACETS))
    if not isinstance(facets, list) or not facets:
        raise ConfigError("facets: must be a non-empty list")
    raw = _ingest(cfg)
    pcfg, threshold = _prep_config(cfg)
    base_prep = run_pipeline(raw, pcfg, threshold)
    pcfg = dc_replace(pcfg, threshold_days=base_prep.threshold.t_days)
    trainer, label = _make_trainer(cfg)
    baseline = evaluate(trainer(base_prep.dataset, base_prep.split), base_prep.split.test,
                        base_prep.dataset, k, model_name=label)
    table = ablate_actions(trainer, raw, pcfg, facets, baseline, k)
    _write_json(out / "ablation.json", {"model": label, "baseline": baseline.means, "facets": table},
                h, cfg.get("seed", 0))
    rows = _metric_rows(baseline.means, k, label, "baseline")
    for facet, entry in table.items():
        rows.extend(_metric_rows(entry["means"], k, label, f"without {facet}"))
    _write_metrics_csv(out / "ablation.csv", rows, h, cfg.get("seed", 0))
    figures.render_metric_bars(
        {"baseline": baseline.means, **{f"- {f}": e["means"] for f, e in table.items()}},
        out / "ablation.png", title="action ablation", meta={"config_hash": h})


def cmd_sweep_threshold(cfg: dict, out: Path, h: str) -> None:
    k = int(cfg.get("k", 3))
    thresholds = cfg.get("thresholds")
    if not isinstance(thresholds, list) or not thresholds:
        raise ConfigError("thresholds: required non-empty list of days")
    raw = _ingest(cfg)
    pcfg, _ = _prep_config(cfg)
    trainer, label = _make_trainer(cfg)
    sweep = threshold_sweep(trainer, raw, pcfg, [float(d) for d in thresholds], k)
    _write_json(out / "threshold_sweep.json", {"model": label, "sweep": {str(d): v for d, v in sweep.items()}},
                h, cfg.get("seed", 0))
    rows = []
    for days, entry in sorted(sweep.items()):
        rows.extend(_metric_rows(entry["means"], k, label, f"t={days:g}d"))
        rows.append(("mean_test_sessions", k, label, f"t={days:g}d", f"{entry['mean_test_sessions']:.4f}"))
    _write_metrics_csv(out / "threshold_sweep.csv", rows, h, cfg.get("seed", 0))
    figures.render_sweep(sweep, out / "threshold_sweep.png", meta={"config_hash": h})


def cmd_fairness(cfg: dict, out: Path, h: str) -> None:
    if "checkpoint" not in cfg:
        raise ConfigError("checkpoint: required path to a trained model")
    attribute = cfg.get("attribute", "age-bucket")
    if attribute not in ("age-bucket", "income-decile"):
        raise ConfigError("attribute: must be age-bucket or income-decile")
    k = int(cfg.get("k", 3))
    _, result = _run_prep(cfg)
    label, score_fn, _ = _load_any_checkpoint(cfg["checkpoint"], result.dataset)
    report = evaluate(score_fn, result.split.test, result.dataset, k, model_name=label)
    table = group_breakdown(report, attribute, result.dataset.profiles)
    name = attribute.replace("-", "_")
    _write_json(out / f"fairness_{name}.json",
                {"model": label, "attribute": attribute, "overall": report.means, "groups": table},
                h, cfg.get("seed", 0))
    rows = _metric_rows(report.means, k, label, "all")
    for group, entry in table.items():
        rows.extend(_metric_rows(entry, k, label, group))
        rows.append(("share", k, label, group, f"{entry['share']:.6f}"))
    _write_metrics_csv(out / f"fairness_{name}.csv", rows, h, cfg.get("seed", 0))
    figures.render_metric_bars({g: e for g, e in table.items()}, out / f"fairness_{name}.png",
                               title=f"metrics by {attribute}", meta={"config_hash": h})


HANDLERS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "segment": cmd_segment,
    "prep": cmd_prep,
    "train": cmd_train,
    "train-baseline": cmd_train_baseline,
    "eval": cmd_eval,
    "per-step": cmd_per_step,
    "shuffle-study": cmd_shuffle_study,
    "ablate": cmd_ablate,
    "sweep-threshold": cmd_sweep_threshold,
    "fairness": cmd_fairness,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossrec",
                                     description="cross-session purchase recommendation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
    return parser


def main(argv: list | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, out, _config_hash(cfg))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure: diagnostic, nonzero exit
        log.error("%s failed: %s", args.command, e, exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
