"""Command-line pipeline: synth -> events -> graph -> validate / train -> eval, plus export.

Every stage reads the previous stage's files from the run directory
(``--out``) and writes its own, each stamped with the config hash. Exit
codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .anomaly.models import load_checkpoint, save_checkpoint, train
from .anomaly.scoring import write_curve_csv
from .config import ANOMALIES, MODELS, RunConfig
from .errors import ConfigError, NonFiniteLoss, SensorGraphError
from .events import FeatureVector
from .eventstore import EventStore
from .experiments import (
    RECALL_GRID,
    build_model,
    evaluate,
    feature_test_set,
    run_validation,
    series_test_set,
    split_indices,
    summarize_validation,
)
from .graph import build_adjacency, correlation_matrix, snapshot, write_matrix_csv
from .pipeline import feature_frames, fleet_events, fleet_features, populate_store
from .series import stl_decompose, write_decomposition
from .synth import LabeledDataset, generate_fleet, read_dataset, write_dataset

log = logging.getLogger("sensorgraph")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SPARSITY_LEVEL = 0.01


class DataError(SensorGraphError):
    """A required upstream artifact is missing or unusable."""


# -- shared loading -----------------------------------------------------------------

def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _dataset(cfg: RunConfig) -> LabeledDataset:
    if not (cfg.data_dir / "data.csv").exists():
        raise DataError(f"no dataset in {cfg.data_dir}; run `sensorgraph synth` first")
    return read_dataset(cfg.data_dir)


def _features_dir(cfg: RunConfig) -> Path:
    return cfg.out_dir / "features"


def _save_features(cfg: RunConfig, features: dict[str, FeatureVector]) -> None:
    out = _features_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    ids = list(features)
    np.save(out / "z.npy", feature_frames(features, ids))
    np.save(out / "timestamps.npy", next(iter(features.values())).timestamps)
    _write_json(out / "manifest.json", {"config_hash": cfg.config_hash, "sensors": ids,
                                        "warm_up": cfg.features.warm_up,
                                        "columns": ["SpikeDip", "MeanShift", "VarianceShift", "TrendChange"]})


def _load_features(cfg: RunConfig) -> dict[str, FeatureVector]:
    out = _features_dir(cfg)
    if not (out / "manifest.json").exists():
        raise DataError(f"no features in {out}; run `sensorgraph events` first")
    meta = json.loads((out / "manifest.json").read_text())
    z = np.load(out / "z.npy")
    ts = np.load(out / "timestamps.npy")
    return {s: FeatureVector(s, ts, z[:, i], meta["warm_up"]) for i, s in enumerate(meta["sensors"])}


def _graph_window(cfg: RunConfig, ts: np.ndarray) -> tuple[int, int]:
    if cfg.graph_time is not None:
        end = int(cfg.graph_time)
    else:
        end = int(ts[split_indices(ts, cfg.benchmark()).train[-1]])
    return max(end - cfg.window_s, int(ts[0])), end


def _store(cfg: RunConfig) -> EventStore:
    if not cfg.events_path.exists():
        raise DataError(f"no event store at {cfg.events_path}; run `sensorgraph events` first")
    return EventStore.open(cfg.events_path)


def _adjacency(cfg: RunConfig, ids: Sequence[str], ts: np.ndarray) -> np.ndarray:
    return build_adjacency(_store(cfg), ids, _graph_window(cfg, ts), cfg.delta_s)


# -- commands -------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> Path:
    ds = generate_fleet(cfg.fleet_config())
    write_dataset(cfg.data_dir, ds, header_comment=cfg.hash_comment)
    log.info("wrote %d sensors x %d samples to %s", len(ds.series), len(ds.timestamps), cfg.data_dir)
    return cfg.data_dir


def cmd_events(cfg: RunConfig) -> Path:
    ds = _dataset(cfg)
    features = fleet_features(ds.series, cfg.features, cfg.stl)
    _save_features(cfg, features)
    window = _graph_window(cfg, ds.timestamps)
    path = cfg.events_path
    for stale in (path, path.with_name(path.name + ".manifest.json")):
        if stale.exists():
            stale.unlink()
    store = EventStore(path, extra_manifest={"config_hash": cfg.config_hash, "window": list(window)})
    populate_store(fleet_events(features, cfg.features, window), store)
    log.info("stored %d events for window %s in %s", len(store), window, path)
    return path


def cmd_graph(cfg: RunConfig) -> Path:
    features = _load_features(cfg)
    ids = list(features)
    ts = next(iter(features.values())).timestamps
    start, end = _graph_window(cfg, ts)
    g = snapshot(_store(cfg), features, ids, end, end - start, cfg.delta_s)
    out = cfg.out_dir / "graph"
    out.mkdir(parents=True, exist_ok=True)
    g.write_json(out / "graph.json", config_hash=cfg.config_hash)
    g.write_graphml(out / "graph.graphml", config_hash=cfg.config_hash)
    write_matrix_csv(out / "adjacency.csv", g.A, ids, header_comment=cfg.hash_comment)
    log.info("graph at t=%d over [%d, %d]: %d sensors, %d edges", end, start, end, len(ids),
             int(np.count_nonzero(np.triu(g.A, 1))))
    return out


def cmd_validate(cfg: RunConfig) -> Path:
    ds = _dataset(cfg)
    window = _graph_window(cfg, ds.timestamps)
    A = _adjacency(cfg, ds.sensor_ids, ds.timestamps)
    results = run_validation(ds, window, cfg.features, cfg.stl, cfg.delta_s, A=A)
    tables = {"redundant_pairs": summarize_validation(results, ["env_pair"]),
              "room_groups": summarize_validation(results, ["room"])}
    out = cfg.out_dir / "validation.csv"
    methods = list(next(iter(tables.values())))
    with out.open("w", newline="") as fh:
        fh.write(f"# {cfg.hash_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["groups", "metric", *methods])
        for name, table in tables.items():
            for metric in ("m1", "m2", "m3"):
                w.writerow([name, metric, *[repr(getattr(table[m], metric)) for m in methods]])
    for name, table in tables.items():
        print(f"{name}:")
        print("      " + "".join(f"{m:>11}" for m in methods))
        for metric in ("m1", "m2", "m3"):
            print(f"  {metric}  " + "".join(f"{getattr(table[m], metric):11.3f}" for m in methods))
    return out


def _frames(cfg: RunConfig):
    features = _load_features(cfg)
    ids = list(features)
    ts = next(iter(features.values())).timestamps
    return features, ids, ts, feature_frames(features, ids), split_indices(ts, cfg.benchmark())


def cmd_train(cfg: RunConfig) -> Path:
    features, ids, ts, frames, split = _frames(cfg)
    A = _adjacency(cfg, ids, ts)
    model = build_model(cfg.model, A, frames[split.train], cfg.seed)
    history = None
    if cfg.model != "pca":
        history = train(model, frames[split.train][::cfg.train_stride], cfg.benchmark().train,
                        val_frames=frames[split.val])
    path = cfg.out_dir / "checkpoints" / f"{cfg.model}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    extra = {"config_hash": cfg.config_hash}
    if history is not None:
        extra["history"] = {"loss": history.loss, "val_loss": history.val_loss,
                            "best_epoch": history.best_epoch, "stopped_early": history.stopped_early}
    save_checkpoint(path, model, cfg.benchmark().train, seed=cfg.seed, **extra)
    log.info("trained %s; checkpoint %s", cfg.model, path)
    return path


def cmd_eval(cfg: RunConfig, models: Optional[Sequence[str]] = None) -> Path:
    ckpt_dir = cfg.out_dir / "checkpoints"
    models = list(models) if models else [m for m in MODELS if (ckpt_dir / f"{m}.json").exists()]
    if not models:
        raise DataError(f"no checkpoints in {ckpt_dir}; run `sensorgraph train` first")
    features, ids, ts, frames, split = _frames(cfg)
    bench = cfg.benchmark()
    if cfg.anomaly == "feature":
        test, labels = feature_test_set(frames[split.test], _rooms(cfg, ids), bench, cfg.seed)
    else:
        test, labels = series_test_set(_dataset(cfg), features, split, bench, cfg.seed)
    out = cfg.out_dir / "eval"
    out.mkdir(parents=True, exist_ok=True)
    summary = {"config_hash": cfg.config_hash, "anomaly": cfg.anomaly, "seed": cfg.seed, "models": {}}
    for name in models:
        path = ckpt_dir / f"{name}.json"
        if not path.exists():
            raise DataError(f"missing checkpoint {path}")
        model, _ = load_checkpoint(path)
        res = evaluate(model, test, labels)
        write_curve_csv(out / f"{cfg.anomaly}_{name}_curve.csv", res.curve, header_comment=cfg.hash_comment)
        summary["models"][name] = {"best_f1": res.best_f1,
                                   "f1_at_recall": {f"{r:.1f}": res.f1_at[r] for r in RECALL_GRID}}
    path = out / f"summary_{cfg.anomaly}.json"
    _write_json(path, summary)
    for name, m in summary["models"].items():
        print(f"{name}: best F1 {m['best_f1']:.3f}, F1 at recall 0.5 {m['f1_at_recall']['0.5']:.3f}")
    return path


def _rooms(cfg: RunConfig, ids: Sequence[str]) -> list[list[int]]:
    path = cfg.data_dir / "groups.json"
    if not path.exists():
        raise DataError(f"no group file {path}; run `sensorgraph synth` first")
    meta = json.loads(path.read_text())
    pos = {s: i for i, s in enumerate(ids)}
    return [[pos[s] for s in room] for room in meta["rooms"]]


def cmd_export(cfg: RunConfig, sensors: Sequence[str] = ()) -> Path:
    """Plot-ready files: STL components per sensor and adjacency/correlation values."""
    ds = _dataset(cfg)
    out = cfg.out_dir / "export"
    out.mkdir(parents=True, exist_ok=True)
    for sid in sensors:
        if sid not in ds.series:
            raise DataError(f"unknown sensor {sid!r}")
        s = ds.series[sid]
        write_decomposition(out / f"decomposition_{sid}.csv", s.timestamps, stl_decompose(s, cfg.stl),
                            header_comment=cfg.hash_comment)
    ids = ds.sensor_ids
    window = _graph_window(cfg, ds.timestamps)
    A = _adjacency(cfg, ids, ds.timestamps)
    keep = (ds.timestamps >= window[0]) & (ds.timestamps <= window[1])
    P = correlation_matrix(ds.values()[:, keep], "pearson")
    iu = np.triu_indices(len(ids), 1)
    with (out / "matrix_values.csv").open("w", newline="") as fh:
        fh.write(f"# {cfg.hash_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sensor_i", "sensor_j", "adjacency", "pearson"])
        for i, j in zip(*iu):
            w.writerow([ids[i], ids[j], repr(float(A[i, j])), repr(float(P[i, j]))])
    sparsity = {"config_hash": cfg.config_hash, "level": SPARSITY_LEVEL,
                "fraction_below": {"adjacency": float(np.mean(A[iu] < SPARSITY_LEVEL)),
                                   "pearson": float(np.mean(P[iu] < SPARSITY_LEVEL))}}
    _write_json(out / "sparsity.json", sparsity)
    return out


# -- argument handling ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="run directory (default: run)")
    common.add_argument("--window-days", type=float, dest="window_days")
    common.add_argument("--delta-min", type=float, dest="delta_min")
    common.add_argument("--model", choices=MODELS)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sensorgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate the synthetic fleet")
    sub.add_parser("events", parents=[common], help="features and events into the event store")
    g = sub.add_parser("graph", parents=[common], help="sensor graph snapshot")
    g.add_argument("--time", type=int, dest="graph_time", help="snapshot time, epoch seconds")
    sub.add_parser("validate", parents=[common], help="group recovery: adjacency vs correlations")
    sub.add_parser("train", parents=[common], help="train one anomaly model")
    e = sub.add_parser("eval", parents=[common], help="PR curves on injected anomalies")
    e.add_argument("--anomaly", choices=ANOMALIES)
    x = sub.add_parser("export", parents=[common], help="plot-ready data files")
    x.add_argument("--sensor", action="append", default=[], help="write this sensor's STL components")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k, None) for k in
                 ("seed", "out", "window_days", "delta_min", "model", "graph_time", "anomaly")}
    return cfg.with_overrides(**overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "eval":
            path = cmd_eval(cfg, [args.model] if args.model else None)
        elif args.command == "export":
            path = cmd_export(cfg, args.sensor)
        else:
            path = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteLoss, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SensorGraphError, ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(path)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "events": cmd_events, "graph": cmd_graph,
            "validate": cmd_validate, "train": cmd_train}


if __name__ == "__main__":
    sys.exit(main())
