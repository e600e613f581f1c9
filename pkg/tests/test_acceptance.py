"""Acceptance gate: one test, and one verdict line, per acceptance criterion."""

import json
import time

import numpy as np
import pytest

from oracles import FIG_I, FIG_J, brute_A, finite_difference_check, random_sets, store_from
from sensorgraph.anomaly import GaeModel, VaeModel, pca_fit
from sensorgraph.cli import main
from sensorgraph.events import EventType, FeatureConfig, detect_events, quantile
from sensorgraph.experiments import run_anomaly_benchmark, run_validation, summarize_validation
from sensorgraph.graph import (
    build_adjacency,
    concurrent_count,
    concurrent_prob,
    connectivity,
    correlation_matrix,
)
from sensorgraph.pipeline import fleet_events, fleet_features, populate_store
from sensorgraph.series import SensorSeries, stl_decompose
from sensorgraph.synth import FleetConfig, generate_fleet

SEEDS = (0, 1, 2)


def test_worked_example(verdict):
    got = (concurrent_count(FIG_I, FIG_J, 0), concurrent_count(FIG_I, FIG_I, 0),
           concurrent_prob(FIG_I, FIG_J, 0), connectivity(FIG_I, FIG_J, 0))
    A = build_adjacency(store_from([FIG_I, FIG_J]), ["s0", "s1"], (0, 10), 0)
    ok = got == (2, 4, 0.5, 0.25) and A[0, 1] == A[1, 0] == 0.25
    assert verdict("worked example", ok, f"C(i,j), C(i,i), P(i,j), A(i,j) = {got}, A(pipeline) = {A[0, 1]}")


def test_connectivity_oracle_equivalence(verdict):
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(500):
        sets = random_sets(rng, int(rng.integers(1, 6)), max_events=8)
        delta = float(rng.uniform(0, 10))
        A = build_adjacency(store_from(sets), [f"s{i}" for i in range(len(sets))], (0, 30), delta)
        mismatches += not np.array_equal(A, brute_A(sets, delta))
    assert verdict("connectivity oracle", mismatches == 0, f"{mismatches} of 500 instances differ")


def test_gradient_checks(verdict):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        A = rng.uniform(0, 1, (4, 4))
        A = (A + A.T) / 2
        np.fill_diagonal(A, 1.0)
        gae = GaeModel.init(A, seed=seed, u_noise=0.3)
        vae = VaeModel.init(4, seed=seed)
        for layer in gae.layers:
            layer.B += 0.1 * rng.normal(size=layer.B.shape)
        for layer in vae.layers:
            layer.b += 0.1 * rng.normal(size=layer.b.shape)
        frames = rng.normal(size=(3, 4, 4))
        worst = max(worst, finite_difference_check(gae, frames, seed=seed),
                    finite_difference_check(vae, frames, seed=seed))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 60
    assert verdict("gradient checks", ok, f"worst relative error {worst:.2e}, {elapsed:.1f} s")


def test_pca_subspace(verdict):
    rng = np.random.default_rng(7)
    n = 6
    basis = rng.normal(size=(3 * n, 4 * n))
    data = (rng.normal(size=(500, 3 * n)) @ basis + rng.normal(size=4 * n)).reshape(500, n, 4)
    _, err = pca_fit(data).reconstruct_frames(data)
    mse = float(err.mean())
    assert verdict("PCA sanity", mse < 1e-8, f"MSE {mse:.2e}")


def test_detector_property(verdict):
    z = np.random.default_rng(11).standard_normal(10_000)
    cfg = FeatureConfig(gamma=3.0, alpha=0.01, debounce=0)
    events = detect_events(z, cfg, EventType.SPIKE_DIP, "s", np.arange(len(z)))
    q_lo, q_hi = quantile(z, 0.005), quantile(z, 0.995)
    both = all((e.z_value > 3 and e.z_value > q_hi) or (e.z_value < -3 and e.z_value < q_lo) for e in events)
    rate = len(events) / len(z)
    assert verdict("detector property", rate <= 0.011 and both,
                   f"rate {rate:.4f}, all events meet gamma and quantile conditions: {both}")


def test_stl_recovery(verdict):
    t = np.arange(720)
    season = np.sin(2 * np.pi * t / 24)
    x = 0.01 * t + season + np.random.default_rng(5).normal(0, 0.1, 720)
    dec = stl_decompose(SensorSeries("s", 300 * t, x, period=24))
    inner = slice(120, 600)
    rmse = float(np.sqrt(np.mean((dec.seasonal[inner] - season[inner]) ** 2)))
    additivity = float(np.max(np.abs(dec.trend + dec.seasonal + dec.residual - x)))
    assert verdict("STL recovery", rmse < 0.1 and additivity <= 1e-9,
                   f"interior seasonal RMSE {rmse:.4f}, additivity error {additivity:.1e}")


@pytest.fixture(scope="module")
def validation_run():
    start = time.perf_counter()
    ds = generate_fleet(FleetConfig(weeks=4.0, seed=0))
    ts = ds.timestamps
    window = (int(ts[0]), int(ts[-1]))
    store = populate_store(fleet_events(fleet_features(ds.series), window=window))
    A = build_adjacency(store, ds.sensor_ids, window, 15 * 60)
    results = run_validation(ds, window, A=A)
    elapsed = time.perf_counter() - start
    return ds, A, results, elapsed


def test_validation_shape(validation_run, verdict):
    ds, _, results, elapsed = validation_run
    pairs = summarize_validation(results, ["env_pair_"])
    rooms = summarize_validation(results, [f"room{r}" for r in range(len(ds.rooms))])
    adj, pea = rooms["adjacency"], rooms["pearson"]
    ok = (pairs["adjacency"].m1 == 1.0 and adj.m2 > pea.m2 and adj.m3 > pea.m3 and elapsed < 300)
    assert verdict(
        "validation shape", ok,
        f"{len(ds.sensor_ids)} sensors, pairs m1 {pairs['adjacency'].m1:.3f}; rooms adjacency "
        f"m2 {adj.m2:.3f} m3 {adj.m3:.3f} vs Pearson m2 {pea.m2:.3f} m3 {pea.m3:.3f}; {elapsed:.0f} s")


def test_sparsity(validation_run, verdict):
    ds, A, _, _ = validation_run
    P = correlation_matrix(ds.values(), "pearson")
    iu = np.triu_indices_from(A, k=1)
    frac_a, frac_p = float(np.mean(A[iu] < 0.01)), float(np.mean(P[iu] < 0.01))
    assert verdict("sparsity", frac_a >= frac_p,
                   f"fraction below 0.01: adjacency {frac_a:.3f}, Pearson {frac_p:.3f}")


def test_anomaly_ordering(verdict):
    start = time.perf_counter()
    lines, ok = [], True
    for seed in SEEDS:
        res = run_anomaly_benchmark(seed)
        s = {m: r.f1_at[0.5] for m, r in res.series.items()}
        f = {m: r.best_f1 for m, r in res.feature.items()}
        ok &= s["gae"] > s["vae"] and s["gae"] > s["pca"] and f["gae"] >= 1.5 * f["pca"]
        lines.append(f"seed {seed}: series F1@0.5 gae {s['gae']:.3f} vae {s['vae']:.3f} pca {s['pca']:.3f}, "
                     f"feature best-F1 gae {f['gae']:.3f} pca {f['pca']:.3f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1800
    assert verdict("anomaly ordering", ok, "; ".join(lines) + f"; {elapsed:.0f} s")


def _pipeline(out, config):
    base = ["--config", str(config), "--out", str(out)]
    for cmd in ("synth", "events", "graph", "validate"):
        assert main([cmd, *base]) == 0
    for model in ("gae", "vae", "pca"):
        assert main(["train", *base, "--model", model]) == 0
    assert main(["eval", *base]) == 0
    assert main(["eval", *base, "--anomaly", "series"]) == 0
    assert main(["export", *base, "--sensor", "room0_aisle0"]) == 0


def test_determinism(tmp_path, verdict):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"train_weeks": 1, "val_weeks": 1, "test_weeks": 1, "window_days": 7,
                                  "train": {"epochs": 3}, "train_stride": 8}))
    runs = [tmp_path / "a", tmp_path / "b"]
    for out in runs:
        _pipeline(out, config)
    files = sorted(p.relative_to(runs[0]) for p in runs[0].rglob("*") if p.is_file())
    differ = [str(f) for f in files if (runs[0] / f).read_bytes() != (runs[1] / f).read_bytes()]
    same_tree = files == sorted(p.relative_to(runs[1]) for p in runs[1].rglob("*") if p.is_file())
    kinds = {"events.jsonl", "graph/graph.json", "checkpoints/gae.json", "checkpoints/vae.json",
             "checkpoints/pca.json", "eval/summary_feature.json", "eval/summary_series.json"}
    covered = kinds <= {str(f) for f in files}
    assert verdict("determinism", not differ and same_tree and covered,
                   f"{len(files)} output files compared, differing: {differ or 'none'}")
