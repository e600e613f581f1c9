import itertools
import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensorgraph.errors import DegenerateSeriesWarning, WarmupNotReached, ZeroRowWarning
from sensorgraph.events import FeatureVector
from sensorgraph.eventstore import EventStore
from sensorgraph.graph import (
    SensorGraph,
    build_adjacency,
    build_feature_matrix,
    concurrent_count,
    concurrent_prob,
    concurrent_set,
    connectivity,
    correlation_matrix,
    group_recovery_metrics,
    mean_group_recovery,
    snapshot,
    write_matrix_csv,
)

from oracles import FIG_I, FIG_J, brute_A, brute_C, random_sets, store_from

E1, E2, E3, E4 = range(4)



# -- concurrency -----------------------------------------------------------------

def test_worked_example():
    assert len(concurrent_set(FIG_I, FIG_J, 0)) == 2
    assert concurrent_count(FIG_I, FIG_J, 0) == 2
    assert concurrent_count(FIG_I, FIG_I, 0) == 4
    assert concurrent_prob(FIG_I, FIG_J, 0) == 0.5
    assert concurrent_prob(FIG_J, FIG_I, 0) == 0.5
    assert connectivity(FIG_I, FIG_J, 0) == 0.25
    A = build_adjacency(store_from([FIG_I, FIG_J]), ["s0", "s1"], (0, 10), 0)
    np.testing.assert_array_equal(A, [[1, 0.25], [0.25, 1]])


def test_lag_boundary_inclusive():
    si, sj = [(E1, 0)], [(E1, 4)]
    assert concurrent_set(si, sj, 3) == []
    assert concurrent_set(si, sj, 4) == [(E1, 0)]
    assert concurrent_set(FIG_I, FIG_I, 2) == FIG_I
    assert concurrent_count([(E1, 0)], [(E2, 0)], 100) == 0


def test_prob_conventions():
    assert concurrent_prob([], FIG_J, 3) == 0.0
    assert concurrent_prob(FIG_I, FIG_I, 0) == 1.0
    assert connectivity(FIG_I, FIG_I, 0) == 1.0
    with pytest.raises(ValueError):
        concurrent_set(FIG_I, FIG_J, -1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 6))
def test_count_matches_brute_force(seed, delta):
    rng = np.random.default_rng(seed)
    si, sj = random_sets(rng, 2)
    c = concurrent_count(si, sj, delta)
    assert c == brute_C(si, sj, delta)
    assert c <= concurrent_count(si, si, delta) == len(si)
    assert connectivity(si, sj, delta) == pytest.approx(connectivity(sj, si, delta))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_count_monotone_in_delta(seed):
    rng = np.random.default_rng(seed)
    si, sj = random_sets(rng, 2)
    counts = [concurrent_count(si, sj, d) for d in range(0, 12)]
    assert counts == sorted(counts)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 8))
def test_adjacency_matches_oracle(seed, n, delta):
    rng = np.random.default_rng(seed)
    sets = random_sets(rng, n)
    A = build_adjacency(store_from(sets), [f"s{i}" for i in range(n)], (0, 30), delta)
    np.testing.assert_array_equal(A, brute_A(sets, delta))
    assert np.array_equal(A, A.T)
    assert A.min() >= 0 and A.max() <= 1
    for i, s in enumerate(sets):
        assert A[i, i] == (1.0 if s else 0.0)


def test_adjacency_simple_cases():
    assert not build_adjacency(EventStore(), ["a", "b", "c"], (0, 100), 3).any()
    same = [(E1, 2), (E3, 7)]
    A = build_adjacency(store_from([same, same]), ["s0", "s1"], (0, 10), 0)
    np.testing.assert_array_equal(A, np.ones((2, 2)))


def test_adjacency_respects_window():
    store = store_from([[(E1, 1), (E2, 20)], [(E1, 1), (E2, 20)]])
    A = build_adjacency(store, ["s0", "s1"], (10, 30), 0)
    np.testing.assert_array_equal(A, np.ones((2, 2)))
    A = build_adjacency(store_from([[(E1, 1)], [(E1, 20)]]), ["s0", "s1"], (0, 30), 0)
    np.testing.assert_array_equal(A, np.eye(2))


# -- features and snapshots -------------------------------------------------------

def _fv(sid, rows, warm_up=0):
    z = np.asarray(rows, dtype=float)
    return FeatureVector(sid, 100 * np.arange(len(z)), z, warm_up)


def test_feature_matrix():
    feats = {"a": _fv("a", [[0, 0, 0, 0], [1, 0, -2, 3]]),
             "b": _fv("b", [[0, 0, 0, 0], [5, 6, 7, 8]])}
    np.testing.assert_array_equal(build_feature_matrix(feats, ["a"], 100), [[1, 0, -2, 3]])
    ab = build_feature_matrix(feats, ["a", "b"], 100)
    ba = build_feature_matrix(feats, ["b", "a"], 100)
    np.testing.assert_array_equal(ab[::-1], ba)
    with pytest.raises(WarmupNotReached):
        build_feature_matrix({"a": _fv("a", [[0] * 4, [1] * 4], warm_up=2)}, ["a"], 100)


def test_snapshot_and_exports(tmp_path):
    sets = [FIG_I, FIG_J, []]
    store = store_from(sets)
    feats = {f"s{i}": _fv(f"s{i}", np.random.default_rng(i).normal(size=(12, 4))) for i in range(3)}
    g = snapshot(store, feats, ["s0", "s1", "s2"], t=1000, window=1000, delta=0)
    assert g.A[0, 1] == 0.25 and g.A[2, 2] == 0
    np.testing.assert_array_equal(g.X[1], feats["s1"].z[10])

    path = tmp_path / "g.json"
    g.write_json(path, config_hash="abc")
    data = json.loads(path.read_text())
    assert data["config_hash"] == "abc"
    assert set(data) >= {"sensors", "t", "window_s", "delta_s", "A", "X"}
    back = SensorGraph.from_dict(data)
    np.testing.assert_array_equal(back.A, g.A)
    np.testing.assert_array_equal(back.X, g.X)

    gml = tmp_path / "g.graphml"
    g.write_graphml(gml)
    nxg = nx.read_graphml(gml)
    assert nxg["s0"]["s1"]["weight"] == 0.25
    assert nxg.nodes["s1"]["SpikeDip"] == pytest.approx(g.X[1, 0])

    csv_path = tmp_path / "A.csv"
    write_matrix_csv(csv_path, g.A, g.sensors)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "sensor_id,s0,s1,s2" and lines[1].startswith("s0,1.0,0.25")


def test_graph_check_rejects_bad_matrices():
    bad = SensorGraph(["a", "b"], np.array([[1, 0.5], [0.4, 1]]), np.zeros((2, 4)), 0, 1, 0)
    with pytest.raises(ValueError):
        bad.check()


# -- correlation baselines -------------------------------------------------------

def test_pearson_examples():
    x = np.array([1.0, 2, 3, 5, 4])
    M = correlation_matrix(np.vstack([x, -2 * x]), "pearson")
    np.testing.assert_allclose(M, np.ones((2, 2)))
    M = correlation_matrix(np.array([[1.0, 2, 3], [1, 2, 4]]), "pearson")
    assert M[0, 1] == pytest.approx(0.9820, abs=1e-3)


def test_kendall_perfect_discordance():
    M = correlation_matrix(np.array([[1.0, 2, 3], [3, 2, 1]]), "kendall")
    assert M[0, 1] == 1.0


def brute_tau_b(x, y):
    n = len(x)
    conc = disc = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx, dy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif dx == dy:
                conc += 1
            else:
                disc += 1
    return (conc - disc) / np.sqrt((conc + disc + tx) * (conc + disc + ty))


def brute_spearman(x, y):
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        r = [0.0] * len(v)
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            for k in range(i, j + 1):
                r[order[k]] = (i + j) / 2 + 1
            i = j + 1
        return np.array(r)
    return np.corrcoef(ranks(x), ranks(y))[0, 1]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rank_correlations_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    data = rng.integers(0, 5, size=(3, 12)).astype(float)  # heavy ties
    data[:, 0] = [0, 1, 2]
    data[:, 1] = [4, 3, 2]
    K = correlation_matrix(data, "kendall")
    S = correlation_matrix(data, "spearman")
    for i, j in itertools.combinations(range(3), 2):
        assert K[i, j] == pytest.approx(abs(brute_tau_b(data[i], data[j])), abs=1e-12)
        assert S[i, j] == pytest.approx(abs(brute_spearman(data[i], data[j])), abs=1e-12)
    for M in (K, S):
        assert np.allclose(M, M.T) and np.all(np.diag(M) == 1)


def test_constant_series_flagged():
    data = np.array([[1.0, 2, 3, 4], [5, 5, 5, 5], [2, 1, 4, 3]])
    for method in ("pearson", "spearman", "kendall"):
        with pytest.warns(DegenerateSeriesWarning):
            M = correlation_matrix(data, method)
        assert M[1, 0] == M[0, 1] == M[1, 2] == 0 and M[1, 1] == 1


# -- group recovery --------------------------------------------------------------

def test_recovery_perfect_block():
    M = np.zeros((6, 6))
    M[:3, :3] = 1
    m = group_recovery_metrics(M, 0, [0, 1, 2])
    assert (m.m1, m.m2, m.m3) == (1, 1, 1)


def test_recovery_hand_example():
    row = np.array([1.0, 0.5, 0.8, 0.2])
    M = np.tile(row, (4, 1))
    m = group_recovery_metrics(M, 0, {0, 1}, k=2)
    assert m.m1 == 0.5
    assert m.m2 == pytest.approx(0.4)
    assert m.m3 == pytest.approx(0.6)


def test_recovery_ties_by_index():
    M = np.array([[1.0, 0.5, 0.5, 0.5]] * 4)
    assert group_recovery_metrics(M, 0, [0, 2], k=2).m1 == 0.5
    assert group_recovery_metrics(M, 0, [0, 1], k=2).m1 == 1.0


def test_recovery_zero_row():
    with pytest.warns(ZeroRowWarning):
        m = group_recovery_metrics(np.zeros((3, 3)), 1, [1, 2])
    assert (m.m1, m.m2, m.m3, m.zero_row) == (0, 0, 0, True)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_recovery_ranges(seed, size):
    rng = np.random.default_rng(seed)
    M = rng.uniform(size=(8, 8))
    group = sorted(rng.choice(8, size=size, replace=False).tolist())
    m = mean_group_recovery(M, group)
    for v in (m.m1, m.m2, m.m3):
        assert 0 <= v <= 1
    assert m.m2 <= m.m3 + 1e-12
