import numpy as np
import pytest

from sensorgraph.synth import (
    FleetConfig,
    generate_fleet,
    inject_feature_anomaly,
    inject_series_anomaly,
    read_dataset,
    write_dataset,
)

SHORT = FleetConfig(weeks=1.0, seed=3)


@pytest.fixture(scope="module")
def fleet():
    return generate_fleet(SHORT)


def test_default_fleet_has_163_sensors():
    cfg = FleetConfig(weeks=0.5)
    ds = generate_fleet(cfg)
    assert len(ds.series) == 163
    assert len(ds.rooms) == 7 and all(len(r) == 8 for r in ds.rooms)
    assert ds.labels.shape == (163, cfg.n_samples) and not ds.labels.any()


def test_generation_is_deterministic(fleet):
    again = generate_fleet(SHORT)
    assert again.sensor_ids == fleet.sensor_ids
    assert np.array_equal(again.values(), fleet.values())
    other = generate_fleet(FleetConfig(weeks=1.0, seed=4))
    assert not np.array_equal(other.values(), fleet.values())


def test_group_truth_covers_rooms_and_pairs(fleet):
    truth = fleet.group_truth
    for room in fleet.rooms:
        assert frozenset(room) in truth
    for name in ("temperature", "humidity", "wbt"):
        assert frozenset({f"env_{name}_a", f"env_{name}_b"}) in truth


def test_redundant_pairs_are_highly_correlated(fleet):
    for name in ("temperature", "humidity", "wbt"):
        a = fleet.series[f"env_{name}_a"].values
        b = fleet.series[f"env_{name}_b"].values
        assert np.corrcoef(a, b)[0, 1] > 0.95


def test_invalid_config():
    with pytest.raises(ValueError):
        FleetConfig(rooms=0)
    with pytest.raises(ValueError):
        FleetConfig(weeks=0)


# -- feature-matrix anomalies -----------------------------------------------------

ROOMS = [list(range(8 * r, 8 * r + 8)) for r in range(7)]


def test_feature_anomaly_p0_is_identity():
    frames = np.random.default_rng(0).normal(size=(50, 60, 4))
    out, labels = inject_feature_anomaly(frames, ROOMS, p=0.0)
    assert np.array_equal(out, frames) and not labels.any()


def test_feature_anomaly_p1_one_room():
    frames = np.zeros((40, 60, 4))
    out, labels = inject_feature_anomaly(frames, ROOMS[:1], p=1.0, seed=1)
    assert np.all(labels.sum(axis=1) == 8)
    assert labels[:, :8].all() and not labels[:, 8:].any()
    assert not out[:, 8:].any()
    # one sign per injection, magnitudes drawn independently per entry
    for t in range(40):
        block = out[t, :8]
        sign = np.sign(block.sum())
        # N(3, 1) is negative with probability 0.13%, so a few entries may flip
        assert np.mean(sign * block > 0) > 0.9
        assert len(np.unique(block)) == 32


def test_feature_anomaly_label_rate():
    n_t, n = 20000, 60
    _, labels = inject_feature_anomaly(np.zeros((n_t, n, 4)), ROOMS, p=0.2, seed=2)
    rate = labels.mean()
    expected = 0.2 * 8 / n
    # labels come in blocks of 8 per injected step: a binomial over steps
    sigma = np.sqrt(0.2 * 0.8 / n_t) * 8 / n
    assert abs(rate - expected) < 3 * sigma


def test_feature_anomaly_magnitudes():
    _, labels = inject_feature_anomaly(np.zeros((5000, 56, 4)), ROOMS, p=0.5, seed=3)
    out, _ = inject_feature_anomaly(np.zeros((5000, 56, 4)), ROOMS, p=0.5, seed=3)
    mags = np.abs(out[labels])
    assert abs(mags.mean() - 3) < 0.05 and abs(mags.std() - 1) < 0.05


# -- series anomalies ---------------------------------------------------------------

def test_series_anomaly_p0_is_identity(fleet):
    out = inject_series_anomaly(fleet, p=0.0)
    assert np.array_equal(out.values(), fleet.values()) and not out.labels.any()


def test_single_injection_window(fleet):
    ts = fleet.timestamps
    t0 = int(ts[100])
    out = inject_series_anomaly(fleet, p=1.0, seed=5, start=t0, stop=t0 + 1)
    rows = np.flatnonzero(out.labels.any(axis=1))
    assert len(rows) == 8
    assert {fleet.sensor_ids[i] for i in rows} in [set(r) for r in fleet.rooms]
    span = np.flatnonzero(out.labels.any(axis=0))
    assert span.tolist() == list(range(100, 112))
    assert np.all(out.labels[rows][:, 100:112])
    diff = out.values() - fleet.values()
    assert not diff[:, :100].any() and not diff[:, 112:].any()
    assert abs(diff[rows, 100:112].mean() - 6) < 1
    # each sensor gets a constant offset over the hour
    assert np.allclose(diff[rows, 100:112], diff[rows, 100:101])


def test_overlapping_injections_add_up(fleet):
    ts = fleet.timestamps
    out = inject_series_anomaly(fleet, p=1.0, seed=6, start=int(ts[10]), stop=int(ts[40]))
    diff = out.values() - fleet.values()
    assert diff.max() > 10  # several hour-long offsets stack on the same room
    assert np.array_equal(out.labels, diff != 0)


def test_dataset_roundtrip(tmp_path):
    ds = generate_fleet(FleetConfig(weeks=0.5, seed=1))
    ds = inject_series_anomaly(ds, p=0.05, seed=1)
    write_dataset(tmp_path, ds, header_comment="config_hash=abc")
    assert (tmp_path / "data.csv").read_text().startswith("# config_hash=abc\n")
    back = read_dataset(tmp_path)
    assert back.sensor_ids == ds.sensor_ids
    assert np.array_equal(back.values(), ds.values())
    assert np.array_equal(back.labels, ds.labels)
    assert back.groups == ds.groups and back.rooms == ds.rooms
