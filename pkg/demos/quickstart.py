"""Build a sensor graph for a one-week synthetic fleet and inspect it.

Run with:  python demos/quickstart.py
"""

import numpy as np

from sensorgraph import build_adjacency, generate_fleet, FleetConfig
from sensorgraph.experiments import run_validation, summarize_validation
from sensorgraph.pipeline import fleet_events, fleet_features, populate_store


def main():
    fleet = generate_fleet(FleetConfig(weeks=1.0, seed=0))
    ids, ts = fleet.sensor_ids, fleet.timestamps
    window = (int(ts[0]), int(ts[-1]))
    print(f"{len(ids)} sensors, {len(ts)} samples each")

    features = fleet_features(fleet.series)
    store = populate_store(fleet_events(features, window=window))
    print(f"{len(store)} events detected")

    A = build_adjacency(store, ids, window, delta=15 * 60)
    target = ids.index("room0_aisle0")
    row = A[target].copy()
    row[target] = -1
    print("strongest neighbours of room0_aisle0:")
    for j in np.argsort(-row)[:5]:
        print(f"  {ids[j]:<20} {A[target, j]:.3f}")

    results = run_validation(fleet, window, A=A, methods=("pearson",))
    rooms = summarize_validation(results, [f"room{r}" for r in range(len(fleet.rooms))])
    for name, m in rooms.items():
        print(f"room groups, {name:<9}: m1 {m.m1:.2f}  m2 {m.m2:.2f}  m3 {m.m3:.2f}")


if __name__ == "__main__":
    main()
