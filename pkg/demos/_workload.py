"""Shared toy workload for the demos: a 3-state fixture re-emitted through hand clusters."""
from iohmm import ClusterModel, ClusterStats, GenConfig, generate_trace, load_fixture

CENTROIDS = [(5.7, 0.28), (4.45, 31.3), (5.11, 82.1), (4.49, 183.0),
             (23.7, 0.217), (24.5, 31.7), (27.3, 81.0), (25.8, 165.8)]
STDS = [(1.5, 0.3), (1.5, 5), (1.5, 8), (1.5, 12), (3, 0.3), (3, 5), (3, 8), (3, 12)]


def toy_workload(length=20_000, seed=0):
    truth = load_fixture("update_mix")
    clusters = ClusterModel(tuple(ClusterStats(i, c, s, 0.0, 0)
                                  for i, (c, s) in enumerate(zip(CENTROIDS, STDS))))
    raw, states, _ = generate_trace(truth, clusters, GenConfig(length, seed), return_states=True)
    return truth, raw, states
