"""Cluster bins into an alphabet, fit an HMM by Baum-Welch and decode with Viterbi."""
import itertools

import numpy as np

from iohmm import baum_welch, fit_clusters, observation_sequence, viterbi
from _workload import toy_workload

truth, raw, true_states = toy_workload(20_000, seed=1)

clusters = fit_clusters(raw, mode="product", k_r=2, k_w=4, seed=1)
obs = observation_sequence(clusters, raw)
print(f"alphabet of {clusters.m} clusters")
for c in clusters.clusters:
    print(f"  {c.id}: centroid ({c.centroid[0]:6.2f}, {c.centroid[1]:6.2f})  n={c.count}")

fit = baum_welch(obs, r=3, init=7, restarts=3)
print(f"converged={fit.converged} after {fit.iterations} iterations, "
      f"log L {fit.log_likelihood:.1f}")
print("monotone:", bool((np.diff(fit.trajectory) >= -1e-8).all()))
print("Q =\n", np.round(fit.hmm.Q, 3))

path = viterbi(fit.hmm, obs)
# states are only identified up to relabelling, so match each fitted state to its true one
agree = max(np.mean(np.take(p, path.states) == true_states)
            for p in itertools.permutations(range(3)))
print(f"Viterbi agrees with the hidden states on {agree:.1%} of bins")
