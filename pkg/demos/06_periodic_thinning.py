"""Periodic slot activity: thin away the idle slots, then check the HMM keeps the period."""
import numpy as np

from iohmm import (BinnedTrace, GenConfig, acf, baum_welch, fit_clusters, generate_trace,
                   observation_sequence, thin_periodic)

# 100 ms bins; each second only slots 0, 1, 2 and 4 carry IO, each with its own mix
rng = np.random.default_rng(2024)
seconds = 3000
bins = np.zeros((seconds * 10, 2), dtype=np.int64)
for slot, (mr, mw) in {0: (120, 10), 1: (60, 40), 2: (20, 5), 4: (40, 90)}.items():
    bins[slot::10, 0] = rng.poisson(mr, seconds)
    bins[slot::10, 1] = rng.poisson(mw, seconds)
raw = BinnedTrace(100_000, bins)
print("raw ACF at lags 10, 20, 30:", np.round(acf(raw.reads + raw.writes, 30)[[9, 19, 29]], 3))

thin = thin_periodic(raw, 10, {0, 1, 2, 4})
print(f"thinned to {len(thin)} bins, period now 4")

clusters = fit_clusters(thin, "joint", k=4, seed=3)
fit = baum_welch(observation_sequence(clusters, thin), 6, init=5)
syn = generate_trace(fit.hmm, clusters, GenConfig(len(thin), 11, bin_width=thin.bin_width))

for name, b in (("thinned", thin), ("hmm", syn)):
    print(f"{name:8s} read ACF 1..8:", " ".join(f"{v:+.2f}" for v in acf(b.reads, 8)))
