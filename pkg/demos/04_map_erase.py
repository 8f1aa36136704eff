"""Turn a decoded HMM into a continuous-time MAP and add a flash ERASE state."""
import numpy as np

from iohmm import add_erase_state, build_map, run_lengths
from _workload import toy_workload

truth, raw, states = toy_workload(50_000, seed=3)

rl = run_lengths(states, truth.r)
print("mean run length (bins):", np.round(rl.mean_run, 2))
print("geometric prediction  :", np.round(1 / (1 - np.diag(truth.Q)), 2))

mm = build_map(truth.Q, raw, states)
print("generator A (1/s):\n", np.round(mm.A, 1))
print("rates (blocks/s):\n", np.round(mm.rates, 0))

# one erase per 64 writes, fed from the write-heavy state
mm2 = add_erase_state(mm, write_state=1)
print("labels:", mm2.labels)
print("rows sum to zero:", bool(np.allclose(mm2.A.sum(axis=1), 0)))
print("jump chain into ERASE:", np.round(mm2.jump_chain()[:, -1], 4))
