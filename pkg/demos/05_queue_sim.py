"""Queueing delays under three read-priority schemes, raw trace against HMM replicates."""
from iohmm import QueueSimConfig, baum_welch, compare_raw_vs_hmm, fit_clusters, observation_sequence
from iohmm import simulate_queue
from _workload import toy_workload

_, raw, _ = toy_workload(10_000, seed=4)
clusters = fit_clusters(raw, mode="product", k_r=2, k_w=4, seed=1)
fit = baum_welch(observation_sequence(clusters, raw), r=3, init=1, restarts=2)

# per-block service times in microseconds, chosen so the server runs at moderate load
cfg = dict(service_read=10.0, service_write=40.0, service_erase=600.0)
for scheme in ("none", "nonpreemptive", "preemptive"):
    rep = simulate_queue(raw, QueueSimConfig(scheme=scheme, **cfg))
    q = rep.mean_queueing_ms
    print(f"{scheme:14s} util {rep.utilization:.2f}  read {q['read']:.3f} ms  "
          f"write {q['write']:.3f} ms  erase {q['erase']:.3f} ms")

cmp = compare_raw_vs_hmm(raw, (fit.hmm, clusters), QueueSimConfig(**cfg), replicates=5, seed=0)
for scheme, per_cls in cmp.items():
    for cls, e in per_cls.items():
        print(f"{scheme:14s} {cls:6s} raw {e['raw']:.3f}  hmm [{e['ci_lo']:.3f}, {e['ci_hi']:.3f}]"
              f"  {'inside' if e['inside'] else 'outside'}")
