"""Generate synthetic traces from a fitted model and check them against the raw trace."""
from iohmm import GenConfig, baum_welch, fit_clusters, generate_trace, observation_sequence, validate
from _workload import toy_workload

_, raw, _ = toy_workload(20_000, seed=2)
clusters = fit_clusters(raw, mode="product", k_r=2, k_w=4, seed=1)
fit = baum_welch(observation_sequence(clusters, raw), r=3, init=3, restarts=2)
model = (fit.hmm, clusters)

syn = generate_trace(fit.hmm, clusters, GenConfig(len(raw), seed=5))
print(f"synthetic trace: {len(syn)} bins, {syn.reads.sum()} read and {syn.writes.sum()} write blocks")

rep = validate(raw, model, replicates=10, max_lag=20, seed=9)
for name, m in rep.metrics.items():
    band = "n/a" if m.band is None else f"[{m.band.lo:.3f}, {m.band.hi:.3f}]"
    print(f"  {name:15s} raw {m.raw if m.raw is None else round(m.raw, 3)!s:>8}  band {band}  "
          f"{'ok' if m.inside is not False else 'FLAGGED'}")
print("flagged:", rep.flagged or "none")
print("lag-1 ACF reads raw/model: "
      f"{rep.acf_raw_reads[0]:.3f} / {rep.acf_hmm_reads[0]:.3f}")
