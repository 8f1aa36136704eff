"""Parse a raw IO trace, bin it, thin it periodically and write the binned CSV."""
import numpy as np

from iohmm import bin_trace, parse_trace, summary, thin_periodic, write_binned_csv

rng = np.random.default_rng(0)
lines = ["timestamp_us,op,size_blocks"]
t = 0
for i in range(4000):
    t += int(rng.exponential(1200))
    op = "R" if rng.random() < 0.7 else "W"
    lines.append(f"{t},{op},{rng.integers(1, 17)}")

records = parse_trace("\n".join(lines))
binned = bin_trace(records, 5000)
print(f"{len(records)} records -> {len(binned)} bins of {binned.bin_width:g} us")
print("blocks conserved:", binned.reads.sum() + binned.writes.sum()
      == sum(r.size for r in records))

s = summary(binned)
print(f"reads/bin {s.read_mean:.2f} +- {s.read_std:.2f}, "
      f"writes/bin {s.write_mean:.2f} +- {s.write_std:.2f}, corr {s.rw_correlation:.3f}")

# keep slots 0 and 1 out of every 4 bins, dropping the rest
thinned = thin_periodic(binned, 4, {0, 1})
print(f"thinned: {len(thinned)} of {len(binned)} bins kept")
print(write_binned_csv(binned).splitlines()[:4])
