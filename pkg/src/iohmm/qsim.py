"""Single-server Flash chip queue driven by a binned trace.

Every read block and write block in a bin becomes one job; a write job that
completes a group of ``erase_per_writes`` writes is followed by an erase
job arriving at the same instant. Jobs arriving together are submitted
reads first, then writes in order, each erase right after its write.

Schemes:

* ``none``: one FCFS queue in submission order.
* ``nonpreemptive``: reads go ahead of waiting writes/erases; a job in
  service always finishes.
* ``preemptive``: an arriving read interrupts a write/erase, which later
  resumes where it left off.

The queueing time of a job is its time in system minus its own service
time; for a job that is never interrupted this is service start minus
arrival.
"""
from __future__ import annotations

import enum
import json
import logging
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .cluster import ClusterModel
from .hmm import Hmm
from .stats import ConfidenceBand, batch_means_ci
from .synth import GenConfig, generate_trace
from .trace import BinnedTrace

log = logging.getLogger(__name__)

CLASSES = ("read", "write", "erase")
READ, WRITE, ERASE = 0, 1, 2


class Scheme(str, enum.Enum):
    NoPriority = "none"
    NonPreemptiveRead = "nonpreemptive"
    PreemptiveRead = "preemptive"


class Spread(str, enum.Enum):
    BinStart = "bin_start"
    UniformInBin = "uniform"


class UnstableSystemWarning(UserWarning):
    pass


@dataclass(frozen=True)
class QueueSimConfig:
    service_read: float    # microseconds per block
    service_write: float   # microseconds per block
    service_erase: float   # microseconds per erase
    scheme: Scheme = Scheme.NoPriority
    erase_per_writes: int = 64
    arrival_spread: Spread = Spread.BinStart
    seed: int | None = None
    max_wait_bins: float = 1e4  # backlog cap for the instability warning

    def __post_init__(self):
        if min(self.service_read, self.service_write, self.service_erase) <= 0:
            raise ValueError("service times must be positive")
        if self.erase_per_writes < 1:
            raise ValueError("erase_per_writes must be >= 1")
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "arrival_spread", Spread(self.arrival_spread))


@dataclass
class QueueSimReport:
    mean_queueing_ms: dict[str, float]
    counts: dict[str, int]
    utilization: float
    busy_time_us: float
    demand_us: float
    max_wait_us: float
    replicate_means: dict[str, list[float]] = field(default_factory=dict)
    bands: dict[str, ConfidenceBand] = field(default_factory=dict)


def build_jobs(binned: BinnedTrace, cfg: QueueSimConfig, rng=None):
    """Arrival times (us), classes and service times, in submission order."""
    bins = binned.bins
    width = float(binned.bin_width)
    idx = np.arange(len(bins))
    read_bin = np.repeat(idx, bins[:, 0])
    write_bin = np.repeat(idx, bins[:, 1])
    k = np.arange(1, len(write_bin) + 1)          # global 1-based write number
    erase_k = k[k % cfg.erase_per_writes == 0]
    erase_bin = write_bin[erase_k - 1]
    bin_of = np.concatenate([read_bin, write_bin, erase_bin])
    group = np.concatenate([np.zeros(len(read_bin), np.int64),
                            np.ones(len(write_bin) + len(erase_bin), np.int64)])
    sub = np.concatenate([np.arange(len(read_bin)), 2 * k, 2 * erase_k + 1])
    cls = np.concatenate([np.full(len(read_bin), READ), np.full(len(write_bin), WRITE),
                          np.full(len(erase_bin), ERASE)]).astype(np.int64)
    order = np.lexsort((sub, group, bin_of))
    bin_of, cls = bin_of[order], cls[order]
    if cfg.arrival_spread is Spread.BinStart:
        arrival = bin_of * width
    else:
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        arrival = (bin_of + rng.random(len(bin_of))) * width
        # an erase arrives with the write that triggered it
        is_erase = np.flatnonzero(cls == ERASE)
        arrival[is_erase] = arrival[is_erase - 1]
        order = np.lexsort((np.arange(len(arrival)), arrival))
        arrival, cls = arrival[order], cls[order]
    service = np.array([cfg.service_read, cfg.service_write, cfg.service_erase])[cls]
    return arrival.astype(float), cls, service


@numba.njit(cache=True)
def _fcfs(arrival, service):
    n = arrival.shape[0]
    wait = np.empty(n)
    t = -np.inf
    busy = 0.0
    for i in range(n):
        start = max(t, arrival[i])
        wait[i] = start - arrival[i]
        t = start + service[i]
        busy += service[i]
    return wait, busy, t


@numba.njit(cache=True)
def _priority(arrival, cls, service, preemptive):
    n = arrival.shape[0]
    hi = np.flatnonzero(cls == 0)
    lo = np.flatnonzero(cls != 0)
    nh, nl = hi.shape[0], lo.shape[0]
    wait = np.zeros(n)
    remaining = service.copy()
    ih = 0
    il = 0
    t = 0.0
    busy = 0.0
    if n > 0:
        t = arrival[0]
    while ih < nh or il < nl:
        if ih < nh and arrival[hi[ih]] <= t:
            j = hi[ih]
            wait[j] = t - arrival[j]
            t += service[j]
            busy += service[j]
            ih += 1
        elif il < nl and arrival[lo[il]] <= t:
            j = lo[il]
            next_hi = arrival[hi[ih]] if ih < nh else np.inf
            if preemptive and t + remaining[j] > next_hi:
                remaining[j] -= next_hi - t
                busy += next_hi - t
                t = next_hi
            else:
                t += remaining[j]
                busy += remaining[j]
                remaining[j] = 0.0
                wait[j] = t - arrival[j] - service[j]
                il += 1
        else:
            a = arrival[hi[ih]] if ih < nh else np.inf
            b = arrival[lo[il]] if il < nl else np.inf
            t = min(a, b)
    return wait, busy, t


def job_waits(arrival, cls, service, scheme: Scheme):
    """Queueing time of every job, total busy time and last completion time
    (all in the units of the inputs)."""
    scheme = Scheme(scheme)
    if scheme is Scheme.NoPriority:
        return _fcfs(arrival, service)
    return _priority(arrival, cls, service, scheme is Scheme.PreemptiveRead)


def simulate_queue(binned: BinnedTrace, cfg: QueueSimConfig) -> QueueSimReport:
    if len(binned) == 0:
        raise ValueError("binned trace is empty")
    arrival, cls, service = build_jobs(binned, cfg)
    wait, busy, _ = job_waits(arrival, cls, service, cfg.scheme)
    # wait is clipped only against float noise of the resume arithmetic
    wait = np.maximum(wait, 0.0)
    means, counts = {}, {}
    for c, name in enumerate(CLASSES):
        sel = cls == c
        counts[name] = int(sel.sum())
        means[name] = float(wait[sel].mean() / 1000.0) if sel.any() else float("nan")
    demand = float(service.sum())
    horizon = len(binned) * float(binned.bin_width)
    max_wait = float(wait.max()) if wait.size else 0.0
    util = demand / horizon
    if util > 1 or max_wait > cfg.max_wait_bins * binned.bin_width:
        warnings.warn(f"offered load {util:.3f}, max wait {max_wait / 1000:.1f} ms: "
                      "queue is not stable", UnstableSystemWarning, stacklevel=2)
    return QueueSimReport(means, counts, util, busy, demand, max_wait)


def compare_raw_vs_hmm(raw: BinnedTrace, model: tuple[Hmm, ClusterModel],
                       cfg: QueueSimConfig, replicates: int = 10, level: float = 0.95,
                       schemes=tuple(Scheme), seed=None) -> dict:
    """Raw-trace queueing means against HMM-trace confidence bands.

    The layout mirrors a table of scheme x class x {raw, hmm_mean, ci_lo, ci_hi}.
    """
    hmm, clusters = model
    seeds = np.random.SeedSequence(seed).spawn(replicates)
    traces = [generate_trace(hmm, clusters, GenConfig(len(raw), ss, bin_width=raw.bin_width))
              for ss in seeds]
    out = {}
    for scheme in schemes:
        scfg = QueueSimConfig(cfg.service_read, cfg.service_write, cfg.service_erase,
                              scheme, cfg.erase_per_writes, cfg.arrival_spread, cfg.seed,
                              cfg.max_wait_bins)
        raw_rep = simulate_queue(raw, scfg)
        reps = [simulate_queue(t, scfg) for t in traces]
        row = {}
        for name in CLASSES:
            vals = [r.mean_queueing_ms[name] for r in reps]
            entry = {"raw": raw_rep.mean_queueing_ms[name], "replicates": vals}
            if not np.isnan(vals).any():
                band = batch_means_ci(vals, level)
                entry.update(hmm_mean=band.mean, ci_lo=band.lo, ci_hi=band.hi,
                             inside=bool(band.lo <= entry["raw"] <= band.hi))
            else:
                entry.update(hmm_mean=None, ci_lo=None, ci_hi=None, inside=None)
            row[name] = entry
        out[Scheme(scheme).value] = row
    return out


def comparison_json(report: dict) -> str:
    def clean(o):
        if isinstance(o, float) and o != o:
            return None
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, list):
            return [clean(v) for v in o]
        return o
    return json.dumps(clean(report), indent=2)
