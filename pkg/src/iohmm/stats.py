"""Validation statistics for raw vs. model-generated traces."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .cluster import ClusterModel
from .errors import TooFewReplicates, ZeroVariance
from .hmm import Hmm
from .synth import GenConfig, generate_trace
from .trace import BinnedTrace

MOMENTS = ("read_mean", "read_std", "write_mean", "write_std")


@dataclass
class StatsReport:
    read_mean: float
    read_std: float
    write_mean: float
    write_std: float
    rw_correlation: float | None  # None when either series is constant
    acf_reads: np.ndarray | None = None
    acf_writes: np.ndarray | None = None


@dataclass(frozen=True)
class ConfidenceBand:
    lo: float
    hi: float
    level: float
    batches: int
    mean: float = field(default=float("nan"))

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2


def summary(binned: BinnedTrace) -> StatsReport:
    if len(binned) < 2:
        raise ValueError("need at least two bins")
    x = binned.bins.astype(float)
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    if std[0] > 0 and std[1] > 0:
        c = np.corrcoef(x[:, 0], x[:, 1])[0, 1]
        corr = float(np.clip(c, -1.0, 1.0))
    else:
        corr = None
    return StatsReport(float(mean[0]), float(std[0]), float(mean[1]),
                       float(std[1]), corr)


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags 1..max_lag.

    Uses one global mean and the lag-0 sum of squares as the denominator
    for every lag (the biased estimator), so values are bounded by 1.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if not 1 <= max_lag < n:
        raise ValueError("need 1 <= max_lag < len(series)")
    d = x - x.mean()
    denom = d @ d
    if denom <= 0:
        raise ZeroVariance("series has zero variance")
    # FFT autocovariance; zero-padding to >= 2n avoids wrap-around
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, nfft)
    cov = np.fft.irfft(f * np.conj(f), nfft)[1:max_lag + 1]
    return cov / denom


def batch_means_ci(values, level: float = 0.95) -> ConfidenceBand:
    """Student-t interval for the mean of independent replicate statistics."""
    v = np.asarray(values, dtype=float)
    k = len(v)
    if k < 2:
        raise TooFewReplicates(f"need at least 2 replicates, got {k}")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if (v == v[0]).all():
        # summation round-off would otherwise shift a zero-width band
        return ConfidenceBand(float(v[0]), float(v[0]), level, k, float(v[0]))
    mean = float(v.mean())
    half = sps.t.ppf(0.5 + level / 2, k - 1) * v.std(ddof=1) / np.sqrt(k)
    return ConfidenceBand(mean - half, mean + half, level, k, mean)


def _acf_or_nan(x, max_lag):
    try:
        return acf(x, max_lag)
    except ZeroVariance:
        return np.full(max_lag, np.nan)


@dataclass
class MetricComparison:
    raw: float | None
    band: ConfidenceBand | None
    inside: bool | None

    def to_dict(self):
        b = self.band
        return {"raw": self.raw, "inside": self.inside,
                "hmm_mean": None if b is None else b.mean,
                "ci_lo": None if b is None else b.lo,
                "ci_hi": None if b is None else b.hi}


@dataclass
class ValidationReport:
    level: float
    replicates: int
    length: int
    metrics: dict[str, MetricComparison]
    raw: StatsReport
    replicate_stats: list[StatsReport]
    acf_lags: np.ndarray
    acf_raw_reads: np.ndarray
    acf_raw_writes: np.ndarray
    acf_hmm_reads: np.ndarray
    acf_hmm_writes: np.ndarray

    @property
    def flagged(self) -> list[str]:
        return [k for k, v in self.metrics.items() if v.inside is False]

    def to_dict(self) -> dict:
        def stats_dict(s):
            return {k: getattr(s, k) for k in MOMENTS + ("rw_correlation",)}
        return {
            "level": self.level,
            "replicates": self.replicates,
            "length": self.length,
            "metrics": {k: v.to_dict() for k, v in self.metrics.items()},
            "flagged": self.flagged,
            "raw": stats_dict(self.raw),
            "replicate_stats": [stats_dict(s) for s in self.replicate_stats],
        }

    def to_json(self) -> str:
        return json.dumps(_nan_to_none(self.to_dict()), indent=2)

    def acf_csv(self) -> str:
        buf = io.StringIO()
        buf.write("lag,acf_raw_reads,acf_hmm_reads,acf_raw_writes,acf_hmm_writes\n")
        for row in zip(self.acf_lags, self.acf_raw_reads, self.acf_hmm_reads,
                       self.acf_raw_writes, self.acf_hmm_writes):
            buf.write(f"{int(row[0])}," + ",".join(repr(float(v)) for v in row[1:]) + "\n")
        return buf.getvalue()


def _nan_to_none(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def validate(raw: BinnedTrace, model: tuple[Hmm, ClusterModel], replicates: int = 10,
             level: float = 0.95, max_lag: int = 100, seed=None,
             length: int | None = None) -> ValidationReport:
    """Compare a raw trace with ``replicates`` synthetic traces from ``model``.

    Each synthetic trace has the raw trace's length unless ``length`` is
    given. Bands come from :func:`batch_means_ci` over the per-replicate
    statistics; the pooled model ACF is the replicate average.
    """
    if replicates < 2:
        raise TooFewReplicates(f"need at least 2 replicates, got {replicates}")
    hmm, clusters = model
    length = length or len(raw)
    raw_stats = summary(raw)
    seeds = np.random.SeedSequence(seed).spawn(replicates)
    reps = []
    acfs_r, acfs_w = [], []
    for ss in seeds:
        tr = generate_trace(hmm, clusters, GenConfig(length, ss, bin_width=raw.bin_width))
        reps.append(summary(tr))
        acfs_r.append(_acf_or_nan(tr.reads, max_lag))
        acfs_w.append(_acf_or_nan(tr.writes, max_lag))

    metrics = {}
    for name in MOMENTS + ("rw_correlation",):
        vals = [getattr(s, name) for s in reps]
        rv = getattr(raw_stats, name)
        if any(v is None for v in vals):
            metrics[name] = MetricComparison(rv, None, None)
            continue
        band = batch_means_ci(vals, level)
        metrics[name] = MetricComparison(rv, band, None if rv is None else rv in band)

    return ValidationReport(
        level, replicates, length, metrics, raw_stats, reps,
        np.arange(1, max_lag + 1),
        _acf_or_nan(raw.reads, max_lag), _acf_or_nan(raw.writes, max_lag),
        np.nanmean(np.array(acfs_r), axis=0) if not np.isnan(acfs_r).all() else np.full(max_lag, np.nan),
        np.nanmean(np.array(acfs_w), axis=0) if not np.isnan(acfs_w).all() else np.full(max_lag, np.nan),
    )
