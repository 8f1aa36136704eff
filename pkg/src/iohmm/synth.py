"""Synthetic binned traces from a fitted (Hmm, ClusterModel) pair.

Each bin's observation id comes from simulating the HMM; its (R, W) counts
are a draw from the cluster's bivariate normal, truncated to the
non-negative quadrant by rejection and rounded half-up.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cluster import ClusterModel, ClusterStats
from .hmm import Hmm, simulate
from .trace import BinnedTrace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenConfig:
    length: int
    seed: int | None = None
    max_rejections: int = 1000
    bin_width: float = 5000.0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.max_rejections < 1:
            raise ValueError("max_rejections must be >= 1")


def _psd_cov(stats: ClusterStats) -> np.ndarray:
    cov = stats.cov_matrix
    if np.linalg.eigvalsh(cov).min() < -1e-12:
        # keep the marginals, drop the correlation
        cov = np.diag(np.diag(cov))
    return cov


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5).astype(np.int64)


def _draw(stats: ClusterStats, n: int, rng: np.random.Generator,
          max_rejections: int) -> np.ndarray:
    if stats.singleton_zero:
        return np.zeros((n, 2), dtype=np.int64)
    mean = np.asarray(stats.centroid, dtype=float)
    cov = _psd_cov(stats)
    # multivariate_normal with method="eigh" copes with singular covariances
    out = np.empty((n, 2))
    pending = np.arange(n)
    for _ in range(max_rejections):
        if pending.size == 0:
            break
        x = rng.multivariate_normal(mean, cov, size=pending.size, method="eigh")
        ok = (x >= 0).all(axis=1)
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    if pending.size:
        log.warning("cluster %d: %d draws exceeded %d rejections, clamping at 0",
                    stats.id, pending.size, max_rejections)
        x = rng.multivariate_normal(mean, cov, size=pending.size, method="eigh")
        out[pending] = np.clip(x, 0.0, None)
    return _round_half_up(out)


def sample_bin(stats: ClusterStats, rng: np.random.Generator,
               max_rejections: int = 1000) -> tuple[int, int]:
    """One (R, W) draw for a bin in this cluster."""
    r, w = _draw(stats, 1, rng, max_rejections)[0]
    return int(r), int(w)


def sample_bins(stats: ClusterStats, n: int, rng: np.random.Generator,
                max_rejections: int = 1000) -> np.ndarray:
    return _draw(stats, n, rng, max_rejections)


def generate_trace(hmm: Hmm, clusters: ClusterModel, cfg: GenConfig,
                   return_states: bool = False):
    """Synthetic binned trace of ``cfg.length`` bins."""
    if hmm.m != clusters.m:
        raise ValueError(f"HMM alphabet {hmm.m} != {clusters.m} clusters")
    ss = cfg.seed if isinstance(cfg.seed, np.random.SeedSequence) else np.random.SeedSequence(cfg.seed)
    chain_seed, count_seed = ss.spawn(2)
    states, obs = simulate(hmm, cfg.length, np.random.default_rng(chain_seed))
    rng = np.random.default_rng(count_seed)
    bins = np.zeros((cfg.length, 2), dtype=np.int64)
    for c in clusters.clusters:
        idx = np.flatnonzero(obs.obs == c.id)
        if idx.size:
            bins[idx] = _draw(c, idx.size, rng, cfg.max_rejections)
    trace = BinnedTrace(cfg.bin_width, bins)
    if return_states:
        return trace, states, obs
    return trace
