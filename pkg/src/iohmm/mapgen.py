"""Continuous-time modulating chain derived from a fitted HMM.

Mean holding times come from run lengths in the Viterbi path rather than
from the diagonal of Q: ``1 / (1 - q_ii)`` is very sensitive to small
errors when ``q_ii`` is close to 1. The geometric value is still reported
for comparison.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidState, MissingState
from .hmm import ViterbiPath
from .trace import BinnedTrace

ERASE_BLOCK_PAGES = 64


@dataclass(frozen=True)
class RunLengthStats:
    mean_run: np.ndarray    # NaN for states absent from the path
    run_counts: np.ndarray


@dataclass(frozen=True, eq=False)
class MapModel:
    A: np.ndarray
    holding_mean: np.ndarray
    rates: np.ndarray          # (r, 2) read/write blocks per second
    bin_width: float           # seconds
    labels: tuple[str, ...] = field(default=())
    geometric_holding: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        r = A.shape[0]
        off = A - np.diag(np.diag(A))
        if (off < 0).any() or (np.diag(A) > 0).any():
            raise ValueError("A must have non-negative off-diagonal and non-positive diagonal")
        if (np.abs(A.sum(axis=1)) > 1e-9 * max(1.0, np.abs(A).max())).any():
            raise ValueError("rows of A must sum to zero")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "holding_mean", np.asarray(self.holding_mean, dtype=float))
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float).reshape(r, 2))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"S{i}" for i in range(r)))

    @property
    def r(self) -> int:
        return self.A.shape[0]

    def jump_chain(self) -> np.ndarray:
        return jump_chain(self.A)

    def to_dict(self) -> dict:
        d = {
            "bin_width_s": self.bin_width,
            "A": self.A.tolist(),
            "holding_mean_s": self.holding_mean.tolist(),
            "rates": [{"read_bps": float(a), "write_bps": float(b)} for a, b in self.rates],
            "labels": list(self.labels),
        }
        if self.geometric_holding is not None:
            d["geometric_holding_mean_s"] = [None if np.isnan(v) else float(v)
                                             for v in self.geometric_holding]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MapModel":
        rates = [(x["read_bps"], x["write_bps"]) for x in d["rates"]]
        geo = d.get("geometric_holding_mean_s")
        return cls(np.array(d["A"]), np.array(d["holding_mean_s"]), np.array(rates),
                   float(d["bin_width_s"]), tuple(d.get("labels", ())),
                   None if geo is None else np.array([np.nan if v is None else v for v in geo]))


def _states(path) -> np.ndarray:
    return np.asarray(path.states if isinstance(path, ViterbiPath) else path, dtype=np.int64)


def run_lengths(path, r: int | None = None) -> RunLengthStats:
    s = _states(path)
    if s.size == 0:
        raise ValueError("empty path")
    r = r if r is not None else int(s.max()) + 1
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    lengths = np.diff(np.r_[starts, s.size])
    run_state = s[starts]
    counts = np.bincount(run_state, minlength=r)
    total = np.bincount(run_state, weights=lengths, minlength=r)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, total / np.maximum(counts, 1), np.nan)
    return RunLengthStats(mean, counts)


def jump_chain(A: np.ndarray) -> np.ndarray:
    """Embedded jump-chain transition matrix of a generator."""
    A = np.asarray(A, dtype=float)
    r = A.shape[0]
    exit_rate = -np.diag(A)
    P = np.zeros((r, r))
    for i in range(r):
        if exit_rate[i] > 0:
            P[i] = A[i] / exit_rate[i]
            P[i, i] = 0.0
        else:
            P[i, i] = 1.0  # absorbing
    return P


def geometric_holding(Q: np.ndarray, bin_width: float) -> np.ndarray:
    """Mean holding times implied by the diagonal of Q alone."""
    d = np.diag(np.asarray(Q, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(d < 1, bin_width / (1 - d), np.inf)


def generators(Q, rl: RunLengthStats, bin_width: float,
               renormalize: bool = True) -> MapModel:
    """Generator matrix from one-step probabilities and Viterbi run lengths.

    ``a_ij = q_ij / (bin_width * m_i)`` for ``j != i``. With ``renormalize``
    (the default) the off-diagonal q's are first divided by ``1 - q_ii`` so
    that the total exit rate is exactly ``1 / (bin_width * m_i)``.
    ``bin_width`` is in seconds.
    """
    Q = np.asarray(Q, dtype=float)
    r = Q.shape[0]
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    for i in range(r):
        if i >= len(rl.run_counts) or rl.run_counts[i] == 0:
            raise MissingState(i)
    m = rl.mean_run[:r]
    off = Q.copy()
    np.fill_diagonal(off, 0.0)
    if renormalize:
        mass = off.sum(axis=1, keepdims=True)
        off = np.divide(off, mass, out=np.zeros_like(off), where=mass > 0)
    A = off / (bin_width * m)[:, None]
    np.fill_diagonal(A, -A.sum(axis=1))
    with np.errstate(divide="ignore"):
        holding = np.where(np.diag(A) < 0, -1.0 / np.diag(A), np.inf)
    return MapModel(A, holding, np.zeros((r, 2)), bin_width,
                    geometric_holding=geometric_holding(Q, bin_width))


def state_rates(binned: BinnedTrace, path, bin_width: float | None = None,
                r: int | None = None) -> np.ndarray:
    """Mean read and write blocks per second in each decoded state."""
    s = _states(path)
    if len(s) != len(binned):
        raise ValueError("path and trace lengths differ")
    bw = binned.bin_width_s if bin_width is None else bin_width
    r = r if r is not None else int(s.max()) + 1
    counts = np.bincount(s, minlength=r)
    for i in range(r):
        if counts[i] == 0:
            raise MissingState(i)
    x = binned.bins.astype(float)
    sums = np.stack([np.bincount(s, weights=x[:, 0], minlength=r),
                     np.bincount(s, weights=x[:, 1], minlength=r)], axis=1)
    return sums / counts[:, None] / bw


def build_map(Q, binned: BinnedTrace, path, renormalize: bool = True) -> MapModel:
    """Generators plus per-state rates, all from one decoded trace."""
    Q = np.asarray(Q)
    r = Q.shape[0]
    rl = run_lengths(path, r)
    mm = generators(Q, rl, binned.bin_width_s, renormalize)
    rates = state_rates(binned, path, r=r)
    return MapModel(mm.A, mm.holding_mean, rates, mm.bin_width, mm.labels,
                    mm.geometric_holding)


def add_erase_state(mm: MapModel, write_state: int, ratio: float = 1 / ERASE_BLOCK_PAGES,
                    erase_holding: float | None = None) -> MapModel:
    """Append an ERASE state fed from the jump chain's transitions into
    ``write_state``.

    Every state ``i`` gets ``p(i -> erase) = ratio * p(i -> write_state)``
    and its row is renormalised; the erase state always jumps to
    ``write_state``. Holding times of existing states are unchanged.

    The erase holding time defaults to ``ratio`` times the write state's
    mean holding time: one erase-block's worth of time for every
    ``1 / ratio`` pages written in a write-state sojourn.
    """
    r = mm.r
    if not 0 <= write_state < r:
        raise InvalidState(f"write_state {write_state} not in [0, {r})")
    if not ratio > 0:
        raise ValueError("ratio must be positive")
    P = jump_chain(mm.A)
    exit_rate = -np.diag(mm.A)
    P2 = np.zeros((r + 1, r + 1))
    P2[:r, :r] = P
    P2[:r, r] = ratio * P[:, write_state]
    # absorbing rows stay absorbing
    P2[:r] /= P2[:r].sum(axis=1, keepdims=True)
    P2[r, write_state] = 1.0
    if erase_holding is None:
        erase_holding = ratio * mm.holding_mean[write_state]
    if not erase_holding > 0:
        raise ValueError("erase holding time must be positive")
    rates_out = np.r_[exit_rate, 1.0 / erase_holding]
    A = P2 * rates_out[:, None]
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, -A.sum(axis=1))
    holding = np.r_[mm.holding_mean, erase_holding]
    rates = np.vstack([mm.rates, [0.0, 0.0]])
    geo = None if mm.geometric_holding is None else np.r_[mm.geometric_holding, np.nan]
    return MapModel(A, holding, rates, mm.bin_width, tuple(mm.labels) + ("ERASE",), geo)


def simulate_jumps(P: np.ndarray, n_jumps: int, start: int = 0, seed=None) -> np.ndarray:
    """Visited states of a discrete jump chain, ``n_jumps + 1`` entries."""
    from .hmm import _sample_chain
    rng = np.random.default_rng(seed)
    r = P.shape[0]
    cum_start = np.zeros(r)
    cum_start[start:] = 1.0
    return _sample_chain(cum_start, np.cumsum(P, axis=1), np.r_[0.0, rng.random(n_jumps)])


def simulate_ctmc(A: np.ndarray, n_sojourns: int, start: int = 0, seed=None):
    """States and holding times of ``n_sojourns`` consecutive sojourns."""
    rng = np.random.default_rng(seed)
    states = simulate_jumps(jump_chain(A), n_sojourns - 1, start, rng)
    rate = -np.diag(A)[states]
    return states, rng.exponential(1.0 / rate)
