"""Discrete-observation hidden Markov models.

States and observation values are zero-based. The forward-backward pass is
normalised at every step, so sequences of millions of bins neither underflow
nor lose the likelihood: ``log L = sum(log scale)``.

Viterbi runs in the log domain with ``-inf`` for impossible transitions and
breaks ties towards the lowest state index; scores that agree to a
relative 1e-12 count as tied, since summation order alone can separate
paths of equal probability.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from importlib import resources

import numba
import numpy as np

from .cluster import ObservationSequence
from .errors import ImpossibleObservation

log = logging.getLogger(__name__)

ROW_TOL = 1e-9
VITERBI_TIE_RTOL = 1e-12  # relative log-score gap treated as a tie


class DegenerateStateWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Hmm:
    nu: np.ndarray
    Q: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float).ravel()
        Q = np.array(self.Q, dtype=float)
        G = np.array(self.G, dtype=float)
        r = len(nu)
        if Q.shape != (r, r) or G.ndim != 2 or G.shape[0] != r:
            raise ValueError(f"shape mismatch: nu {nu.shape}, Q {Q.shape}, G {G.shape}")
        for name, a in (("nu", nu), ("Q", Q), ("G", G)):
            if (a < 0).any() or (a > 1).any():
                raise ValueError(f"{name} entries must lie in [0, 1]")
        if abs(nu.sum() - 1) > ROW_TOL:
            raise ValueError("nu must sum to 1")
        if (np.abs(Q.sum(axis=1) - 1) > ROW_TOL).any():
            raise ValueError("rows of Q must sum to 1")
        if (np.abs(G.sum(axis=1) - 1) > ROW_TOL).any():
            raise ValueError("rows of G must sum to 1")
        for a in (nu, Q, G):
            a.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "G", G)

    @property
    def r(self) -> int:
        return len(self.nu)

    @property
    def m(self) -> int:
        return self.G.shape[1]

    @classmethod
    def normalized(cls, nu, Q, G) -> "Hmm":
        """Build from approximately stochastic arrays, rescaling every row."""
        nu = np.asarray(nu, dtype=float)
        Q = np.asarray(Q, dtype=float)
        G = np.asarray(G, dtype=float)
        return cls(nu / nu.sum(), Q / Q.sum(axis=1, keepdims=True),
                   G / G.sum(axis=1, keepdims=True))

    def permuted(self, perm) -> "Hmm":
        """Relabel hidden states: new state ``k`` is old state ``perm[k]``."""
        p = np.asarray(perm)
        return Hmm(self.nu[p], self.Q[np.ix_(p, p)], self.G[p])

    def to_dict(self) -> dict:
        return {"r": self.r, "m": self.m, "nu": self.nu.tolist(),
                "Q": self.Q.tolist(), "G": self.G.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "Hmm":
        h = cls(d["nu"], d["Q"], d["G"])
        if ("r" in d and d["r"] != h.r) or ("m" in d and d["m"] != h.m):
            raise ValueError("declared r/m disagree with matrix shapes")
        return h

    @classmethod
    def from_json(cls, text: str) -> "Hmm":
        return cls.from_dict(json.loads(text))


def load_fixture(name: str) -> Hmm:
    """Load a checked-in model: ``update_mix``, ``oltp_mix`` or ``cifs_12state``."""
    text = resources.files("iohmm.fixtures").joinpath(f"{name}.json").read_text()
    d = json.loads(text)
    return Hmm.normalized(d["nu"], d["Q"], d["G"])


@dataclass(frozen=True, eq=False)
class SmoothingCache:
    log_likelihood: float
    phi: np.ndarray       # (n+1, r) marginal posteriors
    phi_pair: np.ndarray  # (n, r, r) posteriors of consecutive pairs
    scale: np.ndarray     # (n+1,) per-step normalisers


@dataclass(frozen=True, eq=False)
class ViterbiPath:
    states: np.ndarray
    max_log_posterior: float

    def __len__(self):
        return len(self.states)


def _obs_array(hmm: Hmm, obs) -> np.ndarray:
    if isinstance(obs, ObservationSequence):
        if obs.m != hmm.m:
            raise ValueError(f"alphabet size {obs.m} != model m {hmm.m}")
        s = obs.obs
    else:
        s = np.asarray(obs, dtype=np.int64).ravel()
        if s.size and (s.min() < 0 or s.max() >= hmm.m):
            raise ValueError("observation id out of range")
    if s.size == 0:
        raise ValueError("observation sequence is empty")
    return np.ascontiguousarray(s, dtype=np.int64)


# ---------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _forward(nu, Q, G, s):
    n1 = s.shape[0]
    r = nu.shape[0]
    alpha = np.empty((n1, r))
    scale = np.empty(n1)
    c = 0.0
    for j in range(r):
        alpha[0, j] = nu[j] * G[j, s[0]]
        c += alpha[0, j]
    scale[0] = c
    if c == 0.0:
        return alpha, scale, 0
    for j in range(r):
        alpha[0, j] /= c
    for k in range(1, n1):
        c = 0.0
        for j in range(r):
            acc = 0.0
            for i in range(r):
                acc += alpha[k - 1, i] * Q[i, j]
            acc *= G[j, s[k]]
            alpha[k, j] = acc
            c += acc
        scale[k] = c
        if c == 0.0:
            return alpha, scale, k
        for j in range(r):
            alpha[k, j] /= c
    return alpha, scale, -1


@numba.njit(cache=True)
def _backward(Q, G, s, scale):
    n1 = s.shape[0]
    r = Q.shape[0]
    beta = np.empty((n1, r))
    tmp = np.empty(r)
    for j in range(r):
        beta[n1 - 1, j] = 1.0
    for k in range(n1 - 2, -1, -1):
        for j in range(r):
            tmp[j] = G[j, s[k + 1]] * beta[k + 1, j]
        for i in range(r):
            acc = 0.0
            for j in range(r):
                acc += Q[i, j] * tmp[j]
            beta[k, i] = acc / scale[k + 1]
    return beta


@numba.njit(cache=True)
def _backward_counts(alpha, Q, G, s, scale):
    """Backward pass fused with the EM sufficient statistics.

    Only a rolling beta vector is kept, so an EM step stores nothing of
    size n beyond alpha. Returns phi at time 0, the summed pair
    posteriors (r, r) and the summed emission posteriors (r, m).
    """
    n1, r = alpha.shape
    m = G.shape[1]
    pair = np.zeros((r, r))
    emit = np.zeros((r, m))
    beta = np.ones(r)
    nb = np.empty(r)
    tmp = np.empty(r)
    phi = np.empty(r)
    for k in range(n1 - 1, -1, -1):
        if k < n1 - 1:
            c = scale[k + 1]
            sk1 = s[k + 1]
            for j in range(r):
                tmp[j] = G[j, sk1] * beta[j] / c
            for i in range(r):
                acc = 0.0
                a = alpha[k, i]
                for j in range(r):
                    q = Q[i, j] * tmp[j]
                    pair[i, j] += a * q
                    acc += q
                nb[i] = acc
            for i in range(r):
                beta[i] = nb[i]
        tot = 0.0
        for j in range(r):
            phi[j] = alpha[k, j] * beta[j]
            tot += phi[j]
        for j in range(r):
            phi[j] /= tot
            emit[j, s[k]] += phi[j]
    return phi, pair, emit


@numba.njit(cache=True)
def _lowest_near_max(vals, rtol):
    # values within round-off of the maximum count as ties; the lowest
    # index wins, so mathematically tied paths resolve the same way no
    # matter in which order their log terms were summed
    best = -np.inf
    for i in range(vals.shape[0]):
        if vals[i] > best:
            best = vals[i]
    if best == -np.inf:
        return 0, best
    cut = best - rtol * abs(best)
    for i in range(vals.shape[0]):
        if vals[i] >= cut:
            return i, vals[i]
    return 0, best


@numba.njit(cache=True)
def _viterbi(lognu, logQ, logG, s, rtol):
    n1 = s.shape[0]
    r = lognu.shape[0]
    back = np.zeros((n1, r), dtype=np.int64)
    cur = np.empty(r)
    nxt = np.empty(r)
    cand = np.empty(r)
    for i in range(r):
        cur[i] = lognu[i] + logG[i, s[0]]
    for k in range(1, n1):
        for j in range(r):
            for i in range(r):
                cand[i] = cur[i] + logQ[i, j]
            arg, best = _lowest_near_max(cand, rtol)
            nxt[j] = best + logG[j, s[k]]
            back[k, j] = arg
        for j in range(r):
            cur[j] = nxt[j]
    last, best = _lowest_near_max(cur, rtol)
    path = np.empty(n1, dtype=np.int64)
    path[n1 - 1] = last
    for k in range(n1 - 1, 0, -1):
        path[k - 1] = back[k, path[k]]
    return path, best


@numba.njit(cache=True)
def _sample_chain(cum_nu, cumQ, u):
    n = u.shape[0]
    r = cum_nu.shape[0]
    out = np.empty(n, dtype=np.int64)
    c = 0
    while c < r - 1 and u[0] >= cum_nu[c]:
        c += 1
    out[0] = c
    for t in range(1, n):
        row = cumQ[c]
        j = 0
        while j < r - 1 and u[t] >= row[j]:
            j += 1
        c = j
        out[t] = c
    return out


# ---------------------------------------------------------------- public API

def _run_forward(hmm: Hmm, s: np.ndarray):
    alpha, scale, bad = _forward(hmm.nu, hmm.Q, hmm.G, s)
    if bad >= 0:
        raise ImpossibleObservation(f"observation at index {bad} has zero probability")
    return alpha, scale


def log_likelihood(hmm: Hmm, obs) -> float:
    """log P(S_0..S_n = obs) by the scaled forward recursion."""
    s = _obs_array(hmm, obs)
    _, scale = _run_forward(hmm, s)
    return float(np.log(scale).sum())


def forward_backward(hmm: Hmm, obs) -> SmoothingCache:
    """Posterior state marginals and consecutive-pair posteriors."""
    s = _obs_array(hmm, obs)
    alpha, scale = _run_forward(hmm, s)
    beta = _backward(hmm.Q, hmm.G, s, scale)
    phi = alpha * beta
    phi /= phi.sum(axis=1, keepdims=True)
    pair = (alpha[:-1, :, None] * hmm.Q[None, :, :]
            * (hmm.G[:, s[1:]].T * beta[1:])[:, None, :]) / scale[1:, None, None]
    return SmoothingCache(float(np.log(scale).sum()), phi, pair, scale)


def reestimate(hmm: Hmm, obs) -> tuple[Hmm, float, list[int]]:
    """One EM step.

    Returns the re-estimated model, the log-likelihood of ``obs`` under the
    *input* model, and the list of states that received no posterior mass
    (their rows are reset to uniform).
    """
    s = _obs_array(hmm, obs)
    alpha, scale = _run_forward(hmm, s)
    phi0, pair, emit = _backward_counts(alpha, hmm.Q, hmm.G, s, scale)
    ll = float(np.log(scale).sum())
    r, m = hmm.r, hmm.m

    nu = phi0 / phi0.sum()
    occupancy = emit.sum(axis=1)
    degenerate = [j for j in range(r) if occupancy[j] < 1e-12]
    G = np.empty((r, m))
    Q = np.empty((r, r))
    for j in range(r):
        if j in degenerate:
            G[j] = 1.0 / m
            Q[j] = 1.0 / r
            continue
        G[j] = emit[j] / emit[j].sum()
        row = pair[j].sum()
        # the last bin has no successor; if all of j's mass sits there, keep Q
        Q[j] = pair[j] / row if row > 0 else hmm.Q[j]
    return Hmm(nu, Q, G), ll, degenerate


def default_init(r: int, m: int, rng: np.random.Generator) -> Hmm:
    """Sticky starting point: uniform nu, 0.9 on the diagonal of Q,
    Dirichlet(1, ..., 1) rows for G."""
    nu = np.full(r, 1.0 / r)
    if r == 1:
        Q = np.ones((1, 1))
    else:
        Q = np.full((r, r), 0.1 / (r - 1))
        np.fill_diagonal(Q, 0.9)
    G = rng.dirichlet(np.ones(m), size=r)
    return Hmm.normalized(nu, Q, G)


@dataclass(frozen=True, eq=False)
class FitResult:
    hmm: Hmm
    iterations: int
    trajectory: np.ndarray  # log-likelihood of each iterate, the final one last
    converged: bool

    @property
    def log_likelihood(self) -> float:
        return float(self.trajectory[-1])


def _em(obs, init: Hmm, tol: float, max_iter: int) -> FitResult:
    # traj[k] is the log-likelihood of the k-th iterate (traj[0] = init).
    # The E-step on iterate k yields its likelihood together with iterate
    # k + 1. Once iterate k gains less than tol over iterate k - 1, the
    # fit has converged at k - 1, which is returned.
    prev, cur = None, init
    traj = []
    updates = 0
    while True:
        nxt, ll, degenerate = reestimate(cur, obs)
        traj.append(ll)
        if prev is not None and abs(traj[-1] - traj[-2]) < tol:
            return FitResult(prev, updates - 1, np.array(traj[:-1]), True)
        if updates == max_iter:
            return FitResult(cur, updates, np.array(traj), False)
        for j in degenerate:
            warnings.warn(f"state {j} received no posterior mass; re-seeded uniformly",
                          DegenerateStateWarning, stacklevel=3)
        prev, cur = cur, nxt
        updates += 1


def baum_welch(obs, r: int, init: Hmm | int | None = None, tol: float = 1e-6,
               max_iter: int = 500, restarts: int = 5, m: int | None = None) -> FitResult:
    """Fit an r-state HMM by normalised Baum-Welch.

    ``init`` is either a starting model (single run) or a seed for
    ``restarts`` runs from :func:`default_init`; the run with the highest
    final log-likelihood wins. Iteration stops when successive
    log-likelihoods differ by less than ``tol``.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(obs, ObservationSequence):
        m = obs.m
        s = obs.obs
    else:
        s = np.asarray(obs, dtype=np.int64)
        m = m if m is not None else int(s.max()) + 1
    if len(s) < 2:
        raise ValueError("need at least two observations")
    s = np.ascontiguousarray(s, dtype=np.int64)

    if isinstance(init, Hmm):
        if init.r != r or init.m != m:
            raise ValueError("initial model has the wrong shape")
        return _em(s, init, tol, max_iter)

    rng = np.random.default_rng(init)
    best = None
    for k in range(max(1, restarts)):
        res = _em(s, default_init(r, m, rng), tol, max_iter)
        log.debug("restart %d: ll=%.6f after %d iterations", k, res.log_likelihood,
                  res.iterations)
        if best is None or res.log_likelihood > best.log_likelihood:
            best = res
    return best


def viterbi(hmm: Hmm, obs) -> ViterbiPath:
    """Most probable hidden path given the observations."""
    s = _obs_array(hmm, obs)
    with np.errstate(divide="ignore"):
        lognu, logQ, logG = np.log(hmm.nu), np.log(hmm.Q), np.log(hmm.G)
    path, best = _viterbi(lognu, logQ, logG, s, VITERBI_TIE_RTOL)
    if best == -np.inf:
        raise ImpossibleObservation("every hidden path has zero probability")
    return ViterbiPath(path, float(best))


def simulate(hmm: Hmm, length: int, seed=None) -> tuple[np.ndarray, ObservationSequence]:
    """Draw hidden states and observations of the given length."""
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.default_rng(seed)
    cum_nu = np.cumsum(hmm.nu)
    cumQ = np.cumsum(hmm.Q, axis=1)
    states = _sample_chain(cum_nu, cumQ, rng.random(length))
    obs = np.empty(length, dtype=np.int64)
    u = rng.random(length)
    cumG = np.cumsum(hmm.G, axis=1)
    for j in range(hmm.r):
        idx = np.flatnonzero(states == j)
        if idx.size:
            k = np.searchsorted(cumG[j], u[idx], side="right")
            obs[idx] = np.minimum(k, hmm.m - 1)
    return states, ObservationSequence(obs, hmm.m)


def near_duplicate_states(hmm: Hmm, g_tol: float = 0.05, q_tol: float = 0.05,
                          swap_prob: float = 0.5) -> list[tuple[int, int]]:
    """Pairs of states that look like one mode split in two.

    A pair qualifies when their emission rows are within ``g_tol`` in L1
    and their transition rows either nearly coincide (L1 < ``q_tol``) or
    they hop to each other with probability above ``swap_prob``.
    """
    pairs = []
    for i in range(hmm.r):
        for j in range(i + 1, hmm.r):
            if np.abs(hmm.G[i] - hmm.G[j]).sum() >= g_tol:
                continue
            same_q = np.abs(hmm.Q[i] - hmm.Q[j]).sum() < q_tol
            swap = hmm.Q[i, j] > swap_prob and hmm.Q[j, i] > swap_prob
            if same_q or swap:
                pairs.append((i, j))
    return pairs


def sweep_states(obs, rs, seed=0, **kw) -> list[dict]:
    """Fit one model per state count and report likelihood and duplicates."""
    out = []
    for r in rs:
        res = baum_welch(obs, r, init=seed, **kw)
        out.append({"r": r, "log_likelihood": res.log_likelihood,
                    "iterations": res.iterations,
                    "near_duplicates": near_duplicate_states(res.hmm),
                    "hmm": res.hmm})
    return out
