"""Observation alphabet: k-means clustering of binned (R, W) points.

Two modes are supported. ``joint`` clusters the 2-D points directly.
``product`` clusters reads and writes separately on one axis each and takes
the grid of (read level, write level) pairs as the alphabet, so that with
2 read levels and 4 write levels there are 8 observation values, ordered
low-read first and by increasing writes within a read level.

Optionally the point (0, 0) gets a reserved singleton cluster with id 0;
traces at fine bin widths are dominated by empty bins and they should not
be smeared into the nearest busy cluster.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TooFewDistinctPoints
from .trace import BinnedTrace

JOINT = "joint"
PRODUCT = "product"


@dataclass(frozen=True)
class ClusterStats:
    id: int
    centroid: tuple[float, float]
    std: tuple[float, float]
    cov_rw: float
    count: int
    singleton_zero: bool = False

    @property
    def cov_matrix(self) -> np.ndarray:
        sr, sw = self.std
        return np.array([[sr * sr, self.cov_rw], [self.cov_rw, sw * sw]])


@dataclass(frozen=True)
class ClusterModel:
    """Fitted alphabet.

    ``levels`` holds the 1-D read and write centres for product mode; there
    assignment goes to the nearest grid point, which is the same as picking
    the nearest level on each axis.
    """
    clusters: tuple[ClusterStats, ...]
    mode: str = JOINT
    k_r: int | None = None
    k_w: int | None = None
    levels: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    _centres: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [c.id for c in self.clusters]
        if ids != list(range(len(ids))):
            raise ValueError("cluster ids must be 0..m-1 in order")
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if self.mode == PRODUCT:
            if self.levels is None:
                raise ValueError("product mode needs per-axis levels")
            lr, lw = (tuple(map(float, x)) for x in self.levels)
            object.__setattr__(self, "levels", (lr, lw))
            grid = np.array([(a, b) for a in lr for b in lw], dtype=float)
        else:
            grid = np.array([c.centroid for c in self.clusters
                             if not c.singleton_zero], dtype=float).reshape(-1, 2)
        object.__setattr__(self, "_centres", grid)

    @property
    def m(self) -> int:
        return len(self.clusters)

    @property
    def singleton_id(self) -> int | None:
        for c in self.clusters:
            if c.singleton_zero:
                return c.id
        return None

    @property
    def centroids(self) -> np.ndarray:
        return np.array([c.centroid for c in self.clusters], dtype=float)

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "clusters": [
                {"id": c.id, "centroid": list(c.centroid), "std": list(c.std),
                 "cov_rw": c.cov_rw, "count": c.count,
                 "singleton_zero": c.singleton_zero}
                for c in self.clusters
            ],
        }
        if self.mode == PRODUCT:
            d["k_r"], d["k_w"] = self.k_r, self.k_w
            d["levels"] = {"reads": list(self.levels[0]),
                           "writes": list(self.levels[1])}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        clusters = tuple(
            ClusterStats(int(c["id"]), tuple(map(float, c["centroid"])),
                         tuple(map(float, c["std"])), float(c["cov_rw"]),
                         int(c["count"]), bool(c.get("singleton_zero", False)))
            for c in d["clusters"])
        levels = None
        if d["mode"] == PRODUCT:
            levels = (d["levels"]["reads"], d["levels"]["writes"])
        return cls(clusters, d["mode"], d.get("k_r"), d.get("k_w"), levels)

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        return cls.from_dict(json.loads(text))


def _sq_dists(x: np.ndarray, centres: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(x, k, rng):
    n = len(x)
    centres = np.empty((k, x.shape[1]))
    centres[0] = x[rng.integers(n)]
    d2 = ((x - centres[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            i = rng.choice(n, p=d2 / total)
        else:
            i = rng.integers(n)
        centres[j] = x[i]
        d2 = np.minimum(d2, ((x - centres[j]) ** 2).sum(axis=1))
    return centres


def kmeans(x, k, rng, max_iter=300):
    """Lloyd's algorithm with k-means++ seeding.

    Stops when no assignment changes or after ``max_iter`` iterations.
    An empty cluster is re-seeded with the point farthest from its current
    centre. Returns ``(centres, labels, sse_history)``; ``sse_history`` has
    the within-cluster SSE after each centre update.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    centres = _kmeanspp(x, k, rng)
    labels = np.argmin(_sq_dists(x, centres), axis=1)
    history = []
    for _ in range(max_iter):
        for j in range(k):
            members = labels == j
            if members.any():
                centres[j] = x[members].mean(axis=0)
            else:
                own = ((x - centres[labels]) ** 2).sum(axis=1)
                far = int(np.argmax(own))
                centres[j] = x[far]
                labels[far] = j
        history.append(float(((x - centres[labels]) ** 2).sum()))
        new = np.argmin(_sq_dists(x, centres), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
    return centres, labels, history


def _member_stats(pts: np.ndarray):
    if len(pts) == 0:
        return None
    mean = pts.mean(axis=0)
    if len(pts) < 2:
        return mean, np.zeros(2), 0.0
    cov = np.cov(pts, rowvar=False, ddof=1)
    std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return mean, std, float(cov[0, 1])


def _distinct(x: np.ndarray) -> int:
    return len(np.unique(x, axis=0))


def fit_clusters(binned: BinnedTrace, mode: str = JOINT, k: int | None = None,
                 k_r: int | None = None, k_w: int | None = None,
                 reserve_zero_singleton: bool = False, seed=0,
                 max_iter: int = 300) -> ClusterModel:
    """Build the observation alphabet for a binned trace."""
    pts = binned.bins.astype(float)
    if len(pts) == 0:
        raise ValueError("binned trace is empty")
    rng = np.random.default_rng(seed)
    zero = (pts == 0).all(axis=1) if reserve_zero_singleton else np.zeros(len(pts), bool)
    work = pts[~zero]

    stats: list[ClusterStats] = []
    if reserve_zero_singleton:
        stats.append(ClusterStats(0, (0.0, 0.0), (0.0, 0.0), 0.0,
                                  int(zero.sum()), True))
    offset = len(stats)

    levels = None
    if mode == JOINT:
        if k is None or k < 1:
            raise ValueError("joint mode needs k >= 1")
        if _distinct(work) < k:
            raise TooFewDistinctPoints(
                f"{_distinct(work)} distinct points for {k} clusters")
        centres, labels, _ = kmeans(work, k, rng, max_iter)
        # canonical order: by reads, then writes
        order = np.lexsort((centres[:, 1], centres[:, 0]))
        relabel = np.empty(k, dtype=int)
        relabel[order] = np.arange(k)
        labels = relabel[labels]
        centres = centres[order]
        for j in range(k):
            mean, std, cov = _member_stats(work[labels == j])
            stats.append(ClusterStats(offset + j, tuple(mean), tuple(std), cov,
                                      int((labels == j).sum())))
    elif mode == PRODUCT:
        if not (k_r and k_w and k_r >= 1 and k_w >= 1):
            raise ValueError("product mode needs k_r >= 1 and k_w >= 1")
        axis_levels = []
        axis_labels = []
        for col, kk in ((0, k_r), (1, k_w)):
            if len(np.unique(work[:, col])) < kk:
                raise TooFewDistinctPoints(
                    f"axis {col}: fewer than {kk} distinct values")
            c, lab, _ = kmeans(work[:, col], kk, rng, max_iter)
            c = c[:, 0]
            order = np.argsort(c, kind="stable")
            relabel = np.empty(kk, dtype=int)
            relabel[order] = np.arange(kk)
            axis_levels.append(c[order])
            axis_labels.append(relabel[lab])
        levels = (tuple(axis_levels[0]), tuple(axis_levels[1]))
        cell = axis_labels[0] * k_w + axis_labels[1]
        for a in range(k_r):
            for b in range(k_w):
                j = a * k_w + b
                ms = _member_stats(work[cell == j])
                if ms is None:
                    # empty grid cell keeps its grid point as a nominal centre
                    ms = (np.array([levels[0][a], levels[1][b]]), np.zeros(2), 0.0)
                mean, std, cov = ms
                stats.append(ClusterStats(offset + j, tuple(mean), tuple(std), cov,
                                          int((cell == j).sum())))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    stats = [ClusterStats(s.id, tuple(map(float, s.centroid)),
                          tuple(map(float, s.std)), float(s.cov_rw), s.count,
                          s.singleton_zero) for s in stats]
    return ClusterModel(tuple(stats), mode, k_r, k_w, levels)


def _assign_many(model: ClusterModel, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    sid = model.singleton_id
    offset = 1 if sid is not None else 0
    if model.mode == PRODUCT:
        lr = np.asarray(model.levels[0])
        lw = np.asarray(model.levels[1])
        # argmin returns the first minimum, so ties go to the lower level
        a = np.argmin((pts[:, :1] - lr[None, :]) ** 2, axis=1)
        b = np.argmin((pts[:, 1:] - lw[None, :]) ** 2, axis=1)
        ids = a * len(lw) + b + offset
    else:
        ids = np.argmin(_sq_dists(pts, model._centres), axis=1) + offset
    if sid is not None:
        ids[(pts == 0).all(axis=1)] = sid
    return ids.astype(np.int64)


def assign(model: ClusterModel, point: Sequence[float]) -> int:
    """Observation id of the nearest centre; ties go to the lowest id."""
    return int(_assign_many(model, np.asarray(point, dtype=float))[0])


@dataclass(frozen=True, eq=False)
class ObservationSequence:
    obs: np.ndarray
    m: int

    def __post_init__(self):
        arr = np.asarray(self.obs, dtype=np.int64).ravel()
        if arr.size and (arr.min() < 0 or arr.max() >= self.m):
            raise ValueError("observation ids must lie in [0, m)")
        arr.setflags(write=False)
        object.__setattr__(self, "obs", arr)

    def __len__(self):
        return len(self.obs)


def observation_sequence(model: ClusterModel, binned: BinnedTrace) -> ObservationSequence:
    return ObservationSequence(_assign_many(model, binned.bins), model.m)
