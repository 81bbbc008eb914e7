"""Hidden-layer embeddings of windows, cosine similarity and k-means."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from . import seeds
from .core import MINUTES_PER_DAY, TimeSeries, WindowSample
from .exceptions import DataError, LengthMismatch, ParamError, TooFewPoints
from .mlp import MlpModel, hidden_activations
from .windowing import WindowSpec, sliding_extract


@dataclass(frozen=True, eq=False)
class Embedding:
    layer1: np.ndarray
    layer2: np.ndarray
    source_id: str = ""
    pending_timestamp: int = -1

    @property
    def combined(self) -> np.ndarray:
        return np.concatenate([self.layer1, self.layer2])

    @property
    def key(self) -> tuple:
        return (self.source_id, self.pending_timestamp)


def embed(model: MlpModel, sample) -> Embedding:
    """Inference-mode activations of both hidden layers for one window."""
    if isinstance(sample, WindowSample):
        h1, h2 = hidden_activations(model, sample.joint)
        return Embedding(h1, h2, sample.source_id, sample.pending_timestamp)
    h1, h2 = hidden_activations(model, np.asarray(sample, dtype=float).ravel())
    return Embedding(h1, h2)


def embed_many(model: MlpModel, samples) -> list[Embedding]:
    samples = list(samples)
    if not samples:
        return []
    X = np.stack([s.joint for s in samples])
    H1, H2 = hidden_activations(model, X)
    return [Embedding(h1, h2, s.source_id, s.pending_timestamp)
            for h1, h2, s in zip(H1, H2, samples)]


def embed_series(model: MlpModel, series: TimeSeries, stride: int = 30,
                 span: int = MINUTES_PER_DAY, spec: WindowSpec | None = None) -> Embedding:
    """Series-level embedding: mean window embedding over one ``span`` of pending points.

    Windows start at the first valid timestamp and step by ``stride``, so a
    whole daily cycle contributes regardless of the series' phase. The
    result carries the first pending timestamp used.
    """
    spec = spec or WindowSpec((model.config.input_dim - 3) // 5)
    lo = spec.first_valid(series)
    hi = min(lo + span - 1, spec.last_valid(series))
    if hi < lo:
        raise DataError(f"{series.id}: too short for a single window")
    samples = sliding_extract(series, lo, hi, stride, spec).samples
    if not samples:
        raise DataError(f"{series.id}: no complete window in [{lo}, {hi}]")
    H1, H2 = hidden_activations(model, np.stack([w.joint for w in samples]))
    return Embedding(H1.mean(axis=0), H2.mean(axis=0), series.id, samples[0].pending_timestamp)


def cosine(u, v) -> float:
    """Cosine similarity; 0 when either vector is zero."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.size != v.size:
        raise LengthMismatch(f"lengths differ: {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def top_k_similar(query: Embedding, corpus, k: int = 3) -> list[tuple[int, float]]:
    """``(corpus index, similarity)`` of the ``k`` most similar entries.

    Sorted by descending similarity, ties by corpus order. An entry with the
    same (source id, timestamp) as the query is skipped when the query has
    a real timestamp.
    """
    if k < 1:
        raise ParamError("k must be >= 1")
    corpus = list(corpus)
    if not corpus:
        raise ParamError("corpus is empty")
    q = query.combined
    scored = []
    for i, item in enumerate(corpus):
        if query.pending_timestamp >= 0 and item.key == query.key:
            continue
        scored.append((i, cosine(q, item.combined)))
    scored.sort(key=lambda pair: -pair[1])  # stable: ties keep corpus order
    return scored[:k]


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_trace: list = field(default_factory=list)


def _sq_dist(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = [points[rng.integers(n)]]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total == 0.0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centroids.append(points[idx])
        closest = np.minimum(closest, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centroids, dtype=float)


def kmeans(points, k: int, seed: int = 0, max_iters: int = 300, tol: float = 1e-8) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds.

    Stops once no centroid moves more than ``tol`` or after ``max_iters``
    rounds. An empty cluster is re-seeded at the point farthest from its
    current centroid.
    """
    if isinstance(points, (list, tuple)) and points and isinstance(points[0], Embedding):
        points = np.stack([e.combined for e in points])
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ParamError("points must be a 2-D array")
    if k < 1:
        raise ParamError("k must be >= 1")
    if X.shape[0] < k:
        raise TooFewPoints(f"{X.shape[0]} points for k={k}")
    rng = seeds.generator(seed, "kmeans")
    centroids = kmeans_plusplus(X, k, rng)
    trace = []
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        d = _sq_dist(X, centroids)
        assign = d.argmin(axis=1)
        trace.append(float(d[np.arange(X.shape[0]), assign].sum()))
        new = centroids.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new[j] = X[members].mean(axis=0)
            else:
                far = int(d[np.arange(X.shape[0]), assign].argmax())
                new[j] = X[far]
                assign[far] = j
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift <= tol:
            break
    d = _sq_dist(X, centroids)
    assign = d.argmin(axis=1)
    inertia = float(d[np.arange(X.shape[0]), assign].sum())
    trace.append(inertia)
    return KMeansResult(assign, centroids, inertia, n_iter, trace)


def purity(assignments, truth) -> float:
    """Share of points whose cluster's majority label equals their own."""
    assignments = np.asarray(assignments)
    truth = np.asarray(truth)
    hits = 0
    for c in np.unique(assignments):
        _, counts = np.unique(truth[assignments == c], return_counts=True)
        hits += counts.max()
    return hits / truth.size


class EmbeddingKMeans(ClusterMixin, BaseEstimator):
    def __init__(self, n_clusters=2, max_iters=300, tol=1e-8, random_state=0):
        self.n_clusters = n_clusters
        self.max_iters = max_iters
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        result = kmeans(X, self.n_clusters, int(self.random_state or 0), self.max_iters, self.tol)
        self.labels_ = result.assignments
        self.cluster_centers_ = result.centroids
        self.inertia_ = result.inertia
        self.n_iter_ = result.n_iter
        return self

    def predict(self, X):
        return _sq_dist(np.asarray(X, dtype=float), self.cluster_centers_).argmin(axis=1)
