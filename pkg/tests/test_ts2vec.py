import numpy as np
import pytest
from sklearn.base import clone

from kpidnn import mlp, ts2vec
from kpidnn.core import TimeSeries, WindowSample
from kpidnn.exceptions import DataError, LengthMismatch, ParamError, TooFewPoints
from kpidnn.windowing import WindowSpec, sliding_extract


def model(k=2, seed=0):
    return mlp.init_model(mlp.MlpConfig(input_dim=5 * k + 3, hidden_dims=(6, 4), seed=seed))


def test_zero_weights_give_zero_embedding():
    m = model()
    for W in m.weights:
        W[:] = 0
    e = ts2vec.embed(m, np.linspace(0, 1, 13))
    assert not e.layer1.any() and not e.layer2.any()
    assert e.combined.shape == (10,)


def test_embedding_is_inference_activation():
    m = model()
    x = np.linspace(1, 0, 13)
    e = ts2vec.embed(m, WindowSample(2, x, 0, 1, False, "a", 9))
    z1 = m.weights[0] @ x + m.biases[0]
    h1 = np.where(z1 > 0, z1, 0.2 * z1)
    assert np.allclose(e.layer1, h1) and e.key == ("a", 9)
    batch = ts2vec.embed_many(m, [WindowSample(2, x, 0, 1, False, "a", 9)] * 2)
    assert np.allclose(batch[1].combined, e.combined, rtol=1e-12, atol=1e-15)
    assert ts2vec.embed_many(m, []) == []


@pytest.mark.parametrize("u, v, expected", [
    ([1, 0], [0, 3], 0.0), ([1, 2], [-2, -4], -1.0), ([1, 2], [3, 6], 1.0), ([0, 0], [1, 1], 0.0),
])
def test_cosine_cases(u, v, expected):
    assert ts2vec.cosine(u, v) == pytest.approx(expected)


def test_cosine_length_mismatch():
    with pytest.raises(LengthMismatch):
        ts2vec.cosine([1, 2], [1, 2, 3])


def _emb(vec, sid="", ts=-1):
    vec = np.asarray(vec, dtype=float)
    return ts2vec.Embedding(vec[:1], vec[1:], sid, ts)


def test_top_k_ordering_ties_and_self_exclusion():
    corpus = [_emb([1, 0], "a", 1), _emb([0, 1], "b", 1), _emb([1, 0], "c", 1), _emb([1, 1], "d", 1)]
    query = _emb([1, 0], "a", 1)
    hits = ts2vec.top_k_similar(query, corpus, k=10)
    assert [i for i, _ in hits] == [2, 3, 1]
    anonymous = ts2vec.top_k_similar(_emb([1, 0]), corpus, k=2)
    assert [i for i, _ in anonymous] == [0, 2]
    with pytest.raises(ParamError):
        ts2vec.top_k_similar(query, corpus, k=0)
    with pytest.raises(ParamError):
        ts2vec.top_k_similar(query, [], k=1)


def blobs(rng, n=30):
    centers = np.array([[0, 0], [10, 0], [0, 10]])
    X = np.vstack([c + rng.normal(size=(n, 2)) for c in centers])
    return X, np.repeat([0, 1, 2], n)


def test_kmeans_recovers_blobs(rng):
    X, truth = blobs(rng)
    result = ts2vec.kmeans(X, 3, seed=1)
    assert ts2vec.purity(result.assignments, truth) == 1.0
    assert all(b <= a + 1e-9 for a, b in zip(result.inertia_trace, result.inertia_trace[1:]))
    again = ts2vec.kmeans(X, 3, seed=1)
    assert np.array_equal(again.assignments, result.assignments)


def test_kmeans_edge_cases(rng):
    X = rng.normal(size=(6, 3))
    assert ts2vec.kmeans(X, 6).inertia == pytest.approx(0.0)
    one = ts2vec.kmeans(X, 1)
    assert np.allclose(one.centroids[0], X.mean(axis=0))
    assert one.inertia == pytest.approx(((X - X.mean(axis=0)) ** 2).sum())
    with pytest.raises(TooFewPoints):
        ts2vec.kmeans(X, 7)
    with pytest.raises(ParamError):
        ts2vec.kmeans(X[0], 1)


def test_kmeans_on_identical_points():
    result = ts2vec.kmeans(np.ones((5, 2)), 3)
    assert result.inertia == 0.0 and result.assignments.shape == (5,)


def test_kmeans_accepts_embeddings():
    embs = [_emb([0, 0]), _emb([0, 0.1]), _emb([5, 5]), _emb([5, 5.1])]
    result = ts2vec.kmeans(embs, 2)
    assert result.assignments[0] == result.assignments[1] != result.assignments[2]


def test_purity():
    assert ts2vec.purity([0, 0, 1, 1], ["a", "b", "b", "b"]) == 0.75


def test_estimator(rng):
    X, truth = blobs(rng)
    est = clone(ts2vec.EmbeddingKMeans(n_clusters=3, random_state=2))
    labels = est.fit_predict(X)
    assert np.array_equal(est.predict(X), labels)
    assert ts2vec.purity(labels, truth) == 1.0


def test_embed_series_is_mean_over_one_day():
    t = np.arange(15 * 1440)
    series = TimeSeries("x", 0, np.sin(t / 100.0))
    m = model()
    e = ts2vec.embed_series(m, series, stride=60)
    spec = WindowSpec(2)
    lo = spec.first_valid(series)
    windows = sliding_extract(series, lo, lo + 1439, 60, spec).samples
    assert len(windows) == 24 and e.pending_timestamp == lo and e.source_id == "x"
    H1, H2 = mlp.hidden_activations(m, np.stack([w.joint for w in windows]))
    assert np.allclose(e.layer1, H1.mean(axis=0)) and np.allclose(e.layer2, H2.mean(axis=0))
    with pytest.raises(DataError):
        ts2vec.embed_series(m, TimeSeries("short", 0, np.ones(100)))


def test_cosine_scale_invariance(rng):
    u, v = rng.normal(size=9), rng.normal(size=9)
    assert ts2vec.cosine(4.5 * u, v) == pytest.approx(ts2vec.cosine(u, v), rel=1e-12)
