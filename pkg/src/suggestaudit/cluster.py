"""K-means with k-means++ seeding, silhouette scoring and k selection."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import MissingInputError


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # explicit differences, not the |x|^2 - 2xc + |c|^2 expansion: exact zeros matter
    return cdist(X, C, "sqeuclidean")


def _assign(X, C):
    d = _sq_dists(X, C)
    # argmin returns the first minimum: lowest index wins ties
    labels = d.argmin(axis=1)
    return labels, d[np.arange(len(X)), labels]


def _sse(X, C, labels) -> float:
    diff = X - C[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    closest = ((X - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        closest = np.minimum(closest, ((X - X[idx]) ** 2).sum(1))
    return np.array(centers, dtype=np.float64)


def _repair_empty(X, C, labels, dist, k):
    """Move the farthest points of non-singleton clusters into empty ones."""
    counts = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if not len(empty):
        return labels, False
    labels = labels.copy()
    order = np.argsort(-dist, kind="stable")
    taken = 0
    for j in empty:
        while True:
            i = order[taken]
            taken += 1
            if counts[labels[i]] > 1:
                break
        counts[labels[i]] -= 1
        counts[j] += 1
        labels[i] = j
        C[j] = X[i]
    return labels, True


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 300, tol: float = 1e-6):
    """Lloyd iterations from the given centers.

    Returns ``(centers, labels, sse, n_iter, history)`` where ``history``
    holds the SSE after every iteration.
    """
    C = centers.copy()
    k = len(C)
    history = []
    labels = None
    for it in range(1, max_iter + 1):
        new_labels, dist = _assign(X, C)
        new_labels, _ = _repair_empty(X, C, new_labels, dist, k)
        newC = np.zeros_like(C)
        np.add.at(newC, new_labels, X)
        newC /= np.bincount(new_labels, minlength=k)[:, None]
        shift = float(np.sqrt(((newC - C) ** 2).sum(1)).max())
        stable = labels is not None and np.array_equal(labels, new_labels)
        C, labels = newC, new_labels
        history.append(_sse(X, C, labels))
        if stable or shift < tol:
            break
    return C, labels, history[-1], it, history


class KMeans(ClusterMixin, BaseEstimator):
    """Best-of-``n_restarts`` Lloyd k-means on Euclidean distance.

    ``seed`` is mandatory: restarts draw from sub-seeds spawned from it,
    so identical data, seed and parameters give identical models.
    """

    def __init__(self, n_clusters: int = 3, seed: int | None = None, n_restarts: int = 10,
                 max_iter: int = 300, tol: float = 1e-6):
        self.n_clusters = n_clusters
        self.seed = seed
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        if self.seed is None:
            raise ValueError("KMeans needs an explicit seed")
        X = check_array(X, dtype=np.float64)
        k = int(self.n_clusters)
        if k < 1:
            raise ValueError("n_clusters must be >= 1")
        if k > len(X):
            raise ValueError(f"n_clusters={k} exceeds the number of samples ({len(X)})")
        best = None
        self.restart_history_ = []
        for child in np.random.SeedSequence(self.seed).spawn(self.n_restarts):
            rng = np.random.default_rng(child)
            C, labels, sse, n_iter, hist = lloyd(X, _kmeans_pp(X, k, rng), self.max_iter, self.tol)
            self.restart_history_.append(hist)
            if best is None or sse < best[2]:
                best = (C, labels, sse, n_iter, hist)
        self.cluster_centers_, self.labels_, self.sse_, self.n_iter_, self.sse_history_ = best
        self.inertia_ = self.sse_
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        return _assign(X, self.cluster_centers_)[0]


def kmeans(vectors, k: int, seed: int, n_restarts: int = 10, max_iter: int = 300, tol: float = 1e-6) -> KMeans:
    return KMeans(k, seed, n_restarts, max_iter, tol).fit(vectors)


def silhouette_samples(X, labels, chunk: int = 1024) -> np.ndarray:
    X = check_array(X, dtype=np.float64)
    labels = np.asarray(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    k = len(uniq)
    if k < 2:
        raise ValueError("silhouette is undefined for fewer than two clusters")
    counts = np.bincount(inv, minlength=k).astype(np.float64)
    n = len(X)
    sums = np.zeros((n, k))
    onehot = np.zeros((n, k))
    onehot[np.arange(n), inv] = 1.0
    for start in range(0, n, chunk):
        sums[start:start + chunk] = cdist(X[start:start + chunk], X) @ onehot
    own = counts[inv]
    a = np.where(own > 1, sums[np.arange(n), inv] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / counts[None, :]
    mean_other[np.arange(n), inv] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[own == 1] = 0.0
    return s


def silhouette(vectors, assignments) -> float:
    """Mean silhouette over all points; singleton-cluster points score 0."""
    return float(silhouette_samples(vectors, assignments).mean())


@dataclass
class KSelectionDiagnostics:
    per_k: list[tuple[int, float, float | None]] = field(default_factory=list)
    chosen_k: int = 1

    def to_dict(self) -> dict:
        return {
            "per_k": [{"k": k, "sse": sse, "mean_silhouette": s} for k, sse, s in self.per_k],
            "chosen_k": self.chosen_k,
        }


def select_k(vectors, k_range: Sequence[int] = range(1, 11), seed: int = 0, **kmeans_kw):
    """Fit k-means for each k; pick the k with the highest mean silhouette.

    Ties go to the smaller k. When the range offers no k with a defined
    silhouette (only k=1), that k is chosen. Returns the diagnostics and
    the fitted model for the chosen k.
    """
    X = check_array(vectors, dtype=np.float64)
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1 or ks[-1] > len(X):
        raise ValueError(f"k_range must lie within [1, {len(X)}]")
    diag = KSelectionDiagnostics()
    models = {}
    best_k, best_s = ks[0], None
    for k in ks:
        model = kmeans(X, k, seed, **kmeans_kw)
        models[k] = model
        s = silhouette(X, model.labels_) if k >= 2 else None
        diag.per_k.append((k, model.sse_, s))
        if s is not None and (best_s is None or s > best_s):
            best_k, best_s = k, s
    diag.chosen_k = best_k
    return diag, models[best_k]


def label_clusters(model: KMeans, vectors, texts: Sequence[str], tokens: Sequence[Sequence[str]] | None = None,
                   top_n: int = 10) -> list[dict]:
    """Evidence for naming clusters by hand: nearest texts and frequent tokens."""
    check_is_fitted(model, "cluster_centers_")
    X = check_array(vectors, dtype=np.float64)
    labels = model.predict(X)
    d = _sq_dists(X, model.cluster_centers_)
    out = []
    for j in range(len(model.cluster_centers_)):
        members = np.flatnonzero(labels == j)
        nearest = members[np.argsort(d[members, j], kind="stable")][:top_n]
        counter = Counter()
        for i in members:
            counter.update(tokens[i] if tokens is not None else texts[i].split())
        top = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
        out.append({
            "cluster": j,
            "size": int(len(members)),
            "nearest": [texts[i] for i in nearest],
            "top_tokens": [t for t, _ in top],
        })
    return out


def save_model(model: KMeans, ids: Sequence[str], model_path, assignments_path, extra: dict | None = None):
    check_is_fitted(model, "cluster_centers_")
    data = {
        "k": int(model.n_clusters),
        "dim": int(model.cluster_centers_.shape[1]),
        "seed": int(model.seed),
        "centroids": model.cluster_centers_.tolist(),
        "sse": model.sse_,
    }
    if extra:
        data.update(extra)
    Path(model_path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
    with open(assignments_path, "w", encoding="utf-8") as fh:
        for sid, c in zip(ids, model.labels_):
            fh.write(json.dumps({"suggestion_id": sid, "cluster": int(c)}, ensure_ascii=False) + "\n")


def load_assignments(path) -> dict[str, int]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"cluster assignments missing: {path}")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["suggestion_id"]] = int(rec["cluster"])
    return out


def load_model(path) -> KMeans:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"cluster model missing: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    model = KMeans(n_clusters=data["k"], seed=data["seed"])
    model.cluster_centers_ = np.array(data["centroids"], dtype=np.float64)
    model.sse_ = model.inertia_ = float(data["sse"])
    model.n_features_in_ = int(data["dim"])
    return model
