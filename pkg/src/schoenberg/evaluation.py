"""Downstream evaluation: linear SVM on random features, baseline kernel
selectors, k-means labelling and retrieval metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDatasetError
from .features import FeatureBank
from .measure import LabeledDataset, RandomSource


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    regularization: float
    bias: bool = True
    history: tuple = ()

    def decision(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if self.bias:
            x = _with_bias(x)
        return x @ self.weights

    def predict(self, features) -> np.ndarray:
        return np.where(self.decision(features) >= 0, 1.0, -1.0)


def _with_bias(x):
    return np.hstack([x, np.ones((x.shape[0], 1))])


def svm_objective(weights, features, labels, regularization, bias=True) -> float:
    x = _with_bias(features) if bias else features
    margins = labels * (x @ weights)
    return float(np.mean(np.maximum(0.0, 1.0 - margins)) + 0.5 * regularization * weights @ weights)


def svm_train(features, labels, regularization: float, epochs: int, rng: RandomSource,
              bias: bool = True) -> LinearModel:
    """Stochastic subgradient descent on hinge loss + ridge, step 1/(lambda t).

    The bias is a constant feature regularised with the weights. The returned
    weights average the iterates of the last epoch; ``history`` holds the
    training objective of every epoch's average iterate.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.shape[0] < 2:
        raise InvalidDatasetError("need at least two training points", "evaluation")
    if not regularization > 0:
        raise ValueError("regularization must be positive")
    xb = _with_bias(x) if bias else x
    n, dim = xb.shape
    w = np.zeros(dim)
    t = 0
    history = []
    avg = w
    for _ in range(epochs):
        order = rng.permutation(n)
        acc = np.zeros(dim)
        for i in order:
            t += 1
            step = 1.0 / (regularization * t)
            margin = y[i] * (xb[i] @ w)
            w *= 1.0 - step * regularization
            if margin < 1.0:
                w += step * y[i] * xb[i]
            acc += w
        avg = acc / n
        history.append(svm_objective(avg, x, y, regularization, bias))
    return LinearModel(avg, float(regularization), bias, tuple(history))


def svm_error(model: LinearModel, features, labels) -> float:
    y = np.asarray(labels, dtype=float)
    return float(np.mean(model.predict(features) != y))


@dataclass(frozen=True, eq=False)
class ImportanceWeights:
    weights: np.ndarray
    chi_square_radius: float
    scores: np.ndarray

    @property
    def chi_square(self) -> float:
        return chi_square(self.weights)


def chi_square(w) -> float:
    """Chi-square divergence of w from the uniform distribution."""
    w = np.asarray(w, dtype=float)
    return float(w.size * np.sum(w * w) - 1.0)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def feature_alignment_scores(bank: FeatureBank, data: LabeledDataset) -> np.ndarray:
    """Per-feature alignment (2/(n(n-1))) sum_{i<j} y_i y_j phi_m(x_i) phi_m(x_j) with phi = sqrt2 cos."""
    a = np.sqrt(2.0) * np.cos(data.features @ bank.frequencies.T + bank.phases) * data.labels[:, None]
    n = data.count
    s = a.sum(axis=0)
    return (s * s - np.sum(a * a, axis=0)) / (n * (n - 1))


def maximize_on_chi_ball(scores, radius: float, tolerance: float = 1e-12) -> np.ndarray:
    """argmax of <w, scores> over the simplex intersected with chi^2(w) <= radius.

    For a multiplier lam the maximiser of <w, s> - lam N |w|^2 / 2 over the
    simplex is the projection of s / (lam N); chi^2 decreases in lam, so the
    radius is met by bisection on log lam.
    """
    s = np.asarray(scores, dtype=float)
    n = s.size
    if radius < 0:
        raise ValueError("radius must be non-negative")
    top = np.isclose(s, s.max(), rtol=0, atol=1e-15)
    vertex = top / top.sum()
    if chi_square(vertex) <= radius or np.ptp(s) == 0:
        return vertex
    if radius == 0:
        return np.full(n, 1.0 / n)
    w_of = lambda lam: project_simplex(s / (lam * n))
    spread = np.ptp(s)
    lo, hi = np.log(spread * 1e-12 + 1e-300), np.log(spread * 1e6 + 1e-300)
    # lo side: concentrated (infeasible); hi side: near uniform (feasible)
    while chi_square(w_of(np.exp(hi))) > radius:
        hi += 10.0
    while chi_square(w_of(np.exp(lo))) <= radius:
        lo -= 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi_square(w_of(np.exp(mid))) > radius:
            lo = mid
        else:
            hi = mid
        if hi - lo < tolerance:
            break
    return w_of(np.exp(hi))


def importance_sampling_weights(bank: FeatureBank, data: LabeledDataset,
                                radius: float) -> ImportanceWeights:
    scores = feature_alignment_scores(bank, data)
    return ImportanceWeights(maximize_on_chi_ball(scores, radius), float(radius), scores)


def weighted_feature_map(bank: FeatureBank, weights, x) -> np.ndarray:
    """sqrt(2 w_m) cos(<omega_m, x> + b_m); inner products give the reweighted kernel."""
    w = np.asarray(weights, dtype=float)
    return np.sqrt(2.0 * w) * np.cos(np.asarray(x, float) @ bank.frequencies.T + bank.phases)


def knn_bandwidth(points, k: int = 3) -> float:
    """Mean squared distance from each point to its k-th nearest other point."""
    x = points.features if isinstance(points, LabeledDataset) else np.atleast_2d(
        np.asarray(points, dtype=float))
    n = x.shape[0]
    if n <= k:
        raise InvalidDatasetError(f"need more than k={k} points, got {n}", "evaluation")
    sq = np.sum(x * x, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * x @ x.T, 0.0)
    np.fill_diagonal(d2, np.inf)
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
    return float(kth.mean())


@dataclass
class KMeansResult:
    assignments: np.ndarray
    labels: np.ndarray
    centers: np.ndarray
    positive_cluster: int
    wcss_history: list = field(default_factory=list)
    iterations: int = 0


def _sqdist(x, c):
    return np.maximum(np.sum(x * x, 1)[:, None] + np.sum(c * c, 1)[None, :] - 2 * x @ c.T, 0.0)


def kmeans_plus_plus(x, k, rng: RandomSource) -> np.ndarray:
    n = x.shape[0]
    centers = [x[int(rng.integers(0, n))]]
    d2 = _sqdist(x, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        i = int(rng.choice(n, p=d2 / total))
        centers.append(x[i])
        d2 = np.minimum(d2, _sqdist(x, x[i:i + 1])[:, 0])
    return np.array(centers)


def wcss(x, assignments, centers) -> float:
    return float(np.sum((x - centers[assignments]) ** 2))


def kmeans_label(points, k: int, rng: RandomSource, max_iterations: int = 100) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding; one random cluster becomes +1."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > np.unique(x, axis=0).shape[0]:
        raise InvalidDatasetError(f"k={k} exceeds the number of distinct points", "evaluation")
    centers = kmeans_plus_plus(x, k, rng)
    assign = np.argmin(_sqdist(x, centers), axis=1)
    history = [wcss(x, assign, centers)]
    it = 0
    for it in range(1, max_iterations + 1):
        new_centers = centers.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new_centers[j] = x[members].mean(axis=0)
        centers = new_centers
        history.append(wcss(x, assign, centers))
        new_assign = np.argmin(_sqdist(x, centers), axis=1)
        # keep the old label on exact ties so WCSS cannot rise
        keep = _sqdist(x, centers)[np.arange(x.shape[0]), assign] <= \
            _sqdist(x, centers)[np.arange(x.shape[0]), new_assign]
        new_assign = np.where(keep, assign, new_assign)
        history.append(wcss(x, new_assign, centers))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    positive = int(rng.integers(0, k))
    labels = np.where(assign == positive, 1.0, -1.0)
    return KMeansResult(assign, labels, centers, positive, history, it)


def precision_recall(retrieved, relevant):
    """Empty retrieval has precision 1; an empty relevant set has recall 1."""
    ret, rel = set(retrieved), set(relevant)
    hit = len(ret & rel)
    precision = hit / len(ret) if ret else 1.0
    recall = hit / len(rel) if rel else 1.0
    return precision, recall


def pr_curve(distances, relevant, thresholds=None):
    """(threshold, precision, recall) rows retrieving every item with distance <= threshold."""
    distances = np.asarray(distances)
    if thresholds is None:
        thresholds = np.unique(distances)
    rows = []
    for t in thresholds:
        retrieved = np.flatnonzero(distances <= t)
        p, r = precision_recall(retrieved.tolist(), relevant)
        rows.append((float(t), p, r))
    return rows


def nominal_neighbors(queries, database, count: int = 50) -> np.ndarray:
    """Indices of the ``count`` Euclidean nearest database rows for each query."""
    d2 = _sqdist(np.atleast_2d(queries), np.atleast_2d(database))
    idx = np.argpartition(d2, count - 1, axis=1)[:, :count]
    return idx
