"""k-means with k-means++ seeding on un-normalised embeddings."""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .types import ClusterState

__all__ = ["kmeans_pp_init", "kmeans", "kmeans_objective", "assign", "update_centroids"]


def _check(features, K):
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidInputError("features must be a non-empty (N, E) array")
    if not 1 <= K <= X.shape[0]:
        raise InvalidInputError(f"need 1 <= K <= N, got K={K}, N={X.shape[0]}")
    return X


def _sq_dists(X, C):
    # explicit differences keep exact zeros for duplicated points
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans_pp_init(features, K, rng) -> np.ndarray:
    """Pick ``K`` seed rows by D^2 sampling.

    The first seed is uniform; each further seed is drawn with probability
    proportional to the squared distance to the nearest seed chosen so far.
    When every remaining row coincides with a seed, an unused row is drawn
    uniformly so that seeds stay distinct row indices.
    """
    X = _check(features, K)
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = closest.sum()
        if total > 0:
            probs = closest / total
            idx = int(rng.choice(n, p=probs))
        else:
            unused = np.setdiff1d(np.arange(n), chosen)
            idx = int(unused[rng.integers(len(unused))])
        chosen.append(idx)
        closest = np.minimum(closest, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def assign(features, centroids) -> np.ndarray:
    """Nearest centroid per sample; ties go to the lowest cluster index."""
    return np.argmin(_sq_dists(features, centroids), axis=1)


def update_centroids(features, assignments, K, previous=None) -> np.ndarray:
    """Cluster means; an empty cluster keeps its ``previous`` centroid."""
    E = features.shape[1]
    sums = np.zeros((K, E))
    np.add.at(sums, assignments, features)
    counts = np.bincount(assignments, minlength=K)
    out = np.zeros((K, E)) if previous is None else previous.copy()
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def _repair_empty(X, y, centroids, K):
    """Give every empty cluster the sample farthest from its own centroid."""
    y = y.copy()
    centroids = centroids.copy()
    counts = np.bincount(y, minlength=K)
    for k in np.flatnonzero(counts == 0):
        dist = ((X - centroids[y]) ** 2).sum(axis=1)
        dist[counts[y] <= 1] = -1.0  # never empty another cluster
        i = int(np.argmax(dist))
        counts[y[i]] -= 1
        y[i] = k
        counts[k] = 1
        centroids[k] = X[i]
    return y, centroids


def kmeans(features, K, max_iters=300, rng=None, init=None) -> ClusterState:
    """Lloyd iterations from a k-means++ seeding.

    Stops when the assignments no longer change or after ``max_iters``
    assignment/update rounds. The returned centroids are always the means of
    their members and no cluster is empty.

    Parameters
    ----------
    features : array of shape (N, E)
    K : int
    max_iters : int
    rng : numpy Generator, used for seeding only
    init : optional (K, E) array of initial centroids, bypassing k-means++

    Returns
    -------
    ClusterState
        ``objective_trace`` holds the objective after every round, which
        never increases.
    """
    X = _check(features, K)
    if max_iters < 1:
        raise InvalidInputError("max_iters must be >= 1")
    if init is None:
        if rng is None:
            raise InvalidInputError("rng is required for k-means++ seeding")
        centroids = kmeans_pp_init(X, K, rng)
    else:
        centroids = np.array(init, dtype=np.float64)
        if centroids.shape != (K, X.shape[1]):
            raise InvalidInputError("init must have shape (K, E)")

    y_prev = None
    trace = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        y = assign(X, centroids)
        y, centroids = _repair_empty(X, y, centroids, K)
        centroids = update_centroids(X, y, K, centroids)
        trace.append(_objective(X, y, centroids))
        if y_prev is not None and np.array_equal(y, y_prev):
            converged = True
            break
        y_prev = y
    return ClusterState(y, centroids, objective_trace=tuple(trace),
                        n_iter=n_iter, converged=converged)


def _objective(X, y, centroids):
    return float(((X - centroids[y]) ** 2).sum())


def kmeans_objective(features, state: ClusterState) -> float:
    """Sum of squared Euclidean distances to the assigned centroids."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != state.assignments.shape[0] \
            or X.shape[1] != state.centroids.shape[1]:
        raise InvalidInputError("features do not match the cluster state")
    return _objective(X, state.assignments, state.centroids)
