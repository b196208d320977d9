"""Independent reference implementations used by the tests.

Each oracle is deliberately naive: explicit loops, brute-force
enumeration or finite differences, sharing no code with the library.
"""
import itertools
import math

import numpy as np


def naive_loss(arch, params, X, y):
    """Mean cross-entropy computed sample by sample."""
    total = 0.0
    for x, label in zip(X, y):
        h = np.maximum(x @ params["W1"] + params["b1"], 0.0)
        if arch == "mlp":
            h = np.maximum(h @ params["W2"] + params["b2"], 0.0)
        z = h @ params["Wc"] + params["bc"]
        m = max(z)
        total += m + np.log(sum(np.exp(zj - m) for zj in z)) - z[label]
    return total / len(y)


def preactivations(arch, params, X):
    pre1 = X @ params["W1"] + params["b1"]
    out = [pre1]
    if arch == "mlp":
        out.append(np.maximum(pre1, 0.0) @ params["W2"] + params["b2"])
    return out


def finite_difference_grads(arch, params, X, y, h=1e-5):
    """Central differences of :func:`naive_loss` for every parameter entry."""
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            g[idx] = (naive_loss(arch, plus, X, y) - naive_loss(arch, minus, X, y)) / (2 * h)
        grads[name] = g
    return grads


def brute_force_kmeans(X, K):
    """Global minimum of the within-cluster sum of squares over all K^N labelings.

    Uses SSE = sum |x|^2 - sum_k |S_k|^2 / n_k, evaluated for every labeling
    at once. Labelings leaving a cluster empty are included; they never beat
    the best labeling that uses all K clusters when N >= K.
    """
    X = np.asarray(X, dtype=float)
    labels = np.array(list(itertools.product(range(K), repeat=len(X))))
    onehot = (labels[:, :, None] == np.arange(K)).astype(float)  # (M, N, K)
    sums = np.einsum("mnk,nd->mkd", onehot, X)
    counts = onehot.sum(axis=1)
    between = (sums ** 2).sum(axis=2) / np.where(counts == 0, 1.0, counts)
    return float((X ** 2).sum() - between.sum(axis=1).max())


def naive_selection(features, assignments, K, lam):
    """Per-sample loop: nearest-to-centroid member as center, cosine threshold."""
    X = np.asarray(features, dtype=float)
    n = len(X)
    centroids = [X[assignments == k].mean(axis=0) for k in range(K)]
    centers = []
    for k in range(K):
        best_i, best_d = None, np.inf
        for i in range(n):
            if assignments[i] != k:
                continue
            d = sum((X[i, j] - centroids[k][j]) ** 2 for j in range(X.shape[1]))
            if d < best_d:
                best_i, best_d = i, d
        centers.append(best_i)
    v = np.zeros(n, dtype=bool)
    for i in range(n):
        c = X[centers[assignments[i]]]
        ni, nc = np.sqrt(sum(t * t for t in X[i])), np.sqrt(sum(t * t for t in c))
        cos = 0.0 if ni == 0 or nc == 0 else sum(a * b for a, b in zip(X[i], c)) / (ni * nc)
        v[i] = cos > lam or i in centers
    return v, centers


def naive_retrieval(qf, ql, gf, gl, qc=None, gc=None, ranks=(1, 5, 10, 20)):
    """Quadratic-time CMC and mAP with explicit pairwise comparisons.

    Sorting is a selection sort on (-similarity, index), i.e. ties go to
    the lower gallery index.
    """
    hits = {k: 0 for k in ranks}
    aps = []
    for i in range(len(qf)):
        sims = [float(sum(a * b for a, b in zip(qf[i], g))) for g in gf]
        remaining = list(range(len(gf)))
        order = []
        while remaining:
            best = remaining[0]
            for j in remaining[1:]:
                if sims[j] > sims[best]:
                    best = j
            order.append(best)
            remaining.remove(best)
        if qc is not None:
            order = [j for j in order if not (gl[j] == ql[i] and gc[j] == qc[i])]
        rel = [gl[j] == ql[i] for j in order]
        if not any(rel):
            continue
        found, precisions = 0, []
        for r, is_rel in enumerate(rel, start=1):
            if is_rel:
                found += 1
                precisions.append(found / r)
        aps.append(math.fsum(precisions) / len(precisions))
        first = rel.index(True) + 1
        for k in ranks:
            if first <= k:
                hits[k] += 1
    n = len(aps)
    return {k: hits[k] / n for k in ranks}, math.fsum(aps) / n, n


def constrained_surrogate_minimum(delta, assignments, K, lam):
    """Minimum of sum v_i (1 - delta_i) - (1 - lam) sum v_i over all 2^N masks
    that keep at least one sample in every cluster."""
    n = len(delta)
    best = np.inf
    for bits in itertools.product((0, 1), repeat=n):
        v = np.array(bits, dtype=bool)
        if any(not v[assignments == k].any() for k in range(K)):
            continue
        best = min(best, float(np.sum(v * (1 - delta)) - (1 - lam) * v.sum()))
    return best
