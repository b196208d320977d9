"""Reliable-sample selection by cosine similarity to cluster center features."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import InternalInvariantError, InvalidInputError
from .types import ClusterState, SelectionMask

__all__ = [
    "l2_normalize",
    "center_indices",
    "select_center_features",
    "select_reliable",
    "select_all",
    "selected_fraction",
]


def l2_normalize(features, return_degenerate=False):
    """Scale each row to unit Euclidean norm.

    All-zero rows stay zero. With ``return_degenerate=True`` a boolean array
    flagging those rows is returned as well.
    """
    X = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(X, axis=-1, keepdims=True)
    zero = norms == 0
    out = X / np.where(zero, 1.0, norms)
    if return_degenerate:
        return out, zero[..., 0]
    return out


def center_indices(features, state: ClusterState) -> np.ndarray:
    """Index of the member nearest to each centroid (lowest index on ties)."""
    X = np.asarray(features, dtype=np.float64)
    y = state.assignments
    d = ((X - state.centroids[y]) ** 2).sum(axis=1)
    out = np.empty(state.K, dtype=np.int64)
    for k in range(state.K):
        members = np.flatnonzero(y == k)
        if members.size == 0:
            raise InternalInvariantError(f"cluster {k} is empty")
        out[k] = members[np.argmin(d[members])]
    return out


def select_center_features(features, state: ClusterState) -> ClusterState:
    """Fill in ``center_features`` (unit vectors) and ``center_indices``.

    ``features`` are the un-normalised embeddings that were clustered.
    """
    idx = center_indices(features, state)
    f = l2_normalize(np.asarray(features, dtype=np.float64)[idx])
    return replace(state, center_features=f, center_indices=idx)


def select_reliable(unit_features, state: ClusterState, lam) -> SelectionMask:
    """Select samples whose cosine to their cluster's center exceeds ``lam``.

    The center sample of every cluster is always selected, so each
    non-empty cluster keeps at least one sample even for ``lam = 1`` or a
    degenerate zero center.
    """
    if not 0.0 <= lam <= 1.0:
        raise InvalidInputError("lambda must lie in [0, 1]")
    if state.center_features is None or state.center_indices is None:
        raise InvalidInputError("cluster state has no center features; "
                                "call select_center_features first")
    U = np.asarray(unit_features, dtype=np.float64)
    y = state.assignments
    delta = (U * state.center_features[y]).sum(axis=1)
    v = delta > lam
    v[state.center_indices] = True
    return SelectionMask(v, float(lam))


def select_all(n, lam=0.0) -> SelectionMask:
    """Mask that keeps every sample (selection switched off)."""
    return SelectionMask(np.ones(n, dtype=bool), float(lam))


def selected_fraction(mask: SelectionMask, N=None) -> float:
    n = mask.v.size if N is None else N
    return mask.selected_count / n
