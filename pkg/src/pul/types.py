"""Shared data types.

Every type here is a plain value snapshot. Arrays are never mutated in
place by library code once a value has been constructed, so instances may
be shared freely between threads.

Cluster indices are 0-based in storage (``0 .. K-1``).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InvalidInputError, InternalInvariantError

__all__ = [
    "Dataset",
    "EmbedModel",
    "ClusterState",
    "SelectionMask",
    "SGDConfig",
    "ConvergenceConfig",
    "PulConfig",
    "IterationRecord",
    "PulRunState",
    "validate_cluster_state",
    "validate_selection",
    "models_equal",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature vectors with optional identity labels and camera ids.

    ``samples`` is stored as a C-contiguous float32 ``(N, D)`` array, which
    is also the on-disk precision, so save/load round-trips are bit-exact.
    """

    samples: np.ndarray
    labels: Optional[np.ndarray] = None
    camera_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.ascontiguousarray(self.samples, dtype=np.float32)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InvalidInputError(
                f"samples must be a non-empty (N, D) array, got shape {x.shape}")
        object.__setattr__(self, "samples", x)
        for name in ("labels", "camera_ids"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.ascontiguousarray(arr, dtype=np.int64)
            if arr.shape != (x.shape[0],):
                raise InvalidInputError(
                    f"{name} must have shape ({x.shape[0]},), got {arr.shape}")
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def D(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return self.N

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.samples[index],
            None if self.labels is None else self.labels[index],
            None if self.camera_ids is None else self.camera_ids[index],
        )

    def without_labels(self) -> "Dataset":
        return Dataset(self.samples, None, self.camera_ids)

    def equals(self, other: "Dataset") -> bool:
        """Bit-exact comparison, including which optional fields exist."""
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
        return (same(self.samples, other.samples) and same(self.labels, other.labels)
                and same(self.camera_ids, other.camera_ids))


ARCHITECTURES = ("mlp", "linear")


@dataclass(frozen=True, eq=False)
class EmbedModel:
    """Embedder ``phi(.; theta)`` followed by a softmax classifier ``w``.

    ``theta`` holds ``W1, b1`` (and ``W2, b2`` for the ``"mlp"``
    architecture); ``w`` holds ``Wc, bc``. Weight matrices are laid out as
    ``(fan_in, fan_out)`` so a batch forward pass is ``x @ W + b``.
    """

    arch: str
    theta: dict
    w: dict

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise InvalidInputError(f"unknown architecture {self.arch!r}")
        expected = ("W1", "b1", "W2", "b2") if self.arch == "mlp" else ("W1", "b1")
        if tuple(sorted(self.theta)) != tuple(sorted(expected)):
            raise InvalidInputError(
                f"theta for {self.arch!r} needs keys {expected}, got {tuple(self.theta)}")
        if tuple(sorted(self.w)) != ("Wc", "bc"):
            raise InvalidInputError(f"w needs keys ('Wc', 'bc'), got {tuple(self.w)}")
        theta = {k: np.array(v, dtype=np.float64) for k, v in self.theta.items()}
        w = {k: np.array(v, dtype=np.float64) for k, v in self.w.items()}
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "w", w)
        layers = [("W1", "b1")] + ([("W2", "b2")] if self.arch == "mlp" else []) + [("Wc", "bc")]
        params = self.params()
        fan_in = params["W1"].shape[0]
        for wk, bk in layers:
            W, b = params[wk], params[bk]
            if W.ndim != 2 or W.shape[0] != fan_in or b.shape != (W.shape[1],):
                raise InvalidInputError(
                    f"inconsistent shapes for {wk}/{bk}: {W.shape}, {b.shape}")
            fan_in = W.shape[1]

    def params(self) -> dict:
        out = dict(self.theta)
        out.update(self.w)
        return out

    @property
    def D(self) -> int:
        return self.theta["W1"].shape[0]

    @property
    def E(self) -> int:
        key = "W2" if self.arch == "mlp" else "W1"
        return self.theta[key].shape[1]

    @property
    def H(self) -> Optional[int]:
        return self.theta["W1"].shape[1] if self.arch == "mlp" else None

    @property
    def C(self) -> int:
        return self.w["Wc"].shape[1]

    def with_params(self, params: dict) -> "EmbedModel":
        theta = {k: params[k] for k in self.theta}
        w = {k: params[k] for k in self.w}
        return EmbedModel(self.arch, theta, w)

    def with_classifier(self, w: dict) -> "EmbedModel":
        return EmbedModel(self.arch, self.theta, w)


def models_equal(a: EmbedModel, b: EmbedModel) -> bool:
    """True when both models have the same architecture and identical bytes."""
    pa, pb = a.params(), b.params()
    if a.arch != b.arch or set(pa) != set(pb):
        return False
    return all(pa[k].shape == pb[k].shape and pa[k].tobytes() == pb[k].tobytes()
               for k in pa)


@dataclass(frozen=True, eq=False)
class ClusterState:
    """Result of clustering one set of embeddings.

    ``center_features`` and ``center_indices`` stay ``None`` until
    :func:`pul.selection.select_center_features` fills them in.
    """

    assignments: np.ndarray
    centroids: np.ndarray
    center_features: Optional[np.ndarray] = None
    center_indices: Optional[np.ndarray] = None
    objective_trace: tuple = ()
    n_iter: int = 0
    converged: bool = False

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.K)


def validate_cluster_state(features, state: ClusterState, atol=1e-9):
    """Raise :class:`InternalInvariantError` if ``state`` is inconsistent."""
    features = np.asarray(features, dtype=np.float64)
    y = state.assignments
    K = state.K
    if y.shape != (features.shape[0],):
        raise InternalInvariantError("assignment count does not match sample count")
    if y.size and (y.min() < 0 or y.max() >= K):
        raise InternalInvariantError("assignment outside 0..K-1")
    for k in range(K):
        members = features[y == k]
        if len(members) and not np.allclose(members.mean(axis=0), state.centroids[k],
                                             rtol=0, atol=atol):
            raise InternalInvariantError(f"centroid {k} is not the mean of its members")
    if state.center_features is not None:
        norms = np.linalg.norm(state.center_features, axis=1)
        if not np.all(np.abs(norms - 1.0) <= atol):
            raise InternalInvariantError("center feature is not unit length")
        if state.center_indices is not None:
            if not np.array_equal(y[state.center_indices], np.arange(K)):
                raise InternalInvariantError("center sample not assigned to its cluster")
            f = features[state.center_indices]
            f = f / np.linalg.norm(f, axis=1, keepdims=True)
            if not np.allclose(f, state.center_features, rtol=0, atol=atol):
                raise InternalInvariantError("center feature is not a member's feature")


@dataclass(frozen=True, eq=False)
class SelectionMask:
    """Binary reliability indicator ``v`` over all N samples."""

    v: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=bool))

    @property
    def selected_count(self) -> int:
        return int(np.count_nonzero(self.v))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.v)


def validate_selection(mask: SelectionMask, assignments, K):
    """Check that every non-empty cluster keeps at least one selected sample."""
    assignments = np.asarray(assignments)
    if mask.v.shape != assignments.shape:
        raise InternalInvariantError("mask length does not match sample count")
    sizes = np.bincount(assignments, minlength=K)
    kept = np.bincount(assignments[mask.v], minlength=K)
    bad = np.flatnonzero((sizes > 0) & (kept == 0))
    if bad.size:
        raise InternalInvariantError(f"clusters {bad.tolist()} have no selected sample")


@dataclass(frozen=True)
class SGDConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    epochs_per_iter: int = 20
    batch_size: int = 16
    # epochs used to train the original model on the source domain
    init_epochs: int = 40


@dataclass(frozen=True)
class ConvergenceConfig:
    patience: int = 3
    rel_tol: float = 0.005


@dataclass(frozen=True)
class PulConfig:
    """Run configuration. Defaults are the standard large-scale training constants."""

    K: int = 15
    lam: float = 0.85
    max_pul_iters: int = 25
    kmeans_max_iters: int = 300
    sgd: SGDConfig = field(default_factory=SGDConfig)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    seed: int = 0
    fine_tune_from_original: bool = True
    selection_enabled: bool = True
    arch: str = "mlp"
    embed_dim: int = 16
    hidden_dim: int = 32

    def __post_init__(self):
        problems = []
        if self.K < 1:
            problems.append("K must be >= 1")
        if not 0.0 <= self.lam <= 1.0:
            problems.append("lambda must lie in [0, 1]")
        if self.max_pul_iters < 1 or self.kmeans_max_iters < 1:
            problems.append("iteration caps must be >= 1")
        if self.sgd.epochs_per_iter < 0 or self.sgd.init_epochs < 0:
            problems.append("epoch counts must be >= 0")
        if self.sgd.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if not self.sgd.learning_rate > 0:
            problems.append("learning_rate must be > 0")
        if not 0.0 <= self.sgd.momentum < 1.0:
            problems.append("momentum must lie in [0, 1)")
        if self.convergence.patience < 1 or self.convergence.rel_tol < 0:
            problems.append("patience must be >= 1 and rel_tol >= 0")
        if self.arch not in ARCHITECTURES:
            problems.append(f"arch must be one of {ARCHITECTURES}")
        if self.embed_dim < 1 or self.hidden_dim < 1:
            problems.append("embed_dim and hidden_dim must be >= 1")
        if problems:
            raise InvalidInputError("invalid PulConfig: " + "; ".join(problems))

    def replace(self, **changes) -> "PulConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration summary written to the run history."""

    iter: int
    selected_count: int
    selected_fraction: float
    kmeans_objective: float
    train_loss: float
    metrics: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {
            "iter": self.iter,
            "selected_count": self.selected_count,
            "selected_fraction": self.selected_fraction,
            "kmeans_objective": self.kmeans_objective,
            "train_loss": self.train_loss,
        }
        if self.metrics is not None:
            d["metrics"] = self.metrics
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(int(d["iter"]), int(d["selected_count"]), float(d["selected_fraction"]),
                   float(d["kmeans_objective"]), float(d["train_loss"]), d.get("metrics"))


@dataclass(frozen=True, eq=False)
class PulRunState:
    """Snapshot of a run after ``t`` completed iterations."""

    t: int
    model: EmbedModel
    original: EmbedModel
    history: tuple = ()
    clusters: Optional[ClusterState] = None
    mask: Optional[SelectionMask] = None

    def __post_init__(self):
        if len(self.history) != self.t:
            raise InternalInvariantError("history length must equal completed iterations")

    @classmethod
    def start(cls, original: EmbedModel) -> "PulRunState":
        return cls(0, original, original)

    @property
    def selected_counts(self) -> list:
        return [r.selected_count for r in self.history]
