"""Trainable embedder with a softmax classification head.

The embedder maps raw feature vectors to rectified embeddings, either with
a single linear layer or with one rectified hidden layer. A linear softmax
classifier sits on top during training and is discarded for retrieval.
Training minimises the mean cross-entropy of the selected samples with
plain SGD plus momentum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrainingSetError, InvalidInputError
from .types import EmbedModel, SelectionMask, SGDConfig

__all__ = [
    "GradientSet",
    "init_model",
    "init_classifier",
    "forward",
    "embed",
    "logits",
    "classify",
    "softmax",
    "loss_and_grad",
    "sgd_update",
    "train_classifier",
    "fine_tune",
    "predict",
]


@dataclass(frozen=True, eq=False)
class GradientSet:
    """Gradients keyed like :meth:`EmbedModel.params`, plus the batch loss."""

    grads: dict
    batch_loss: float


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


def init_classifier(E, C, rng) -> dict:
    """Fresh classifier weights, uniform in +-1/sqrt(E); zero bias."""
    return {"Wc": _uniform(rng, 1.0 / np.sqrt(E), (E, C)), "bc": np.zeros(C)}


def init_model(D, E, C, rng, arch="mlp", hidden_dim=32) -> EmbedModel:
    """He-uniform initialisation of the embedder, then a fresh classifier."""
    if arch == "mlp":
        theta = {
            "W1": _uniform(rng, np.sqrt(6.0 / D), (D, hidden_dim)),
            "b1": np.zeros(hidden_dim),
            "W2": _uniform(rng, np.sqrt(6.0 / hidden_dim), (hidden_dim, E)),
            "b2": np.zeros(E),
        }
    else:
        theta = {"W1": _uniform(rng, np.sqrt(6.0 / D), (D, E)), "b1": np.zeros(E)}
    return EmbedModel(arch, theta, init_classifier(E, C, rng))


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.D:
        raise InvalidInputError(
            f"input dimension {x.shape[-1] if x.ndim else 0} does not match model D={model.D}")
    return x, single


def _forward_layers(model, X):
    t = model.theta
    pre1 = X @ t["W1"] + t["b1"]
    h1 = np.maximum(pre1, 0.0)
    if model.arch == "linear":
        return pre1, h1, None, h1
    pre2 = h1 @ t["W2"] + t["b2"]
    return pre1, h1, pre2, np.maximum(pre2, 0.0)


def embed(model: EmbedModel, X) -> np.ndarray:
    """Rectified embeddings of a batch ``(n, D) -> (n, E)``."""
    X, _ = _as_batch(model, X)
    return _forward_layers(model, X)[-1]


def forward(model: EmbedModel, x) -> np.ndarray:
    """Embedding of one vector (or a batch); every entry is >= 0."""
    X, single = _as_batch(model, x)
    out = _forward_layers(model, X)[-1]
    return out[0] if single else out


def logits(model: EmbedModel, x) -> np.ndarray:
    X, single = _as_batch(model, x)
    z = _forward_layers(model, X)[-1] @ model.w["Wc"] + model.w["bc"]
    return z[0] if single else z


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def classify(model: EmbedModel, x) -> np.ndarray:
    """Class probabilities for one vector (or a batch)."""
    return softmax(logits(model, x))


def predict(model: EmbedModel, X) -> np.ndarray:
    return np.argmax(logits(model, np.atleast_2d(X)), axis=1)


def _check_labels(labels, n, C):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise InvalidInputError("one label per sample is required")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= C:
        raise InvalidInputError(f"labels must be integers in [0, {C})")
    return labels


def _loss_and_grad(arch, p, X, labels):
    n = X.shape[0]
    pre1 = X @ p["W1"] + p["b1"]
    h1 = np.maximum(pre1, 0.0)
    if arch == "mlp":
        pre2 = h1 @ p["W2"] + p["b2"]
        e = np.maximum(pre2, 0.0)
    else:
        e = h1
    z = e @ p["Wc"] + p["bc"]
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))

    dz = np.exp(z - logsum[:, None])
    dz[rows, labels] -= 1.0
    dz /= n
    grads = {"Wc": e.T @ dz, "bc": dz.sum(axis=0)}
    de = dz @ p["Wc"].T
    if arch == "mlp":
        dpre2 = de * (pre2 > 0)
        grads["W2"] = h1.T @ dpre2
        grads["b2"] = dpre2.sum(axis=0)
        dh1 = dpre2 @ p["W2"].T
    else:
        dh1 = de
    dpre1 = dh1 * (pre1 > 0)
    grads["W1"] = X.T @ dpre1
    grads["b1"] = dpre1.sum(axis=0)
    return grads, loss


def loss_and_grad(model: EmbedModel, X, labels) -> GradientSet:
    """Mean cross-entropy over the batch and its exact gradients."""
    X, _ = _as_batch(model, X)
    if X.shape[0] == 0:
        raise InvalidInputError("empty batch")
    labels = _check_labels(labels, X.shape[0], model.C)
    grads, loss = _loss_and_grad(model.arch, model.params(), X, labels)
    return GradientSet(grads, loss)


def sgd_update(model: EmbedModel, grads, lr, momentum, velocity=None):
    """One momentum step: ``v' = momentum * v + g``; ``p' = p - lr * v'``.

    ``grads`` may be a :class:`GradientSet` or a plain dict. ``velocity``
    defaults to zeros. Returns ``(new_model, new_velocity)``.
    """
    if isinstance(grads, GradientSet):
        grads = grads.grads
    params = model.params()
    if set(grads) != set(params):
        raise InvalidInputError("gradient keys do not match model parameters")
    if velocity is None:
        velocity = {k: np.zeros_like(p) for k, p in params.items()}
    elif set(velocity) != set(params):
        raise InvalidInputError("velocity keys do not match model parameters")
    new_params, new_velocity = {}, {}
    for k, p in params.items():
        g, v = np.asarray(grads[k]), np.asarray(velocity[k])
        if g.shape != p.shape or v.shape != p.shape:
            raise InvalidInputError(f"shape mismatch for parameter {k}")
        v = momentum * v + g
        new_velocity[k] = v
        new_params[k] = p - lr * v
    return model.with_params(new_params), new_velocity


def train_classifier(model, X, labels, epochs, sgd: SGDConfig, rng, trace=None):
    """Mini-batch SGD over ``(X, labels)`` for ``epochs`` epochs.

    The sample order is reshuffled from ``rng`` every epoch and the last
    partial batch is kept. Mean epoch losses are appended to ``trace`` when
    a list is given. Each step is exactly :func:`sgd_update` applied to
    :func:`loss_and_grad`; the loop just skips rebuilding the model object.
    """
    X, _ = _as_batch(model, X)
    n = X.shape[0]
    if n == 0:
        raise EmptyTrainingSetError("no training samples")
    labels = _check_labels(labels, n, model.C)
    lr, mom, bs = sgd.learning_rate, sgd.momentum, sgd.batch_size
    params = model.params()
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            grads, loss = _loss_and_grad(model.arch, params, X[idx], labels[idx])
            for k, g in grads.items():
                v = mom * velocity[k] + g
                velocity[k] = v
                params[k] = params[k] - lr * v
            total += loss * len(idx)
        if trace is not None:
            trace.append(total / n)
    return model.with_params(params)


def fine_tune(init_model: EmbedModel, dataset, pseudo_labels, mask, num_classes,
              sgd: SGDConfig, rng, trace=None, extra=None) -> EmbedModel:
    """Train a copy of ``init_model`` on the selected samples only.

    The classifier head is replaced by a freshly initialised one with
    ``num_classes`` outputs. Samples with ``v_i = 0`` are dropped before any
    randomness is drawn, so they cannot influence the result.

    Parameters
    ----------
    dataset : Dataset or array of shape (N, D)
    pseudo_labels : int array of shape (N,)
    mask : SelectionMask, bool array of shape (N,), or None for all samples
    extra : optional ``(X, labels)`` pair appended to the selected samples
        (used for labelled data in the semi-supervised variant).
    """
    X = np.asarray(getattr(dataset, "samples", dataset), dtype=np.float64)
    y = np.asarray(pseudo_labels)
    if y.shape != (X.shape[0],):
        raise InvalidInputError("one pseudo-label per sample is required")
    if mask is None:
        v = np.ones(X.shape[0], dtype=bool)
    else:
        v = np.asarray(mask.v if isinstance(mask, SelectionMask) else mask, dtype=bool)
        if v.shape != y.shape:
            raise InvalidInputError("mask length does not match sample count")
    X, y = X[v], y[v]
    if extra is not None:
        X = np.concatenate([X, np.asarray(extra[0], dtype=np.float64)])
        y = np.concatenate([y, np.asarray(extra[1])])
    if len(y) == 0:
        raise EmptyTrainingSetError("fine-tuning needs at least one selected sample")
    if y.min() < 0 or y.max() >= num_classes:
        raise InvalidInputError(f"labels must lie in [0, {num_classes})")
    model = init_model.with_classifier(init_classifier(init_model.E, num_classes, rng))
    return train_classifier(model, X, y, sgd.epochs_per_iter, sgd, rng, trace)
