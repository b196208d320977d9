"""Alternating cluster / select / fine-tune training loop.

Each iteration embeds the unlabelled target data with the current model,
clusters the raw embeddings with k-means, keeps the samples whose
normalised embedding is close to their cluster's center feature, and
fine-tunes a model on those pseudo-labelled samples. The loop stops when
the number of selected samples stops changing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clustering import kmeans
from .embedder import embed, fine_tune, init_model, train_classifier
from .errors import InvalidInputError
from .selection import l2_normalize, select_all, select_center_features, select_reliable
from .types import IterationRecord, PulConfig, PulRunState

__all__ = [
    "PulResult",
    "as_rng",
    "init_original_model",
    "run_iteration",
    "check_convergence",
    "is_saturated",
    "run_pul",
    "run_semi_supervised",
]

logger = logging.getLogger(__name__)


def as_rng(rng, seed=0) -> np.random.Generator:
    if rng is None:
        return np.random.default_rng(seed)
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def init_original_model(source, config: PulConfig, rng=None, epochs=None):
    """Supervised training on a labelled source dataset.

    Source identities are remapped to ``0 .. C-1`` in sorted order. The
    result is the starting point of every run.
    """
    if source.labels is None:
        raise InvalidInputError("the source dataset must carry identity labels")
    ids, y = np.unique(source.labels, return_inverse=True)
    if ids.size < 2:
        raise InvalidInputError("the source dataset needs at least 2 identities")
    rng = as_rng(rng, config.seed)
    model = init_model(source.D, config.embed_dim, ids.size, rng,
                       arch=config.arch, hidden_dim=config.hidden_dim)
    epochs = config.sgd.init_epochs if epochs is None else epochs
    if epochs == 0:
        return model
    return train_classifier(model, source.samples, y, epochs, config.sgd, rng)


def _labeled_block(labeled, K):
    """Samples and class indices ``K .. K+L-1`` for the labelled identities."""
    if labeled is None or labeled.N == 0:
        return None, 0
    if labeled.labels is None:
        raise InvalidInputError("the labelled subset must carry identity labels")
    ids, y = np.unique(labeled.labels, return_inverse=True)
    return (labeled.samples, y + K), ids.size


def run_iteration(state: PulRunState, target, config: PulConfig, rng, labeled=None,
                  evaluate_fn=None) -> PulRunState:
    """One cluster / select / fine-tune round.

    Parameters
    ----------
    state : PulRunState
    target : Dataset of unlabelled samples, or None when only labelled data
        is left (semi-supervised degenerate case)
    config : PulConfig
    rng : numpy Generator
    labeled : optional labelled Dataset added to every training set
    evaluate_fn : optional callable ``model -> dict`` whose result is stored
        in the iteration record
    """
    K = config.K
    extra, L = _labeled_block(labeled, K)
    base = state.original if config.fine_tune_from_original else state.model
    trace = []

    if target is None:
        if extra is None:
            raise InvalidInputError("nothing to train on: no target and no labelled data")
        # only labelled data: plain supervised fine-tuning
        X, y = extra
        model = fine_tune(base, X, y - K, None, L, config.sgd, rng, trace)
        clusters = mask = None
        count, frac, objective = 0, 0.0, 0.0
    else:
        if K > target.N:
            raise InvalidInputError(f"K={K} exceeds the {target.N} target samples")
        feats = embed(state.model, target.samples)
        clusters = kmeans(feats, K, config.kmeans_max_iters, rng)
        clusters = select_center_features(feats, clusters)
        if config.selection_enabled:
            mask = select_reliable(l2_normalize(feats), clusters, config.lam)
        else:
            mask = select_all(target.N, config.lam)
        model = fine_tune(base, target.samples, clusters.assignments, mask, K + L,
                          config.sgd, rng, trace, extra=extra)
        count = mask.selected_count
        frac = count / target.N
        objective = clusters.objective_trace[-1]

    record = IterationRecord(
        iter=state.t + 1,
        selected_count=count,
        selected_fraction=frac,
        kmeans_objective=objective,
        train_loss=trace[-1] if trace else float("nan"),
        metrics=evaluate_fn(model) if evaluate_fn is not None else None,
    )
    logger.info("iteration %d: selected %d (%.3f), objective %.4g, loss %.4f",
                record.iter, count, frac, objective, record.train_loss)
    return PulRunState(state.t + 1, model, state.original, state.history + (record,),
                       clusters, mask)


def is_saturated(counts, patience, rel_tol, N) -> bool:
    """True when the last ``patience`` count changes are all below ``rel_tol * N``."""
    counts = [getattr(c, "selected_count", c) for c in counts]
    if len(counts) < patience + 1:
        return False
    recent = np.abs(np.diff(np.asarray(counts[-(patience + 1):], dtype=np.float64)))
    return bool(np.all(recent / N < rel_tol))


def check_convergence(history, patience, rel_tol, N, max_iters=None) -> bool:
    """Stopping rule: selected-sample count saturated, or the iteration cap hit.

    ``history`` holds :class:`IterationRecord` objects or plain counts.
    """
    if len(history) == 0:
        raise InvalidInputError("history is empty")
    if max_iters is not None and len(history) >= max_iters:
        return True
    return is_saturated(history, patience, rel_tol, N)


@dataclass(frozen=True, eq=False)
class PulResult:
    model: object
    history: tuple
    converged: bool
    state: PulRunState

    def __iter__(self):
        # unpacks as (model, history)
        return iter((self.model, self.history))


def _loop(target, labeled, original, config, rng, evaluate_fn, on_iteration):
    rng = as_rng(rng, config.seed)
    state = PulRunState.start(original)
    n = target.N if target is not None else labeled.N
    conv = config.convergence
    saturated = False
    while True:
        state = run_iteration(state, target, config, rng, labeled, evaluate_fn)
        if on_iteration is not None:
            on_iteration(state)
        saturated = is_saturated(state.history, conv.patience, conv.rel_tol, n)
        if saturated or state.t >= config.max_pul_iters:
            break
    return PulResult(state.model, state.history, saturated, state)


def run_pul(target, original, config: PulConfig, rng=None, evaluate_fn=None,
            on_iteration=None) -> PulResult:
    """Iterate until the selected-sample count saturates or the cap is hit.

    ``rng`` defaults to a generator seeded with ``config.seed``.
    ``on_iteration`` receives each new :class:`PulRunState`. The result
    unpacks as ``(model, history)``; ``result.converged`` is False when the
    loop stopped at ``max_pul_iters`` without saturating.
    """
    if target is None or target.N == 0:
        raise InvalidInputError("run_pul needs unlabelled target samples")
    return _loop(target, None, original, config, rng, evaluate_fn, on_iteration)


def run_semi_supervised(target, labeled, original, config: PulConfig, rng=None,
                        evaluate_fn=None, on_iteration=None) -> PulResult:
    """PUL with a labelled subset added to every iteration's training set.

    ``target`` holds only the unlabelled samples (labelled ones never enter
    clustering or selection). The ``L`` labelled identities get classifier
    slots ``K .. K+L-1``. With no labelled data this is exactly
    :func:`run_pul`; with ``target=None`` it is supervised fine-tuning.
    """
    if labeled is not None and labeled.N == 0:
        labeled = None
    if labeled is None:
        return run_pul(target, original, config, rng, evaluate_fn, on_iteration)
    return _loop(target, labeled, original, config, rng, evaluate_fn, on_iteration)
