"""Single-query retrieval evaluation: CMC rank-k and mean average precision."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embedder import embed
from .errors import InvalidInputError
from .selection import l2_normalize

__all__ = [
    "EvalResult",
    "extract_features",
    "rank_gallery",
    "average_precision",
    "evaluate_features",
    "evaluate",
]

DEFAULT_RANKS = (1, 5, 10, 20)


@dataclass(frozen=True)
class EvalResult:
    """Aggregated retrieval metrics.

    ``ranks`` maps k to the CMC rank-k accuracy. Queries with no valid
    match in the (filtered) gallery are listed in ``skipped`` and take no
    part in any average.
    """

    ranks: dict
    mAP: float
    num_queries: int
    skipped: tuple = field(default=())

    @property
    def rank1(self) -> float:
        return self.ranks[1]

    def to_dict(self) -> dict:
        d = {f"rank-{k}": v for k, v in self.ranks.items()}
        d["mAP"] = self.mAP
        d["num_queries"] = self.num_queries
        d["num_skipped"] = len(self.skipped)
        d["skipped"] = list(self.skipped)
        return d

    def format_table(self) -> str:
        head = "  ".join(f"{'rank-' + str(k):>8}" for k in self.ranks) + f"  {'mAP':>8}"
        vals = "  ".join(f"{100 * v:8.2f}" for v in self.ranks.values()) + f"  {100 * self.mAP:8.2f}"
        lines = [head, vals]
        if self.skipped:
            lines.append(f"({len(self.skipped)} of {self.num_queries} queries skipped: no valid match)")
        return "\n".join(lines)


def extract_features(model, dataset) -> np.ndarray:
    """Embeddings of every sample, l2-normalised row by row."""
    X = getattr(dataset, "samples", dataset)
    return l2_normalize(embed(model, X))


def _similarities(query, gallery):
    # row-wise reduction: a row's score does not depend on its position
    return (gallery * query[None, :]).sum(axis=1)


def rank_gallery(query_feature, gallery_features) -> np.ndarray:
    """Gallery indices by descending cosine similarity, ties by index."""
    q = np.asarray(query_feature, dtype=np.float64)
    G = np.asarray(gallery_features, dtype=np.float64)
    return np.argsort(-_similarities(q, G), kind="stable")


def average_precision(ranked_relevance):
    """Mean over relevant positions r of precision@r.

    Returns ``None`` when there is no relevant item (the query is skipped,
    not scored 0).
    """
    rel = np.asarray(ranked_relevance, dtype=bool)
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        return None
    precision = np.arange(1, hits.size + 1) / (hits + 1)
    # exact summation keeps the result independent of reduction order
    return math.fsum(precision.tolist()) / hits.size


def evaluate_features(query_features, query_labels, gallery_features, gallery_labels,
                      query_cams=None, gallery_cams=None, camera_filter=True,
                      ranks=DEFAULT_RANKS) -> EvalResult:
    """Score unit-norm query features against a gallery.

    With ``camera_filter`` and camera ids on both sides, gallery entries that
    share both identity and camera with the query are removed before ranking.
    """
    qf = np.asarray(query_features, dtype=np.float64)
    gf = np.asarray(gallery_features, dtype=np.float64)
    ql, gl = np.asarray(query_labels), np.asarray(gallery_labels)
    if qf.shape[0] != ql.shape[0] or gf.shape[0] != gl.shape[0]:
        raise InvalidInputError("every feature needs an identity label")
    use_cams = camera_filter and query_cams is not None and gallery_cams is not None
    if use_cams:
        qc, gc = np.asarray(query_cams), np.asarray(gallery_cams)

    max_k = max(ranks)
    hits_at = np.zeros(max_k)
    aps, skipped = [], []
    for i in range(qf.shape[0]):
        order = rank_gallery(qf[i], gf)
        match = gl[order] == ql[i]
        if use_cams:
            keep = ~(match & (gc[order] == qc[i]))
            match = match[keep]
        ap = average_precision(match)
        if ap is None:
            skipped.append(i)
            continue
        aps.append(ap)
        first = int(np.argmax(match))
        if first < max_k:
            hits_at[first] += 1
    n_valid = len(aps)
    if n_valid:
        cmc = np.cumsum(hits_at) / n_valid
        rank_vals = {k: float(cmc[k - 1]) for k in ranks}
        mAP = math.fsum(aps) / n_valid
    else:
        rank_vals = {k: float("nan") for k in ranks}
        mAP = float("nan")
    return EvalResult(rank_vals, mAP, qf.shape[0], tuple(skipped))


def evaluate(query_set, gallery_set, model, camera_filter=True, ranks=DEFAULT_RANKS) -> EvalResult:
    """Embed both sets with ``model`` and compute CMC rank-k and mAP."""
    if query_set.labels is None or gallery_set.labels is None:
        raise InvalidInputError("query and gallery sets need identity labels")
    return evaluate_features(
        extract_features(model, query_set), query_set.labels,
        extract_features(model, gallery_set), gallery_set.labels,
        query_set.camera_ids, gallery_set.camera_ids,
        camera_filter=camera_filter, ranks=ranks,
    )
