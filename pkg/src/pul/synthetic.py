"""Synthetic two-domain identity benchmark.

Each identity is a Gaussian blob around a prototype. Prototypes vary only
inside a low-rank "identity subspace", so a model trained on one domain
learns to look along particular directions. The target domain draws its
own prototypes and then pushes every sample through a rotation plus a
translation and extra noise, which tilts the identity subspace away from
the one the source model learned.

Target identities used for training never appear in the query/gallery
split, mirroring the usual re-identification protocol.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError
from .types import Dataset

__all__ = [
    "DomainSpec",
    "ShiftSpec",
    "SyntheticSpec",
    "SyntheticSplits",
    "random_rotation",
    "generate_synthetic",
    "split_labeled",
    "BENCHMARK_EPOCHS_PER_ITER",
    "benchmark_config",
]


@dataclass(frozen=True)
class DomainSpec:
    num_ids: int
    samples_per_id: int = 30
    raw_dim: int = 24
    sigma_w: float = 0.5
    sigma_b: float = 1.0
    # share of badly captured samples whose noise is outlier_sigma instead of sigma_w
    outlier_fraction: float = 0.0
    outlier_sigma: float = 2.0


@dataclass(frozen=True)
class ShiftSpec:
    rotation_seed: int = 11
    # 0 keeps the identity map; large values approach a uniformly random rotation
    rotation_scale: float = 1.5
    translation_scale: float = 1.0
    extra_noise: float = 0.1


@dataclass(frozen=True)
class SyntheticSpec:
    source: DomainSpec = field(default_factory=lambda: DomainSpec(num_ids=20))
    target: DomainSpec = field(default_factory=lambda: DomainSpec(num_ids=15))
    shift: ShiftSpec = field(default_factory=ShiftSpec)
    cameras_per_id: int = 4
    # rank of the subspace identity prototypes live in
    id_rank: int = 8
    # target test identities (disjoint from the training ones) and their query share
    test_ids: int = 15
    queries_per_id: int = 10
    shared_prototypes: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        problems = []
        for name in ("source", "target"):
            d = getattr(self, name)
            if d.num_ids < 1 or d.samples_per_id < 1 or d.raw_dim < 1:
                problems.append(f"{name}: counts and raw_dim must be >= 1")
            if not d.sigma_w < d.sigma_b:
                problems.append(f"{name}: sigma_w must be smaller than sigma_b")
            if d.sigma_w < 0:
                problems.append(f"{name}: sigma_w must be >= 0")
            if not 0 <= d.outlier_fraction <= 1 or d.outlier_sigma < 0:
                problems.append(f"{name}: outlier_fraction must lie in [0, 1], outlier_sigma >= 0")
        if self.source.raw_dim != self.target.raw_dim:
            problems.append("source and target raw_dim differ")
        if self.cameras_per_id < 2:
            problems.append("cameras_per_id must be >= 2")
        if not 1 <= self.id_rank <= self.source.raw_dim:
            problems.append("id_rank must lie in [1, raw_dim]")
        if self.test_ids < 1:
            problems.append("test_ids must be >= 1")
        if not 1 <= self.queries_per_id < self.target.samples_per_id:
            problems.append("queries_per_id must leave at least one gallery sample per id")
        if self.shift.rotation_scale < 0 or self.shift.extra_noise < 0 \
                or self.shift.translation_scale < 0:
            problems.append("shift magnitudes must be >= 0")
        if problems:
            raise InvalidInputError("invalid synthetic spec: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        for key, sub in (("source", DomainSpec), ("target", DomainSpec), ("shift", ShiftSpec)):
            if key in d and isinstance(d[key], dict):
                d[key] = sub(**d[key])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SyntheticSplits:
    source: Dataset
    target_train: Dataset
    target_query: Dataset
    target_gallery: Dataset
    # ground truth for target_train, for analysis and labelled subsets only
    target_train_labels: np.ndarray

    def __iter__(self):
        return iter((self.source, self.target_train, self.target_query, self.target_gallery))


def random_rotation(dim, scale, rng) -> np.ndarray:
    """Orthogonal matrix ``Q`` from the QR factorisation of ``I + scale * G``."""
    G = rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(np.eye(dim) + scale * G)
    return Q * np.sign(np.diag(R))


def _blobs(protos, per_id, domain, cams, rng):
    n_ids, D = protos.shape
    labels = np.repeat(np.arange(n_ids), per_id)
    n = n_ids * per_id
    sigma = np.where(rng.random(n) < domain.outlier_fraction, domain.outlier_sigma, domain.sigma_w)
    X = protos[labels] + sigma[:, None] * rng.standard_normal((n, D))
    cam = np.tile(np.arange(per_id) % cams, n_ids)
    return X, labels, cam


def generate_synthetic(spec: SyntheticSpec = None, rng=None) -> SyntheticSplits:
    """Draw the source set and the target train/query/gallery splits.

    Everything is a pure function of ``spec`` (``spec.seed`` when ``rng`` is
    None). Source labels are ``0 .. S-1``; target training identities are
    ``0 .. T-1`` and test identities ``T .. T+test_ids-1``.
    """
    spec = SyntheticSpec() if spec is None else spec
    spec.validate()
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    D, r = spec.source.raw_dim, spec.id_rank

    basis = np.linalg.qr(rng.standard_normal((D, r)))[0].T  # (r, D), orthonormal rows
    src, tgt, sh = spec.source, spec.target, spec.shift

    src_protos = src.sigma_b * rng.standard_normal((src.num_ids, r)) @ basis
    Xs, ys, cs = _blobs(src_protos, src.samples_per_id, src, spec.cameras_per_id, rng)

    n_t = tgt.num_ids + spec.test_ids
    if spec.shared_prototypes:
        if n_t > src.num_ids:
            raise InvalidInputError("shared prototypes need source.num_ids >= target ids + test_ids")
        tgt_protos = src_protos[:n_t] * (tgt.sigma_b / src.sigma_b)
    else:
        tgt_protos = tgt.sigma_b * rng.standard_normal((n_t, r)) @ basis
    Xt, yt, ct = _blobs(tgt_protos, tgt.samples_per_id, tgt, spec.cameras_per_id, rng)

    shift_rng = np.random.default_rng(sh.rotation_seed)
    R = random_rotation(D, sh.rotation_scale, shift_rng)
    t = sh.translation_scale * shift_rng.standard_normal(D) / np.sqrt(D)
    Xt = Xt @ R.T + t + sh.extra_noise * rng.standard_normal(Xt.shape)

    train = yt < tgt.num_ids
    test_idx = np.flatnonzero(~train)
    within = np.arange(len(yt)) % tgt.samples_per_id
    is_query = within[test_idx] < spec.queries_per_id
    q, g = test_idx[is_query], test_idx[~is_query]

    return SyntheticSplits(
        source=Dataset(Xs, ys, cs),
        target_train=Dataset(Xt[train], None, ct[train]),
        target_query=Dataset(Xt[q], yt[q], ct[q]),
        target_gallery=Dataset(Xt[g], yt[g], ct[g]),
        target_train_labels=yt[train].copy(),
    )


def split_labeled(target_train: Dataset, truth, num_labeled_ids, rng):
    """Move every sample of ``num_labeled_ids`` random identities into a labelled set.

    Returns ``(unlabelled_rest, labelled)``; ``labelled`` is None when
    ``num_labeled_ids`` is 0 and ``unlabelled_rest`` is None when nothing is
    left unlabelled.
    """
    truth = np.asarray(truth)
    ids = np.unique(truth)
    if not 0 <= num_labeled_ids <= ids.size:
        raise InvalidInputError(f"num_labeled_ids must lie in [0, {ids.size}]")
    if num_labeled_ids == 0:
        return target_train, None
    chosen = np.sort(rng.choice(ids, size=num_labeled_ids, replace=False))
    lab = np.isin(truth, chosen)
    labelled = target_train.subset(np.flatnonzero(lab))
    labelled = Dataset(labelled.samples, truth[lab], labelled.camera_ids)
    rest = target_train.subset(np.flatnonzero(~lab)) if (~lab).any() else None
    return rest, labelled


# The default 20 epochs per iteration suit training sets of ~13k images, i.e.
# ~16k SGD steps per iteration. The desk-scale target set has 450 samples,
# so the benchmark runs more epochs to give each iteration a comparable
# number of updates. Every other constant keeps its default.
BENCHMARK_EPOCHS_PER_ITER = 100


def benchmark_config(seed=0, **changes):
    """:class:`PulConfig` used for the synthetic benchmark runs."""
    from .types import PulConfig, SGDConfig

    spec = SyntheticSpec()
    cfg = PulConfig(K=spec.target.num_ids, seed=seed,
                    sgd=SGDConfig(epochs_per_iter=BENCHMARK_EPOCHS_PER_ITER))
    return cfg.replace(**changes) if changes else cfg
