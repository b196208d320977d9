"""Reading run and benchmark configuration from ``key = value`` files.

Run configuration sections and keys::

    [pul]          K, lambda, max_pul_iters, kmeans_max_iters, seed,
                   fine_tune_from_original, selection_enabled
    [sgd]          learning_rate, momentum, epochs_per_iter, batch_size, init_epochs
    [convergence]  patience, rel_tol
    [model]        arch, embed_dim, hidden_dim

Synthetic benchmark files use ``[general]`` (cameras_per_id, id_rank,
test_ids, queries_per_id, shared_prototypes, seed) plus ``[source]``,
``[target]`` and ``[shift]`` sections named after the dataclass fields.

Missing keys keep their defaults; unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, fields, replace

from .errors import InvalidInputError
from .synthetic import SyntheticSpec
from .types import PulConfig

__all__ = ["parse_config", "load_config", "config_to_dict", "parse_synthetic_spec",
           "load_synthetic_spec"]

_PUL_KEYS = {"lambda": "lam"}


def _coerce(value: str, like):
    if isinstance(like, bool):
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value.strip()


def _apply(obj, items, section, rename=None):
    rename = rename or {}
    allowed = {f.name for f in fields(obj)}
    changes = {}
    for key, raw in items:
        name = rename.get(key, key)
        if name not in allowed or name in ("sgd", "convergence", "source", "target", "shift"):
            raise InvalidInputError(f"unknown key {key!r} in [{section}]")
        try:
            changes[name] = _coerce(raw, getattr(obj, name))
        except ValueError as exc:
            raise InvalidInputError(f"[{section}] {key}: {exc}") from None
    return changes


def _read(text):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidInputError(f"malformed config: {exc}") from None
    return parser


def parse_config(text: str, base: PulConfig = None) -> PulConfig:
    base = PulConfig() if base is None else base
    parser = _read(text)
    top, sgd, conv = {}, {}, {}
    for section in parser.sections():
        items = parser.items(section)
        if section == "pul":
            top.update(_apply(base, items, section, _PUL_KEYS))
        elif section == "model":
            for key, _ in items:
                if key not in ("arch", "embed_dim", "hidden_dim"):
                    raise InvalidInputError(f"unknown key {key!r} in [model]")
            top.update(_apply(base, items, section))
        elif section == "sgd":
            sgd = _apply(base.sgd, items, section)
        elif section == "convergence":
            conv = _apply(base.convergence, items, section)
        else:
            raise InvalidInputError(f"unknown section [{section}]")
    return replace(base, sgd=replace(base.sgd, **sgd),
                   convergence=replace(base.convergence, **conv), **top)


def load_config(path, base: PulConfig = None) -> PulConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read(), base)


def config_to_dict(cfg: PulConfig) -> dict:
    d = asdict(cfg)
    d["lambda"] = d.pop("lam")
    return d


def parse_synthetic_spec(text: str, base: SyntheticSpec = None) -> SyntheticSpec:
    base = SyntheticSpec() if base is None else base
    parser = _read(text)
    top = {}
    subs = {"source": base.source, "target": base.target, "shift": base.shift}
    for section in parser.sections():
        items = parser.items(section)
        if section == "general":
            top.update(_apply(base, items, section))
        elif section in subs:
            subs[section] = replace(subs[section], **_apply(subs[section], items, section))
        else:
            raise InvalidInputError(f"unknown section [{section}]")
    return replace(base, **subs, **top)


def load_synthetic_spec(path, base: SyntheticSpec = None) -> SyntheticSpec:
    with open(path, encoding="utf-8") as f:
        return parse_synthetic_spec(f.read(), base)
