"""Command-line front end.

Precedence for run settings: built-in defaults < ``--config`` file <
explicit flags. Exit codes: 0 success (or converged), 2 invalid input,
3 stopped at the iteration cap without converging, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import config_to_dict, load_config, load_synthetic_spec
from .data_io import HistoryWriter, load_dataset, load_model, save_dataset, save_model
from .errors import FormatError, InvalidInputError, PulError
from .evaluation import evaluate
from .loop import init_original_model, run_semi_supervised
from .synthetic import SyntheticSpec, generate_synthetic, split_labeled
from .types import PulConfig

EXIT_OK, EXIT_INVALID, EXIT_MAX_ITERS, EXIT_IO = 0, 2, 3, 4

SPLIT_FILES = ("source", "target_train", "target_query", "target_gallery")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _manifest(command, args, **extra):
    d = {
        "command": command,
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "arguments": {k: v for k, v in vars(args).items() if k != "func"},
    }
    d.update(extra)
    return d


def _effective_config(args) -> PulConfig:
    cfg = PulConfig() if args.config is None else load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "K", None) is not None:
        changes["K"] = args.K
    if getattr(args, "lam", None) is not None:
        changes["lam"] = args.lam
    if getattr(args, "no_selection", False):
        changes["selection_enabled"] = False
    return cfg.replace(**changes) if changes else cfg


def cmd_generate(args):
    spec = SyntheticSpec() if args.spec is None else load_synthetic_spec(args.spec)
    if args.seed is not None:
        spec = SyntheticSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    splits = generate_synthetic(spec)
    os.makedirs(args.out, exist_ok=True)
    files = {}
    datasets = dict(zip(SPLIT_FILES, splits))
    if args.labeled_ids:
        rng = np.random.default_rng(spec.seed)
        rest, labeled = split_labeled(splits.target_train, splits.target_train_labels,
                                      args.labeled_ids, rng)
        if rest is None:
            raise InvalidInputError("--labeled-ids leaves no unlabelled target samples")
        datasets["target_train"] = rest
        datasets["target_labeled"] = labeled
    for name, ds in datasets.items():
        path = os.path.join(args.out, f"{name}.puld")
        save_dataset(path, ds)
        files[name] = {"path": os.path.basename(path), "N": ds.N, "D": ds.D}
    _write_json(os.path.join(args.out, "manifest.json"),
                _manifest("generate", args, spec=spec.to_dict(), files=files))
    print(f"wrote {len(files)} datasets to {args.out}")
    return EXIT_OK


def cmd_init(args):
    cfg = _effective_config(args)
    source = load_dataset(args.source)
    model = init_original_model(source, cfg)
    save_model(args.out, model)
    _write_json(args.out + ".manifest.json",
                _manifest("init", args, config=config_to_dict(cfg)))
    print(f"original model ({model.arch}, D={model.D}, E={model.E}, C={model.C}) -> {args.out}")
    return EXIT_OK


def cmd_run(args):
    cfg = _effective_config(args)
    target = load_dataset(args.target).without_labels()
    original = load_model(args.model)
    labeled = load_dataset(args.semi) if args.semi else None
    if labeled is not None and labeled.labels is None:
        raise InvalidInputError("--semi dataset must carry identity labels")
    if original.D != target.D:
        raise InvalidInputError(f"model expects D={original.D}, target has D={target.D}")

    evaluate_fn = None
    if args.query or args.gallery:
        if not (args.query and args.gallery):
            raise InvalidInputError("--query and --gallery must be given together")
        query, gallery = load_dataset(args.query), load_dataset(args.gallery)
        evaluate_fn = lambda m: evaluate(query, gallery, m).to_dict()  # noqa: E731

    os.makedirs(args.out, exist_ok=True)
    history_path = os.path.join(args.out, "history.jsonl")
    with HistoryWriter(history_path, truncate=True) as writer:
        result = run_semi_supervised(
            target, labeled, original, cfg,
            evaluate_fn=evaluate_fn,
            on_iteration=lambda st: writer.append(st.history[-1]))
    save_model(os.path.join(args.out, "model.pulm"), result.model)
    _write_json(os.path.join(args.out, "manifest.json"), _manifest(
        "run", args, config=config_to_dict(cfg), iterations=len(result.history),
        converged=result.converged))
    last = result.history[-1]
    print(f"{len(result.history)} iterations, {'converged' if result.converged else 'hit max_pul_iters'}; "
          f"selected {last.selected_count} ({100 * last.selected_fraction:.1f}%)")
    return EXIT_OK if result.converged else EXIT_MAX_ITERS


def cmd_eval(args):
    model = load_model(args.model)
    query, gallery = load_dataset(args.query), load_dataset(args.gallery)
    result = evaluate(query, gallery, model, camera_filter=not args.no_camera_filter)
    record = result.to_dict()
    print(result.format_table())
    print(json.dumps(record, sort_keys=True))
    out = args.out if args.out else os.path.splitext(args.model)[0] + ".metrics.json"
    _write_json(out, record)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="pul", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write the synthetic two-domain benchmark")
    g.add_argument("--spec", help="benchmark spec file (defaults built in)")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--labeled-ids", type=int, default=0,
                   help="also split off this many target identities as a labelled set")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("init", help="train the original model on a labelled source set")
    i.add_argument("--source", required=True)
    i.add_argument("--config")
    i.add_argument("--out", required=True, help="model checkpoint path")
    i.add_argument("--seed", type=int)
    i.set_defaults(func=cmd_init)

    r = sub.add_parser("run", help="progressive unsupervised training on a target set")
    r.add_argument("--target", required=True)
    r.add_argument("--model", required=True, help="original model checkpoint")
    r.add_argument("--config")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--semi", help="labelled target subset for semi-supervised training")
    r.add_argument("--no-selection", action="store_true", help="train on every clustered sample")
    r.add_argument("--seed", type=int)
    r.add_argument("--K", type=int)
    r.add_argument("--lambda", dest="lam", type=float)
    r.add_argument("--query", help="evaluate after every iteration (needs --gallery)")
    r.add_argument("--gallery")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="CMC rank-k and mAP of a model")
    e.add_argument("--model", required=True)
    e.add_argument("--query", required=True)
    e.add_argument("--gallery", required=True)
    e.add_argument("--no-camera-filter", action="store_true")
    e.add_argument("--out", help="metrics JSON path (default: next to the model)")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidInputError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PulError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
