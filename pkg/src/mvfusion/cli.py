"""Command-line interface.

Subcommands: synth, split, train, eval, ablate, gradcheck, bench.

Configuration comes from an optional JSON file ({"model": ..., "train": ...})
plus repeatable --set dotted overrides (overrides win). Every JSON artifact
written embeds the resolved run configuration and seed so runs can be
reproduced from their outputs alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .data import DatasetSplit, load_dataset, save_dataset, split_by_group, subset
from .errors import ConfigError
from .model import (ModelConfig, TaskSpec, ViewSpec, config_from_dict,
                    config_to_dict, forward, init_params, load_checkpoint,
                    param_count, save_checkpoint)
from .synth import SynthConfig, gen_crossview_task, save_debug_sidecar
from .training import (TrainConfig, eval_report, gradcheck_variants,
                       run_ablation, tiny_config, train)

DEFAULT_RATIOS = (0.6, 0.2, 0.2)


# -- config plumbing ----------------------------------------------------------


def _parse_set(entry: str) -> tuple[list[str], object]:
    if "=" not in entry:
        raise ConfigError(f"--set expects key=value, got '{entry}'")
    key, raw = entry.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings allowed without quotes
    return key.split("."), value


def _apply_override(tree: dict, path: list[str], value) -> None:
    node = tree
    for seg in path[:-1]:
        if isinstance(node, list):
            node = node[int(seg)]
        else:
            node = node.setdefault(seg, {})
    last = path[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def resolve_config(config_path: str | None, overrides: list[str]) -> dict:
    tree: dict = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            tree = json.load(fh)
    for entry in overrides or []:
        path, value = _parse_set(entry)
        _apply_override(tree, path, value)
    return tree


def infer_model_config(dataset, tree: dict) -> ModelConfig:
    """Model config from the config tree, filling gaps from the dataset
    schema (view names/widths from the first record; classification when all
    labels are small non-negative integers)."""
    mtree = dict(tree.get("model", {}))
    if "views" not in mtree:
        if not dataset:
            raise ConfigError("cannot infer views from an empty dataset; pass a config")
        first = dataset[0]
        default_dc = int(mtree.pop("d_c", 8))
        mtree["views"] = [{"name": name, "d_x": mat.shape[1], "d_c": default_dc}
                          for name, mat in first.views.items()]
    if "task" not in mtree:
        labels = [seq.label for seq in dataset]
        ints = all(float(l).is_integer() and 0 <= l < 50 for l in labels)
        if ints and len({int(l) for l in labels}) >= 2:
            mtree["task"] = {"kind": "classification",
                             "n_classes": int(max(labels)) + 1}
        else:
            mtree["task"] = {"kind": "regression"}
    mtree.setdefault("d_mem", 8)
    return config_from_dict(mtree)


def train_config_from(tree: dict) -> TrainConfig:
    return TrainConfig(**tree.get("train", {}))


def _run_config(args, model_cfg: ModelConfig | None, train_cfg: TrainConfig | None) -> dict:
    rc: dict = {"command": args.command, "version": __version__}
    for key in ("data", "split", "seed", "ratios", "threads"):
        if hasattr(args, key) and getattr(args, key) is not None:
            rc[key] = getattr(args, key)
    if model_cfg is not None:
        rc["model"] = config_to_dict(model_cfg)
    if train_cfg is not None:
        rc["train"] = vars(train_cfg).copy()
    return rc


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_split(args, dataset) -> DatasetSplit:
    if getattr(args, "split", None):
        with open(args.split, encoding="utf-8") as fh:
            return DatasetSplit.from_dict(json.load(fh))
    ratios = tuple(float(r) for r in args.ratios.split(","))
    return split_by_group(dataset, ratios, args.seed)


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SynthConfig(n_views=args.n_views, d_x=args.d_x, T=args.T,
                      n_samples=args.n_samples, noise_sd=args.noise_sd,
                      seed=args.seed)
    dataset, debug = gen_crossview_task(cfg)
    save_dataset(dataset, args.out)
    if args.sidecar:
        debug["run_config"] = {"command": "synth", "seed": args.seed,
                               "synth": vars(cfg).copy()}
        save_debug_sidecar(debug, args.sidecar)
    print(f"wrote {len(dataset)} sequences to {args.out}")
    return 0


def cmd_split(args) -> int:
    dataset = load_dataset(args.data)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    split = split_by_group(dataset, ratios, args.seed)
    payload = split.to_dict()
    payload["run_config"] = _run_config(args, None, None)
    _write_json(args.out, payload)
    return 0


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    tree = resolve_config(args.config, args.set)
    model_cfg = infer_model_config(dataset, tree)
    train_cfg = train_config_from(tree)
    if args.seed is not None:
        train_cfg = TrainConfig(**{**vars(train_cfg), "seed": args.seed})
    split = _load_split(args, dataset)
    params = init_params(model_cfg, train_cfg.seed)
    best, history = train(model_cfg, params, dataset, split, train_cfg)
    rc = _run_config(args, model_cfg, train_cfg)
    save_checkpoint(args.checkpoint, model_cfg, best, train_cfg.seed,
                    extra={"run_config": rc})
    if args.history:
        _write_json(args.history, {"run_config": rc, **history.to_dict()})
    print(f"trained {model_cfg.variant} model: best epoch {history.best_epoch}, "
          f"valid loss {history.valid_loss[history.best_epoch]:.6f} "
          f"-> {args.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    config, params, seed = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    if args.split:
        split = _load_split(args, dataset)
        seqs = subset(dataset, split.ids_for(args.subset))
    else:
        seqs = dataset
    report = eval_report(config, params, seqs, threads=args.threads,
                         ma_classes=args.ma_classes)
    payload = report.to_dict()
    payload["run_config"] = _run_config(args, config, None)
    payload["run_config"]["checkpoint_seed"] = seed
    _write_json(args.out, payload)
    return 0


def cmd_ablate(args) -> int:
    dataset = load_dataset(args.data)
    tree = resolve_config(args.config, args.set)
    model_cfg = infer_model_config(dataset, tree)
    train_cfg = train_config_from(tree)
    if args.seed is not None:
        train_cfg = TrainConfig(**{**vars(train_cfg), "seed": args.seed})
    split = _load_split(args, dataset)
    results = run_ablation(dataset, split, model_cfg, train_cfg, threads=args.threads)
    rc = _run_config(args, model_cfg, train_cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    for label, entry in results.items():
        payload = entry["report"].to_dict()
        payload["variant"] = label
        payload["history"] = entry["history"].to_dict()
        payload["run_config"] = rc
        fname = f"report_{label.replace(':', '_')}.json"
        _write_json(os.path.join(args.out_dir, fname), payload)
        print(f"{label:>20}: " + ", ".join(
            f"{k}={v:.4f}" for k, v in sorted(entry["report"].metrics.items())))
    print(f"wrote {len(results)} reports to {args.out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.config:
        tree = resolve_config(args.config, args.set)
        base = config_from_dict(tree["model"])
    else:
        base = tiny_config()
    t0 = time.perf_counter()
    results = gradcheck_variants(base, T_len=args.T, seed=args.seed, eps=args.eps)
    elapsed = time.perf_counter() - t0
    worst = max(results.values())
    for label, err in results.items():
        status = "ok" if err < args.threshold else "FAIL"
        print(f"{label:>20}: max relative error {err:.3e}  [{status}]")
    print(f"overall max relative error {worst:.3e} ({elapsed:.1f}s)")
    return 0 if worst < args.threshold else 1


def cmd_bench(args) -> int:
    config, params, _ = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    if args.limit:
        dataset = dataset[:args.limit]
    if not dataset:
        raise ConfigError("bench: empty dataset")
    for seq in dataset[:2]:  # warm up caches before timing
        forward(config, params, seq.views)
    t0 = time.perf_counter()
    for seq in dataset:
        forward(config, params, seq.views)
    elapsed = time.perf_counter() - t0
    ips = len(dataset) / elapsed if elapsed > 0 else float("inf")
    payload = {"inferences": len(dataset), "seconds": elapsed, "ips": ips,
               "run_config": _run_config(args, config, None)}
    _write_json(args.out, payload)
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvfusion",
        description="Multi-view sequential learning: train, ablate, and verify.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cross-view parity dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--sidecar", help="write latent bits/pulse times here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-views", type=int, default=3)
    p.add_argument("--d-x", type=int, default=8)
    p.add_argument("--T", type=int, default=20)
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--noise-sd", type=float, default=0.1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="group-wise train/valid/test split manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--ratios", default="0.6,0.2,0.2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model, save checkpoint + history")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="JSON file with 'model' and 'train' sections")
    p.add_argument("--set", action="append", default=[],
                   help="dotted override, e.g. --set train.learning_rate=0.01")
    p.add_argument("--split", help="split manifest (else computed from --ratios)")
    p.add_argument("--ratios", default="0.6,0.2,0.2")
    p.add_argument("--seed", type=int, default=None, help="override train seed")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint, emit metric report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split")
    p.add_argument("--subset", default="test", choices=("train", "valid", "test"))
    p.add_argument("--ratios", default="0.6,0.2,0.2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ma-classes", type=int, help="extra MA(k) binning for regression")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train + evaluate every ablation variant")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[])
    p.add_argument("--split")
    p.add_argument("--ratios", default="0.6,0.2,0.2")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--config", help="model config (default: built-in tiny config)")
    p.add_argument("--set", action="append", default=[])
    p.add_argument("--T", type=int, default=4)
    p.add_argument("--seed", type=int, default=27)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="forward-pass throughput (inferences/second)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
