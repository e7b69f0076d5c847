"""Command-line pipelines: preprocess, split, train, predict, evaluate.

Every command writes a run manifest next to its primary output: command,
config snapshot, seed, content hashes of inputs, and output paths. Primary
outputs are byte-stable across reruns on identical inputs; only the
manifest timestamp differs.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import MlpModel, heuristic_classify, similarity_classify
from .dom import load_dataset, parse_html, save_dataset, simplify_tree, split_tree
from .embeddings import HashEmbeddingProvider, load_embedding_file
from .errors import NonFiniteError, TreencError
from .evaluation import (
    EvalReport,
    SplitSpec,
    format_results_table,
    prf1,
    split_by_interest,
    tree_depth,
)
from .indexing import compute_tree_index
from .model import (
    ModelConfig,
    TreeEncoderModel,
    encode_tree,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    SnapshotSet,
    TrainConfig,
    predict_ensemble,
    train_model,
)

logger = logging.getLogger("treenc")

EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, command: str, config: dict, inputs: list,
                    outputs: list, seed: int | None) -> None:
    manifest = {
        "command": command,
        "toolkit_version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
        "outputs": [str(p) for p in outputs],
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def _resolve_seed(flag_seed: int | None, config_seed: int | None, default=42) -> int:
    env = os.environ.get("TREENC_SEED")
    if env is not None:
        return int(env)
    if flag_seed is not None:
        return flag_seed
    if config_seed is not None:
        return config_seed
    return default


def _load_configs(path) -> tuple[ModelConfig, TrainConfig]:
    """Flat JSON file carrying any mix of model and train config fields."""
    raw = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    model_fields = set(ModelConfig.__dataclass_fields__)
    train_fields = set(TrainConfig.__dataclass_fields__)
    unknown = set(raw) - model_fields - train_fields
    if unknown:
        raise TreencError(f"unknown config fields: {sorted(unknown)}")
    model_cfg = ModelConfig.from_dict({k: v for k, v in raw.items()
                                       if k in model_fields})
    train_cfg = TrainConfig.from_dict({k: v for k, v in raw.items()
                                       if k in train_fields})
    return model_cfg, train_cfg


def _make_provider(spec: str, d_embed: int):
    if spec == "hash":
        return HashEmbeddingProvider(dim=d_embed, seed=0)
    provider = load_embedding_file(spec, strict=True)
    if provider.dim != d_embed:
        raise TreencError(
            f"embedding file dim {provider.dim} != configured d_embed {d_embed}"
        )
    return provider


def _partition_indices(trees, spec: SplitSpec, replicate: int, name: str):
    table = spec.assignments[replicate - 1]
    return [(i, t) for i, t in enumerate(trees) if table.get(t.interest) == name]


def cmd_preprocess(args) -> int:
    with open(args.interest_map, "r", encoding="utf-8") as fh:
        interest_map = json.load(fh)
    html_dir = Path(getattr(args, "in"))
    out_trees = []
    inputs = [args.interest_map]
    for name in sorted(interest_map):
        path = html_dir / name
        if not path.is_file():
            logger.warning("listed page %s not found; skipped", path)
            continue
        inputs.append(path)
        try:
            raw = path.read_text(encoding="utf-8", errors="replace")
            tree = parse_html(raw, interest=interest_map[name],
                              source_url=name)
            tree = simplify_tree(tree)
            parts = split_tree(tree, args.max_nodes, args.min_nodes)
        except TreencError as exc:
            logger.warning("skipping %s: %s", name, exc)
            continue
        for part in parts:
            print(f"{name}: {len(part)} nodes")
            out_trees.append(part)
    for name in sorted(p.name for p in html_dir.iterdir()
                       if p.is_file() and p.name not in interest_map):
        logger.warning("page %s has no interest mapping; skipped", name)
    save_dataset(out_trees, args.out)
    _write_manifest(
        str(args.out) + ".manifest.json", "preprocess",
        {"max_nodes": args.max_nodes, "min_nodes": args.min_nodes},
        inputs, [args.out], seed=None,
    )
    print(f"wrote {len(out_trees)} trees to {args.out}")
    return 0


def cmd_split(args) -> int:
    trees = load_dataset(getattr(args, "in"))
    seed = _resolve_seed(args.seed, None)
    spec = split_by_interest(trees, seed=seed, replicates=args.replicates)
    spec.save(args.out)
    _write_manifest(
        str(args.out) + ".manifest.json", "split",
        {"replicates": args.replicates}, [getattr(args, "in")], [args.out],
        seed=seed,
    )
    counts = {p: sum(1 for v in spec.assignments[0].values() if v == p)
              for p in ("train", "val", "test")}
    print(f"split {len(trees)} trees over {len(spec.assignments[0])} interests: "
          f"{counts['train']}/{counts['val']}/{counts['test']} per replicate")
    return 0


def _encode_partition(pairs, provider):
    return [encode_tree(t, provider, compute_tree_index(t)) for _, t in pairs]


def cmd_train(args) -> int:
    model_cfg, train_cfg = _load_configs(args.config)
    seed = _resolve_seed(args.seed, train_cfg.seed)
    if seed != train_cfg.seed:
        train_cfg = TrainConfig.from_dict({**train_cfg.to_dict(), "seed": seed})
    trees = load_dataset(args.data)
    spec = SplitSpec.load(args.splits)
    train_pairs = _partition_indices(trees, spec, args.replicate, "train")
    val_pairs = _partition_indices(trees, spec, args.replicate, "val")
    provider = _make_provider(args.embeddings, model_cfg.d_embed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    state_path = out_dir / "train-state.json"

    resume_state = None
    if args.resume:
        with open(args.resume, "r", encoding="utf-8") as fh:
            resume_state = json.load(fh)

    def state_sink(state):
        with open(state_path, "w", encoding="utf-8") as fh:
            json.dump(state, fh)

    model = TreeEncoderModel(model_cfg)
    init_parameters(model, train_cfg.seed)
    snapshots, history = train_model(
        model, _encode_partition(train_pairs, provider),
        _encode_partition(val_pairs, provider), train_cfg,
        resume_state=resume_state, state_sink=state_sink,
    )
    written = []
    for rank, snap in enumerate(snapshots.entries, start=1):
        model.load_state_dict(snap.state)
        ckpt_path = out_dir / f"snapshot-{rank}.json"
        save_checkpoint(ckpt_path, model,
                        extra={"val_f1": snap.val_f1, "step": snap.step,
                               "rank": rank, "replicate": args.replicate})
        written.append(ckpt_path)
    log_path = out_dir / "training-log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for record in history:
            fh.write(json.dumps(record) + "\n")
    written.extend([log_path, state_path])
    _write_manifest(
        out_dir / "manifest.json", "train",
        {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(),
         "replicate": args.replicate, "embeddings": args.embeddings},
        [args.data, args.splits] + ([args.config] if args.config else []),
        written, seed=train_cfg.seed,
    )
    best = snapshots.best()
    print(f"kept {len(snapshots)} snapshots; best val F1 {best.val_f1:.4f} "
          f"at step {best.step}")
    return 0


def _load_snapshot_dir(ckpt_dir) -> tuple[TreeEncoderModel, SnapshotSet]:
    paths = sorted(Path(ckpt_dir).glob("snapshot-*.json"))
    if not paths:
        raise TreencError(f"no snapshot files in {ckpt_dir}")
    snapshots = SnapshotSet(capacity=len(paths))
    model = None
    for path in paths:
        loaded, extra = load_checkpoint(path)
        if model is None:
            model = loaded
        snapshots.offer(loaded.state_dict(), extra.get("val_f1", 0.0),
                        extra.get("step", 0))
    return model, snapshots


def _ensemble_predictions(model, snapshots, pairs, provider):
    out = []
    for tree_id, tree in pairs:
        et = encode_tree(tree, provider, compute_tree_index(tree))
        labels, probs = predict_ensemble(model, snapshots, et)
        out.append((tree_id, tree, labels, probs))
    return out


def _baseline_predictions(kind, trees, spec, replicate, pairs, provider,
                          model_cfg, train_cfg):
    if kind == "rules":
        return [(i, t, heuristic_classify(t),
                 heuristic_classify(t).astype(np.float64)) for i, t in pairs]
    if kind == "similarity":
        val_trees = [t for _, t in _partition_indices(trees, spec, replicate, "val")]
        result = similarity_classify([t for _, t in pairs], provider, val_trees)
        return [
            (tree_id, tree, labels, sims)
            for (tree_id, tree), labels, sims
            in zip(pairs, result.labels, result.sims)
        ]
    if kind == "mlp":
        train_pairs = _partition_indices(trees, spec, replicate, "train")
        val_pairs = _partition_indices(trees, spec, replicate, "val")
        model = MlpModel(model_cfg)
        init_parameters(model, train_cfg.seed)
        snapshots, _ = train_model(
            model, _encode_partition(train_pairs, provider),
            _encode_partition(val_pairs, provider), train_cfg,
        )
        return _ensemble_predictions(model, snapshots, pairs, provider)
    raise TreencError(f"unknown baseline {kind!r}")


def _replicate_predictions(args, trees, spec, replicate, model_cfg, train_cfg):
    pairs = _partition_indices(trees, spec, replicate, "test")
    provider = _make_provider(args.embeddings, model_cfg.d_embed)
    if args.baseline:
        return _baseline_predictions(args.baseline, trees, spec, replicate,
                                     pairs, provider, model_cfg, train_cfg)
    ckpt_dir = Path(args.ckpt_dir)
    rep_dir = ckpt_dir / f"rep-{replicate}"
    model, snapshots = _load_snapshot_dir(rep_dir if rep_dir.is_dir() else ckpt_dir)
    return _ensemble_predictions(model, snapshots, pairs, provider)


def _write_predictions(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for replicate, tree_id, tree, labels, probs in rows:
            for node in tree.nodes:
                fh.write(json.dumps({
                    "replicate": replicate,
                    "tree_id": tree_id,
                    "node_id": node.id,
                    "prob": float(probs[node.id]),
                    "label": int(labels[node.id]),
                }) + "\n")


def cmd_predict(args) -> int:
    model_cfg, train_cfg = _load_configs(args.config)
    trees = load_dataset(args.data)
    spec = SplitSpec.load(args.splits)
    preds = _replicate_predictions(args, trees, spec, args.replicate,
                                   model_cfg, train_cfg)
    _write_predictions(args.out,
                       [(args.replicate, *row) for row in preds])
    _write_manifest(
        str(args.out) + ".manifest.json", "predict",
        {"replicate": args.replicate, "baseline": args.baseline,
         "embeddings": args.embeddings},
        [args.data, args.splits], [args.out], seed=train_cfg.seed,
    )
    n_nodes = sum(len(t) for _, t, _, _ in preds)
    print(f"wrote predictions for {len(preds)} trees / {n_nodes} nodes")
    return 0


def cmd_evaluate(args) -> int:
    model_cfg, train_cfg = _load_configs(args.config)
    trees = load_dataset(args.data)
    spec = SplitSpec.load(args.splits)
    replicates = (list(range(1, spec.replicates + 1))
                  if args.replicate == "all" else [int(args.replicate)])
    name = args.baseline or "ensemble"
    report = EvalReport(model=name)
    all_rows = []
    for replicate in replicates:
        preds = _replicate_predictions(args, trees, spec, replicate,
                                       model_cfg, train_cfg)
        gold = np.concatenate(
            [[-1 if n.label is None else n.label for n in t.nodes]
             for _, t, _, _ in preds]
        )
        flat = np.concatenate([labels for _, _, labels, _ in preds])
        scores = prf1(flat, gold)
        report.splits.append({
            "replicate": replicate,
            "precision": scores.precision,
            "recall": scores.recall,
            "f1": scores.f1,
            "n_trees": len(preds),
            "n_nodes": int((gold >= 0).sum()),
        })
        for tree_id, tree, labels, _ in preds:
            node_gold = [-1 if n.label is None else n.label for n in tree.nodes]
            tree_scores = prf1(labels, node_gold)
            index = compute_tree_index(tree)
            report.per_tree.append({
                "replicate": replicate,
                "tree_id": tree_id,
                "interest": tree.interest,
                "depth": tree_depth(index.level_idx),
                "f1": tree_scores.f1,
            })
        all_rows.extend((replicate, *row) for row in preds)
    report.finalize()
    report.save(args.out)
    if args.pred_out:
        _write_predictions(args.pred_out, all_rows)
    _write_manifest(
        str(args.out) + ".manifest.json", "evaluate",
        {"replicate": args.replicate, "baseline": args.baseline,
         "embeddings": args.embeddings},
        [args.data, args.splits], [args.out], seed=train_cfg.seed,
    )
    print(format_results_table([report]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treenc",
        description="classify DOM-tree nodes as product-type phrases",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="parse, simplify, and split HTML pages")
    p.add_argument("--in", required=True, help="directory of HTML files")
    p.add_argument("--interest-map", required=True,
                   help="JSON file mapping filename to interest")
    p.add_argument("--out", required=True, help="output dataset (jsonl)")
    p.add_argument("--max-nodes", type=int, default=512)
    p.add_argument("--min-nodes", type=int, default=64)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("split", help="interest-stratified dataset splits")
    p.add_argument("--in", required=True, help="dataset file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--out", required=True, help="output splits.json")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one replicate")
    p.add_argument("--data", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--replicate", type=int, default=1)
    p.add_argument("--embeddings", default="hash",
                   help="'hash' or path to an embedding file")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None,
                   help="train-state.json from an interrupted run")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write per-node test predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--replicate", type=int, default=1)
    p.add_argument("--ckpt-dir", default=None)
    p.add_argument("--baseline", choices=["rules", "similarity", "mlp"],
                   default=None)
    p.add_argument("--embeddings", default="hash")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score test predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--replicate", default="1",
                   help="replicate number or 'all'")
    p.add_argument("--ckpt-dir", default=None)
    p.add_argument("--baseline", choices=["rules", "similarity", "mlp"],
                   default=None)
    p.add_argument("--embeddings", default="hash")
    p.add_argument("--config", default=None)
    p.add_argument("--pred-out", default=None,
                   help="also write the per-node prediction file")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("predict", "evaluate") and not args.baseline \
            and not args.ckpt_dir:
        parser.error("either --ckpt-dir or --baseline is required")
    try:
        return args.func(args)
    except NonFiniteError as exc:
        logger.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except TreencError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        logger.error("missing input: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
