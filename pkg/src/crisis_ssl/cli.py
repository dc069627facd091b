"""Command-line interface: split, pseudo-label, run, aggregate, export, synth."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .corpus import (humaid_schema, load_corpus, make_split_plan, save_corpus,
                     save_split_plan)
from .featurizer import FeaturizerConfig
from .model import TrainConfig, child_seed
from .oracle import (AnnotationCache, AnnotationRequest, OracleProfile,
                     annotate_remote, annotate_simulated, annotate_teacher,
                     default_oracle_profile)
from .strategies import ModelConfig, build_context, _fit_supervised
from .synth import SynthConfig, generate_corpus


def _add_split(sub):
    p = sub.add_parser("split", help="write a labeled/unlabeled split audit file")
    p.add_argument("--data", required=True, help="event directory with train/val/test TSVs")
    p.add_argument("--budget", type=int, required=True, help="labels per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output id<TAB>L|U file")


def _add_pseudo_label(sub):
    p = sub.add_parser("pseudo-label", help="annotate the unlabeled split")
    p.add_argument("--data", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", choices=["teacher", "remote", "simulated"],
                   default="simulated")
    p.add_argument("--endpoint", help="remote chat-completion URL")
    p.add_argument("--model-id", default="annotator")
    p.add_argument("--cache", default="annotations.cache.jsonl")
    p.add_argument("--profile", help="JSON list of per-class accuracies (simulated)")
    p.add_argument("--out", required=True, help="output TSV")


def _add_run(sub):
    p = sub.add_parser("run", help="execute an experiment grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", help="comma-separated seed override")
    p.add_argument("--oracle", choices=["teacher", "remote", "simulated"])
    p.add_argument("--endpoint")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--workers", type=int)


def _add_aggregate(sub):
    p = sub.add_parser("aggregate", help="aggregate run records into a table")
    p.add_argument("--runs", required=True, help="run output directory")
    p.add_argument("--out", help="write table JSON here (text goes to stdout)")


def _add_export(sub):
    p = sub.add_parser("export", help="per-event Macro-F1 grids and ablation CSVs")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True, help="directory for CSVs")


def _add_synth(sub):
    p = sub.add_parser("synth", help="materialize a synthetic event corpus")
    p.add_argument("--out", required=True, help="directory for train/val/test TSVs")
    p.add_argument("--train", type=int, default=5000)
    p.add_argument("--val", type=int, default=750)
    p.add_argument("--test", type=int, default=1500)
    p.add_argument("--seed", type=int, default=7)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crisis-ssl",
        description="Semi-supervised and LLM-guided training strategies for "
                    "low-resource crisis tweet classification.")
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_split, _add_pseudo_label, _add_run, _add_aggregate,
                _add_export, _add_synth):
        add(sub)
    return parser


def cmd_split(args) -> int:
    corpus = load_corpus(args.data, humaid_schema())
    plan = make_split_plan(corpus, args.budget, args.seed)
    save_split_plan(plan, corpus, args.out)
    print(f"{corpus.event_name}: n_L={plan.n_labeled} n_U={plan.n_unlabeled} -> {args.out}")
    return 0


def cmd_pseudo_label(args) -> int:
    corpus = load_corpus(args.data, humaid_schema())
    plan = make_split_plan(corpus, args.budget, args.seed)
    ctx = build_context(corpus, plan, FeaturizerConfig())
    idx = ctx.unlabeled_idx
    ids = [ctx.train_ids[i] for i in idx]
    if args.oracle == "simulated":
        profile = (OracleProfile(tuple(json.loads(args.profile)), args.seed)
                   if args.profile else default_oracle_profile(args.seed))
        labels = annotate_simulated(ids, ctx.y_train[idx], profile)
    elif args.oracle == "teacher":
        res = _fit_supervised(ctx, ModelConfig(), TrainConfig(seed=args.seed))
        labels = annotate_teacher(res.params, ctx.X_train[idx], ids)
    else:
        if not args.endpoint:
            print("--endpoint is required for the remote oracle", file=sys.stderr)
            return 2
        request = AnnotationRequest(
            endpoint=args.endpoint, model_id=args.model_id,
            batch=[(ctx.train_ids[i], ctx.train_texts[i]) for i in idx])
        labels = annotate_remote(request, corpus.schema, AnnotationCache(args.cache))
    gold = ctx.y_train[idx]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("id\tgold\tpseudo\tconfidence\tsource\toos\n")
        for g, pl in zip(gold, labels):
            label = "" if pl.label is None else pl.label
            fh.write(f"{pl.example_id}\t{g}\t{label}\t{pl.confidence:.4f}"
                     f"\t{pl.source}\t{int(pl.out_of_schema)}\n")
    n_oos = sum(pl.out_of_schema for pl in labels)
    agree = np.mean([pl.label == g for g, pl in zip(gold, labels)
                     if not pl.out_of_schema]) if len(labels) > n_oos else 0.0
    print(f"wrote {len(labels)} pseudo-labels ({n_oos} OOS, "
          f"agreement with gold {agree:.3f}) -> {args.out}")
    return 0


def cmd_run(args) -> int:
    raw = json.loads(Path(args.config).read_text())
    if args.seeds:
        raw["seeds"] = [int(s) for s in args.seeds.split(",")]
    if args.oracle:
        raw.setdefault("oracle", {})["kind"] = args.oracle
    if args.endpoint:
        raw.setdefault("oracle", {})["endpoint"] = args.endpoint
    if args.out:
        raw["out_dir"] = args.out
    if args.workers:
        raw["workers"] = args.workers
    config = bench.ExperimentConfig.from_dict(raw)
    bench.run_experiment(config, config_dict=raw)
    manifest = bench.Manifest(Path(config.out_dir))
    failures = [k for k, e in manifest.runs.items() if e.get("status") == "failed"]
    if failures:
        print(f"{len(failures)} failed run(s):", *failures, sep="\n  ", file=sys.stderr)
        return 1
    return 0


def cmd_aggregate(args) -> int:
    docs = bench.load_run_docs(args.runs)
    table = bench.aggregate(docs)
    print(table.render_text())
    if args.out:
        Path(args.out).write_text(json.dumps(table.to_dict(), indent=2))
        print(f"table JSON -> {args.out}")
    return 0


def cmd_export(args) -> int:
    docs = bench.load_run_docs(args.runs)
    for path in bench.export_event_grid(docs, args.out):
        print(f"wrote {path}")
    return 0


def cmd_synth(args) -> int:
    corpus = generate_corpus(SynthConfig(
        train_size=args.train, val_size=args.val, test_size=args.test,
        seed=args.seed, event_name=Path(args.out).name))
    save_corpus(corpus, args.out)
    print(f"synthetic corpus ({args.train}/{args.val}/{args.test}) -> {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "split": cmd_split,
        "pseudo-label": cmd_pseudo_label,
        "run": cmd_run,
        "aggregate": cmd_aggregate,
        "export": cmd_export,
        "synth": cmd_synth,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
