"""Experiment runner: (events x budgets x strategies x seeds) grids with a
resume manifest, plus aggregation into paper-style tables and CSV exports."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import EventCorpus, humaid_schema, load_corpus, make_split_plan
from .featurizer import FeaturizerConfig, texts_to_csr
from .model import TrainConfig, child_seed
from .oracle import (AnnotationCache, AnnotationRequest, OracleProfile,
                     annotate_remote, annotate_simulated, annotate_teacher,
                     default_oracle_profile)
from .strategies import (ModelConfig, RunRecord, StrategyConfig, build_context,
                         run_strategy, write_audit_tsv)
from .synth import SynthConfig, generate_corpus

MANIFEST_NAME = "manifest.json"


@dataclass
class ExperimentConfig:
    """Validated experiment grid; see from_dict for the JSON layout."""

    events: dict                     # name -> {"path": dir} | {"synthetic": {...}}
    budgets: list = field(default_factory=lambda: [5, 10, 25, 50])
    strategies: list = field(default_factory=lambda: [StrategyConfig()])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    oracle: dict = field(default_factory=lambda: {"kind": "simulated"})
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    featurizer: FeaturizerConfig = field(default_factory=FeaturizerConfig)
    out_dir: str = "runs"
    workers: int = 1
    save_audit: bool = False

    def validate(self) -> None:
        if not self.events:
            raise ValueError("need at least one event")
        if not self.budgets or any(b < 1 for b in self.budgets):
            raise ValueError("budgets must be positive")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not self.strategies:
            raise ValueError("need at least one strategy")
        kind = self.oracle.get("kind", "simulated")
        if kind not in ("simulated", "teacher", "remote"):
            raise ValueError(f"unknown oracle kind {kind!r}")
        if kind == "remote" and not self.oracle.get("endpoint"):
            raise ValueError("remote oracle needs an endpoint")
        for name, spec in self.events.items():
            if "path" in spec:
                if not Path(spec["path"]).exists():
                    raise ValueError(f"event {name!r}: path {spec['path']} not found")
            elif "synthetic" not in spec:
                raise ValueError(f"event {name!r} needs 'path' or 'synthetic'")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        cfg = cls(
            events=d["events"],
            budgets=list(d.get("budgets", [5, 10, 25, 50])),
            strategies=[StrategyConfig(**s) for s in d.get("strategies", [{}])],
            seeds=list(d.get("seeds", [0, 1, 2])),
            oracle=dict(d.get("oracle", {"kind": "simulated"})),
            model=ModelConfig(**d.get("model", {})),
            train=TrainConfig(**d.get("train", {})),
            featurizer=FeaturizerConfig(
                **{**d.get("featurizer", {}),
                   **({"ngram_orders": frozenset(d["featurizer"]["ngram_orders"])}
                      if "ngram_orders" in d.get("featurizer", {}) else {})}),
            out_dir=d.get("out_dir", "runs"),
            workers=int(d.get("workers", 1)),
            save_audit=bool(d.get("save_audit", False)),
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_event(name: str, spec: dict) -> EventCorpus:
    if "path" in spec:
        return load_corpus(spec["path"], humaid_schema(), event_name=name)
    synth_spec = dict(spec["synthetic"])
    synth_spec.setdefault("event_name", name)
    return generate_corpus(SynthConfig(**synth_spec))


def make_oracle(cfg: ExperimentConfig, run_seed: int):
    """Build the oracle callable for one run; None for teacher-internal kinds."""
    kind = cfg.oracle.get("kind", "simulated")
    if kind == "simulated":
        if "per_class_accuracy" in cfg.oracle:
            profile = OracleProfile(tuple(cfg.oracle["per_class_accuracy"]),
                                    int(cfg.oracle.get("seed", 0)))
        else:
            profile = default_oracle_profile(int(cfg.oracle.get("seed", 0)))

        def simulated(ctx, idx):
            return annotate_simulated([ctx.train_ids[i] for i in idx],
                                      ctx.y_train[idx], profile)

        return simulated
    if kind == "remote":
        cache = AnnotationCache(cfg.oracle.get("cache", "annotations.cache.jsonl"))

        def remote(ctx, idx):
            request = AnnotationRequest(
                endpoint=cfg.oracle["endpoint"],
                model_id=cfg.oracle.get("model", "annotator"),
                batch=[(ctx.train_ids[i], ctx.train_texts[i]) for i in idx],
                max_retries=int(cfg.oracle.get("max_retries", 3)),
                rate_limit_per_s=float(cfg.oracle.get("rate_limit_per_s", 4.0)),
            )
            return annotate_remote(request, ctx.schema, cache)

        return remote

    # teacher kind: strategies that need an explicit oracle get one trained on
    # D_L inside the run; strategies with built-in teachers ignore it
    def teacher(ctx, idx):
        from .strategies import _fit_supervised  # local to avoid cycle at import
        res = _fit_supervised(ctx, cfg.model,
                              TrainConfig(cfg.train.learning_rate, cfg.train.batch_size,
                                          cfg.train.epochs, cfg.train.weight_decay,
                                          child_seed(run_seed, "oracle-teacher"),
                                          cfg.train.optimizer))
        return annotate_teacher(res.params, ctx.X_train[idx],
                                [ctx.train_ids[i] for i in idx])

    return teacher


def run_key(event: str, budget: int, strategy: str, seed: int) -> str:
    return f"{event}__k{budget}__{strategy}__s{seed}"


class Manifest:
    """Completed-run ledger enabling kill-and-resume without re-execution."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / MANIFEST_NAME
        self.runs: dict = {}
        if self.path.exists():
            self.runs = json.loads(self.path.read_text()).get("runs", {})

    def done(self, key: str) -> bool:
        entry = self.runs.get(key)
        return bool(entry) and entry.get("status") == "done"

    def mark(self, key: str, status: str, record_path: str | None = None,
             error: str | None = None) -> None:
        self.runs[key] = {"status": status, "record": record_path,
                          "error": error, "updated_at": time.time()}
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"runs": self.runs}, indent=2))
        tmp.replace(self.path)


def _execute_cell(cfg: ExperimentConfig, corpora: dict, features: dict,
                  event: str, budget: int, scfg: StrategyConfig, seed: int):
    corpus_obj = corpora[event]
    plan = make_split_plan(corpus_obj, budget, seed=child_seed(seed, "split"))
    ctx = build_context(corpus_obj, plan, cfg.featurizer, features=features.get(event))
    features.setdefault(event, (ctx.X_train, ctx.X_val, ctx.X_test))
    tcfg = TrainConfig(cfg.train.learning_rate, cfg.train.batch_size,
                       cfg.train.epochs, cfg.train.weight_decay, seed,
                       cfg.train.optimizer)
    oracle = make_oracle(cfg, seed)
    result = run_strategy(ctx, scfg, cfg.model, tcfg, oracle)
    doc = {"event": event, "budget": budget, "n_labeled": plan.n_labeled,
           "n_unlabeled": plan.n_unlabeled, **result.record.to_dict()}
    return doc, result.extras.get("audit")


def _cell_worker(args):
    cfg_dict, event_spec, event, budget, scfg_dict, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    corpora = {event: load_event(event, event_spec)}
    doc, audit = _execute_cell(cfg, corpora, {}, event, budget,
                               StrategyConfig(**scfg_dict), seed)
    return doc, audit


def run_experiment(config: ExperimentConfig, config_dict: dict | None = None,
                   log=print) -> list:
    """Execute the grid, skipping manifest-complete runs; returns run docs.

    Partial failures are recorded in the manifest and do not stop the grid.
    """
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir)
    cells = [(event, budget, scfg, seed)
             for event in config.events
             for budget in config.budgets
             for scfg in config.strategies
             for seed in config.seeds]
    pending = [c for c in cells
               if not manifest.done(run_key(c[0], c[1], c[2].strategy, c[3]))]
    log(f"grid: {len(cells)} runs, {len(cells) - len(pending)} already done")
    docs = []

    def finish(cell, doc, audit):
        event, budget, scfg, seed = cell
        key = run_key(event, budget, scfg.strategy, seed)
        record_path = out_dir / f"{key}.json"
        record_path.write_text(json.dumps(doc, indent=2))
        if config.save_audit and audit:
            write_audit_tsv(audit, out_dir / f"{key}.audit.tsv")
        manifest.mark(key, "done", record_path.name)
        docs.append(doc)
        log(f"done {key}: test F1 {doc['test_metrics']['macro_f1']:.3f}")

    if config.workers <= 1:
        corpora = {name: load_event(name, spec) for name, spec in config.events.items()}
        features: dict = {}
        for cell in pending:
            event, budget, scfg, seed = cell
            key = run_key(event, budget, scfg.strategy, seed)
            try:
                doc, audit = _execute_cell(config, corpora, features,
                                           event, budget, scfg, seed)
            except Exception as exc:  # record the failure, keep the grid going
                manifest.mark(key, "failed", error=f"{type(exc).__name__}: {exc}")
                log(f"FAILED {key}: {exc}")
                continue
            finish(cell, doc, audit)
    else:
        if config_dict is None:
            raise ValueError("worker pools need the raw config dict for pickling")
        jobs = {}
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for cell in pending:
                event, budget, scfg, seed = cell
                args = (config_dict, config.events[event], event, budget,
                        asdict(scfg), seed)
                jobs[pool.submit(_cell_worker, args)] = cell
            for fut in as_completed(jobs):
                cell = jobs[fut]
                key = run_key(cell[0], cell[1], cell[2].strategy, cell[3])
                try:
                    doc, audit = fut.result()
                except Exception as exc:
                    manifest.mark(key, "failed", error=f"{type(exc).__name__}: {exc}")
                    log(f"FAILED {key}: {exc}")
                    continue
                finish(cell, doc, audit)

    failures = sum(1 for e in manifest.runs.values() if e.get("status") == "failed")
    if failures:
        log(f"{failures} run(s) failed; see {manifest.path}")
    return docs


def load_run_docs(out_dir: str | Path) -> list:
    """Read every manifest-reachable run record under out_dir."""
    out_dir = Path(out_dir)
    manifest = Manifest(out_dir)
    docs = []
    for key, entry in sorted(manifest.runs.items()):
        if entry.get("status") == "done" and entry.get("record"):
            docs.append(json.loads((out_dir / entry["record"]).read_text()))
    return docs


@dataclass
class AggregateCell:
    mean_f1: float
    std_f1: float
    mean_ece: float
    std_ece: float
    n: int


@dataclass
class AggregateTable:
    """(strategy x budget) grid of seed/event-averaged Macro-F1 and ECE."""

    strategies: list
    budgets: list
    cells: dict  # (strategy, budget) -> AggregateCell

    def best_f1(self, budget: int) -> str | None:
        have = [(s, self.cells[(s, budget)].mean_f1) for s in self.strategies
                if (s, budget) in self.cells]
        return max(have, key=lambda kv: kv[1])[0] if have else None

    def best_ece(self, budget: int) -> str | None:
        have = [(s, self.cells[(s, budget)].mean_ece) for s in self.strategies
                if (s, budget) in self.cells]
        return min(have, key=lambda kv: kv[1])[0] if have else None

    def to_dict(self) -> dict:
        return {
            "strategies": self.strategies,
            "budgets": self.budgets,
            "cells": {f"{s}|{b}": vars(c) for (s, b), c in self.cells.items()},
        }

    def render_text(self) -> str:
        """Aligned text table: an F1 block then an ECE block, budgets as
        columns, the best value per column starred."""
        name_w = max([len(s) for s in self.strategies] + [8])
        lines = []
        for block, attr, best in (("Macro-F1", "mean_f1", self.best_f1),
                                  ("ECE", "mean_ece", self.best_ece)):
            lines.append(block)
            header = " " * name_w + "".join(f"{b:>16d}" for b in self.budgets)
            lines.append(header)
            for s in self.strategies:
                row = f"{s:<{name_w}}"
                for b in self.budgets:
                    cell = self.cells.get((s, b))
                    if cell is None:
                        row += f"{'-':>16}"
                        continue
                    star = "*" if best(b) == s else " "
                    value = getattr(cell, attr)
                    std = cell.std_f1 if attr == "mean_f1" else cell.std_ece
                    row += f"{value:>9.3f}±{std:.3f}{star}"
                lines.append(row)
            lines.append("")
        return "\n".join(lines)


def _mean_std(values: list) -> tuple:
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def aggregate(docs: list) -> AggregateTable:
    """Mean/std of Macro-F1 and ECE per (strategy, budget) over events x seeds."""
    if not docs:
        raise ValueError("no run records to aggregate")
    strategies = sorted({d["strategy"] for d in docs})
    budgets = sorted({d["budget"] for d in docs})
    cells = {}
    for s in strategies:
        for b in budgets:
            sel = [d for d in docs if d["strategy"] == s and d["budget"] == b]
            if not sel:
                continue
            f1_mean, f1_std = _mean_std([d["test_metrics"]["macro_f1"] for d in sel])
            ece_mean, ece_std = _mean_std([d["test_metrics"]["ece"] for d in sel])
            cells[(s, b)] = AggregateCell(f1_mean, f1_std, ece_mean, ece_std, len(sel))
    return AggregateTable(strategies, budgets, cells)


def export_event_grid(docs: list, out_dir: str | Path) -> list:
    """Per-budget CSV grids (rows = strategies, columns = events, cells =
    seed-mean Macro-F1 to 3 decimals) plus per-budget co-training ablation
    tables when both co-training variants are present."""
    if not docs:
        raise ValueError("no run records to export")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    events = sorted({d["event"] for d in docs})
    budgets = sorted({d["budget"] for d in docs})
    strategies = sorted({d["strategy"] for d in docs})
    written = []

    def seed_mean(strategy, event, budget):
        vals = [d["test_metrics"]["macro_f1"] for d in docs
                if d["strategy"] == strategy and d["event"] == event
                and d["budget"] == budget]
        return round(float(np.mean(vals)), 3) if vals else None

    for budget in budgets:
        path = out_dir / f"event_grid_k{budget}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("strategy," + ",".join(events) + "\n")
            for s in strategies:
                row = [s]
                for e in events:
                    v = seed_mean(s, e, budget)
                    row.append("" if v is None else f"{v:.3f}")
                fh.write(",".join(row) + "\n")
        written.append(path)
        if "lg_cotrain" in strategies and "sg_cotrain" in strategies:
            apath = out_dir / f"ablation_k{budget}.csv"
            with open(apath, "w", encoding="utf-8") as fh:
                fh.write("event,lg_cotrain,sg_cotrain,delta\n")
                deltas = []
                for e in events:
                    lg = seed_mean("lg_cotrain", e, budget)
                    sg = seed_mean("sg_cotrain", e, budget)
                    if lg is None or sg is None:
                        continue
                    deltas.append(lg - sg)
                    fh.write(f"{e},{lg:.3f},{sg:.3f},{lg - sg:.3f}\n")
                if deltas:
                    fh.write(f"average,,,{float(np.mean(deltas)):.3f}\n")
            written.append(apath)
    return written
