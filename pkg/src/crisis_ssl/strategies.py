"""Training strategies: supervised baseline, self-training variants, MixUp
methods, and oracle-guided co-training/verification.

Every strategy is a procedure (RunContext, configs, oracle) -> trained
classifier + RunRecord, built on the same training core. Two invariants hold
across the roster: at rounds = 0 (or with an empty unlabeled pool) each
strategy degenerates bit-exactly to the supervised baseline at matched seeds,
and per round accepted + rejected + OOS always equals |D_U|.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .corpus import EventCorpus, LabelSchema, SplitPlan
from .featurizer import FeaturizerConfig, texts_to_csr
from .metrics import MetricsReport, evaluate_probs
from .model import (ClassifierParams, TrainConfig, TrainResult, child_seed,
                    forward, init_params, mc_dropout_predict, train_model)
from .oracle import PseudoLabel, annotate_teacher
from .validate import as_label_matrix

STRATEGY_IDS = (
    "supervised", "self_train", "ust", "mixmatch", "aum_st",
    "conf_st_mixup", "aum_st_mixup", "verify_match", "lg_cotrain", "sg_cotrain",
)


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.hidden_dim < 0:
            raise ValueError("hidden_dim must be >= 0")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass(frozen=True)
class StrategyConfig:
    """Knobs shared by the whole roster; fields a strategy ignores are still
    validated so a config sweep fails loudly everywhere."""

    strategy: str = "supervised"
    rounds: int = 3
    confidence_threshold: float = 0.9   # tau; gap threshold for conf_st_mixup
    mixup_alpha: float = 0.75           # Beta(alpha, alpha) for lambda
    sharpen_temperature: float = 0.5
    aum_keep_percentile: float = 50.0
    uncertainty_samples: int = 10
    low_conf_weight: float = 0.3        # w_low
    accept_fraction: float = 0.5        # UST per-class acceptance share
    augment_count: int = 2              # label-guessing passes (MixMatch K)
    augment_rate: float = 0.1           # feature-dropout rate of the augmenter

    def __post_init__(self):
        if self.strategy not in STRATEGY_IDS:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if not 0 < self.confidence_threshold <= 1:
            raise ValueError("confidence_threshold must be in (0, 1]")
        if self.mixup_alpha <= 0:
            raise ValueError("mixup_alpha must be > 0")
        if not 0 < self.sharpen_temperature <= 1:
            raise ValueError("sharpen_temperature must be in (0, 1]")
        if not 0 < self.aum_keep_percentile <= 100:
            raise ValueError("aum_keep_percentile must be in (0, 100]")
        if self.uncertainty_samples < 2:
            raise ValueError("uncertainty_samples must be >= 2")
        if not 0 <= self.low_conf_weight <= 1:
            raise ValueError("low_conf_weight must be in [0, 1]")
        if not 0 <= self.accept_fraction <= 1:
            raise ValueError("accept_fraction must be in [0, 1]")
        if self.augment_count < 1:
            raise ValueError("augment_count must be >= 1")
        if not 0 <= self.augment_rate < 1:
            raise ValueError("augment_rate must be in [0, 1)")


@dataclass
class RoundStats:
    round: int
    accepted: int
    rejected: int
    oos: int
    note: str = ""


@dataclass
class AumRecord:
    example_id: str
    margins: list
    aum: float


@dataclass
class RunRecord:
    strategy: str
    config: dict
    seed: int
    rounds: list
    val_metrics: MetricsReport
    test_metrics: MetricsReport
    wall_time: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "config": self.config,
            "seed": self.seed,
            "rounds": [vars(r) for r in self.rounds],
            "val_metrics": self.val_metrics.to_dict(),
            "test_metrics": self.test_metrics.to_dict(),
            "wall_time": self.wall_time,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            d["strategy"], d["config"], d["seed"],
            [RoundStats(**r) for r in d["rounds"]],
            MetricsReport.from_dict(d["val_metrics"]),
            MetricsReport.from_dict(d["test_metrics"]),
            d["wall_time"], d.get("notes", []),
        )


@dataclass
class StrategyResult:
    params: ClassifierParams
    record: RunRecord
    extras: dict = field(default_factory=dict)


@dataclass
class RunContext:
    """Featurized corpus plus the labeled/unlabeled partition for one run."""

    schema: LabelSchema
    active_classes: np.ndarray
    X_train: sp.csr_matrix
    y_train: np.ndarray
    train_ids: list
    train_texts: list
    X_val: sp.csr_matrix
    y_val: np.ndarray
    X_test: sp.csr_matrix
    y_test: np.ndarray
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.schema.size

    @property
    def input_dim(self) -> int:
        return self.X_train.shape[1]


def build_context(corpus: EventCorpus, plan: SplitPlan, feat_config: FeaturizerConfig,
                  features=None) -> RunContext:
    """Assemble a RunContext; `features` lets callers reuse featurized splits."""
    for name, split in (("val", corpus.val), ("test", corpus.test)):
        if not split:
            raise ValueError(f"corpus {corpus.event_name!r} has no {name} split")
        if any(ex.gold_label is None for ex in split):
            raise ValueError(f"{name} split must be fully labeled for evaluation")
    if features is None:
        features = tuple(
            texts_to_csr([ex.text for ex in split], feat_config)
            for split in (corpus.train, corpus.val, corpus.test))
    X_train, X_val, X_test = features
    labeled = np.array([i for i, ex in enumerate(corpus.train) if ex.id in plan.labeled_ids],
                       dtype=int)
    unlabeled = np.array([i for i, ex in enumerate(corpus.train) if ex.id in plan.unlabeled_ids],
                         dtype=int)
    return RunContext(
        schema=corpus.schema,
        active_classes=corpus.active_classes,
        X_train=X_train,
        y_train=np.array([ex.gold_label for ex in corpus.train], dtype=int),
        train_ids=[ex.id for ex in corpus.train],
        train_texts=[ex.text for ex in corpus.train],
        X_val=X_val,
        y_val=np.array([ex.gold_label for ex in corpus.val], dtype=int),
        X_test=X_test,
        y_test=np.array([ex.gold_label for ex in corpus.test], dtype=int),
        labeled_idx=labeled,
        unlabeled_idx=unlabeled,
    )


# ---------------------------------------------------------------------------
# small reusable operations


def mixup(a, b, lam: float):
    """Convex combination of two (features, label distribution) pairs."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    xa, ya = a
    xb, yb = b
    if xa.shape != xb.shape:
        raise ValueError("feature dim mismatch")
    ya = np.asarray(ya, dtype=float)
    yb = np.asarray(yb, dtype=float)
    if ya.shape != yb.shape:
        raise ValueError("label dim mismatch")
    x = lam * xa + (1.0 - lam) * xb
    y = lam * ya + (1.0 - lam) * yb
    total = y.sum()
    if total > 0:
        y = y / total
    return x, y


def confidence_gap(probs) -> float:
    """Top-1 minus top-2 probability of a distribution."""
    p = np.asarray(probs, dtype=float)
    if p.size < 2:
        raise ValueError("need at least 2 classes")
    top2 = np.partition(p, -2)[-2:]
    return float(top2[1] - top2[0])


def _gaps(probs: np.ndarray) -> np.ndarray:
    top2 = np.partition(probs, -2, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def sharpen(probs, temperature: float) -> np.ndarray:
    """Lower the entropy of a distribution: p_i^(1/T), renormalized."""
    if not 0 < temperature <= 1:
        raise ValueError("temperature must be in (0, 1]")
    p = np.asarray(probs, dtype=float)
    if temperature == 1.0:
        return p.copy()
    powed = p ** (1.0 / temperature)
    return powed / powed.sum(axis=-1, keepdims=True)


def _mix_rows(Xa, Xb, lam: np.ndarray):
    """Row-wise convex combination; keeps sparse inputs sparse."""
    col = lam[:, None]
    if sp.issparse(Xa):
        return (Xa.multiply(col) + Xb.multiply(1.0 - col)).tocsr()
    return col * Xa + (1.0 - col) * Xb


def _feature_dropout(X, rate: float, rng: np.random.Generator):
    """Augmentation noise: randomly zero stored features, rescaled."""
    if rate <= 0:
        return X
    if sp.issparse(X):
        X = X.copy()
        keep = (rng.random(X.data.shape) >= rate).astype(np.float64)
        X.data = X.data * keep / (1.0 - rate)
        return X
    keep = (rng.random(X.shape) >= rate).astype(np.float64)
    return X * keep / (1.0 - rate)


# ---------------------------------------------------------------------------
# shared plumbing


def _onehot(y, n_classes: int) -> np.ndarray:
    return as_label_matrix(np.asarray(y, dtype=int), n_classes)


def _labeled_pool(ctx: RunContext):
    idx = ctx.labeled_idx
    return (ctx.X_train[idx], _onehot(ctx.y_train[idx], ctx.n_classes),
            np.ones(len(idx)))


def _fit(ctx: RunContext, X, Y, w, mcfg: ModelConfig, tcfg: TrainConfig,
         seed=None, use_val=True, margin_track=None, batch_hook=None) -> TrainResult:
    cfg = tcfg if seed is None else replace(tcfg, seed=seed)
    params0 = init_params(ctx.input_dim, mcfg.hidden_dim, ctx.n_classes,
                          seed=cfg.seed, dropout_rate=mcfg.dropout_rate)
    val = (ctx.X_val, ctx.y_val, ctx.active_classes) if use_val else None
    return train_model(params0, X, Y, w, cfg, val=val,
                       margin_track=margin_track, batch_hook=batch_hook)


def _fit_supervised(ctx, mcfg, tcfg, seed=None) -> TrainResult:
    Xl, Yl, wl = _labeled_pool(ctx)
    return _fit(ctx, Xl, Yl, wl, mcfg, tcfg, seed=seed)


def _pl_arrays(pls: list):
    labels = np.array([-1 if p.out_of_schema else p.label for p in pls], dtype=int)
    conf = np.array([p.confidence for p in pls])
    oos = np.array([p.out_of_schema for p in pls], dtype=bool)
    return labels, conf, oos


def _audit_rows(ctx, idx, pseudo, accepted, round_no):
    gold = ctx.y_train[idx]
    return [(ctx.train_ids[i], int(g), int(p), bool(a), round_no)
            for i, g, p, a in zip(idx, gold, pseudo, accepted)]


def write_audit_tsv(audit_rows, path: str | Path) -> None:
    """Error-analysis dump: id, gold, pseudo, accepted flag, round."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\tgold\tpseudo\taccepted\tround\n")
        for ex_id, gold, pseudo, accepted, rnd in audit_rows:
            fh.write(f"{ex_id}\t{gold}\t{pseudo}\t{int(accepted)}\t{rnd}\n")


def _empty_pool_result(ctx, mcfg, tcfg, note):
    res = _fit_supervised(ctx, mcfg, tcfg)
    return res.params, [], [note], {}


def _best_of(res_a: TrainResult, res_b: TrainResult):
    """Pick the model with the better validation Macro-F1 (ties go to A)."""
    f1_a = max(res_a.val_f1_history, default=-1.0)
    f1_b = max(res_b.val_f1_history, default=-1.0)
    return (res_a, "a") if f1_a >= f1_b else (res_b, "b")


# ---------------------------------------------------------------------------
# strategy implementations; each returns (params, rounds, notes, extras)


def _supervised_impl(ctx, scfg, mcfg, tcfg, oracle=None):
    res = _fit_supervised(ctx, mcfg, tcfg)
    return res.params, [], [], {"train_result": res}


def _self_train_impl(ctx, scfg, mcfg, tcfg, oracle=None):
    U = ctx.unlabeled_idx
    if scfg.rounds and len(U) == 0:
        return _empty_pool_result(ctx, mcfg, tcfg, "unlabeled pool empty; supervised only")
    Xl, Yl, wl = _labeled_pool(ctx)
    pool = (Xl, Yl, wl)
    rounds, audit = [], []
    for r in range(1, scfg.rounds + 1):
        teacher = _fit(ctx, *pool, mcfg, tcfg)
        pls = annotate_teacher(teacher.params, ctx.X_train[U],
                               [ctx.train_ids[i] for i in U])
        labels, conf, _ = _pl_arrays(pls)
        accept = conf >= scfg.confidence_threshold
        stats = RoundStats(r, int(accept.sum()), int((~accept).sum()), 0)
        rounds.append(stats)
        audit += _audit_rows(ctx, U, labels, accept, r)
        if not accept.any():
            stats.note = "no acceptances; stopped early"
            break
        keep = U[accept]
        pool = (sp.vstack([Xl, ctx.X_train[keep]], format="csr"),
                np.vstack([Yl, _onehot(labels[accept], ctx.n_classes)]),
                np.concatenate([wl, np.ones(len(keep))]))
    final = _fit(ctx, *pool, mcfg, tcfg)
    return final.params, rounds, [], {"audit": audit}


def _ust_impl(ctx, scfg, mcfg, tcfg, oracle=None):
    if mcfg.dropout_rate <= 0:
        raise ValueError("ust needs dropout_rate > 0 for uncertainty estimates")
    U = ctx.unlabeled_idx
    if scfg.rounds and len(U) == 0:
        return _empty_pool_result(ctx, mcfg, tcfg, "unlabeled pool empty; supervised only")
    Xl, Yl, wl = _labeled_pool(ctx)
    pool = (Xl, Yl, wl)
    rounds, audit = [], []
    for r in range(1, scfg.rounds + 1):
        teacher = _fit(ctx, *pool, mcfg, tcfg)
        mean_p, var_p = mc_dropout_predict(
            teacher.params, ctx.X_train[U], scfg.uncertainty_samples,
            seed=child_seed(tcfg.seed, f"ust-round-{r}"))
        pred = mean_p.argmax(axis=1)
        conf = mean_p.max(axis=1)
        u = var_p[np.arange(len(U)), pred]
        accept = np.zeros(len(U), dtype=bool)
        # lowest predicted-class variance first; ties fall back to confidence
        order = np.lexsort((np.arange(len(U)), -conf, u))
        for c in range(ctx.n_classes):
            cand = order[pred[order] == c]
            accept[cand[:int(scfg.accept_fraction * len(cand))]] = True
        stats = RoundStats(r, int(accept.sum()), int((~accept).sum()), 0)
        rounds.append(stats)
        audit += _audit_rows(ctx, U, pred, accept, r)
        if not accept.any():
            stats.note = "no acceptances; stopped early"
            break
        u_max = u.max()
        w_acc = 1.0 - (u[accept] / u_max if u_max > 0 else np.zeros(accept.sum()))
        keep = U[accept]
        pool = (sp.vstack([Xl, ctx.X_train[keep]], format="csr"),
                np.vstack([Yl, _onehot(pred[accept], ctx.n_classes)]),
                np.concatenate([wl, w_acc]))
    final = _fit(ctx, *pool, mcfg, tcfg)
    return final.params, rounds, [], {"audit": audit}


def _mixmatch_hook(scfg, Xl, Yl):
    """Per-batch MixMatch step, driven by unlabeled batches.

    The incoming batch rows are unlabeled examples; the hook guesses their
    soft labels with the live model via augmented forward passes, pairs them
    with a sampled labeled batch, and mixes the combined batch with a shuffle
    of itself (lambda pinned above 0.5 so every row stays closest to its own
    example). Labeled rows carry weight 1, unlabeled rows w_low.
    """
    n_lab = Xl.shape[0]

    def hook(rng, idx, Xu, _Yb, _wb, params):
        nb = Xu.shape[0]
        j = rng.integers(0, n_lab, size=nb)
        guesses = [
            forward(params, _feature_dropout(Xu, scfg.augment_rate, rng))[1]
            for _ in range(scfg.augment_count)
        ]
        q = sharpen(np.mean(guesses, axis=0), scfg.sharpen_temperature)
        X_all = sp.vstack([Xl[j], Xu], format="csr") if sp.issparse(Xu) else np.vstack([Xl[j], Xu])
        Y_all = np.vstack([Yl[j], q])
        w_all = np.concatenate([np.ones(nb), np.full(nb, scfg.low_conf_weight)])
        partner = rng.permutation(2 * nb)
        lam = rng.beta(scfg.mixup_alpha, scfg.mixup_alpha, size=2 * nb)
        lam = np.maximum(lam, 1.0 - lam)
        X_mix = _mix_rows(X_all, X_all[partner], lam)
        Y_mix = lam[:, None] * Y_all + (1.0 - lam)[:, None] * Y_all[partner]
        return X_mix, Y_mix, w_all

    return hook


def _mixmatch_impl(ctx, scfg, mcfg, tcfg, oracle=None):
    U = ctx.unlabeled_idx
    if scfg.rounds == 0:
        res = _fit_supervised(ctx, mcfg, tcfg)
        return res.params, [], ["rounds=0; supervised only"], {}
    if len(U) == 0:
        return _empty_pool_result(ctx, mcfg, tcfg, "unlabeled pool empty; supervised only")
    Xl, Yl, _ = _labeled_pool(ctx)
    X_U = ctx.X_train[U]
    # epochs sweep the unlabeled pool; the placeholder uniform labels are
    # replaced wholesale by the hook before any gradient is taken
    Y_dummy = np.full((len(U), ctx.n_classes), 1.0 / ctx.n_classes)
    hook = _mixmatch_hook(scfg, Xl, Yl)
    res = _fit(ctx, X_U, Y_dummy, np.ones(len(U)), mcfg, tcfg, batch_hook=hook)
    # every unlabeled example enters soft-labeled (none are filtered out)
    rounds = [RoundStats(1, len(U), 0, 0, "soft labels, no filtering")]
    return res.params, rounds, [], {}


def _pair_mix_hook(X_pool, Y_pool, pool_of, partner_pools, alpha):
    """Mix each batch row with a random partner from the allowed pools.

    pool_of: pool id per training-set row; partner_pools: pool id -> candidate
    row indices (concatenated across allowed pools). Rows whose pool id has no
    partner entry, or whose candidate set is empty, pass through unchanged
    (lambda pinned to 1). Weights are untouched: a row keeps the weight of the
    pool it came from.
    """

    def hook(rng, idx, Xb, Yb, wb, params):
        nb = Xb.shape[0]
        partner_global = np.full(nb, -1, dtype=int)
        for pool_id in sorted(partner_pools):
            rows = np.flatnonzero(pool_of[idx] == pool_id)
            cands = partner_pools[pool_id]
            if len(rows) == 0 or len(cands) == 0:
                continue
            partner_global[rows] = cands[rng.integers(0, len(cands), size=len(rows))]
        lam = rng.beta(alpha, alpha, size=nb)
        lam = np.maximum(lam, 1.0 - lam)
        active = partner_global >= 0
        if not active.any():
            return Xb, Yb, wb
        lam = np.where(active, lam, 1.0)
        safe = np.where(active, partner_global, 0)
        X_mix = _mix_rows(Xb, X_pool[safe], lam)
        Y_mix = lam[:, None] * Yb + (1.0 - lam)[:, None] * Y_pool[safe]
        return X_mix, Y_mix, wb

    return hook


def _aum_st_impl(ctx, scfg, mcfg, tcfg, oracle=None, use_mixup=False):
    if tcfg.epochs < 2:
        raise ValueError("AUM needs at least 2 training epochs")
    U = ctx.unlabeled_idx
    if scfg.rounds == 0:
        res = _fit_supervised(ctx, mcfg, tcfg)
        return res.params, [], ["rounds=0; supervised only"], {}
    if len(U) == 0:
        return _empty_pool_result(ctx, mcfg, tcfg, "unlabeled pool empty; supervised only")
    Xl, Yl, wl = _labeled_pool(ctx)
    X_U = ctx.X_train[U]
    teacher = _fit(ctx, Xl, Yl, wl, mcfg, tcfg)
    rounds, audit = [], []
    final = teacher
    last_probe = last_pseudo = None
    for r in range(1, scfg.rounds + 1):
        pseudo = forward(teacher.params, X_U)[1].argmax(axis=1)
        probe = _fit(ctx, X_U, _onehot(pseudo, ctx.n_classes), np.ones(len(U)),
                     mcfg, tcfg, seed=child_seed(tcfg.seed, f"aum-probe-{r}"),
                     use_val=False, margin_track=(X_U, pseudo))
        last_probe, last_pseudo = probe, pseudo
        aum = probe.margin_history.mean(axis=0)
        n_keep = int(len(U) * scfg.aum_keep_percentile / 100.0)
        order = np.lexsort((np.arange(len(U)), -aum))
        kept_rows = np.sort(order[:n_keep])
        accept = np.zeros(len(U), dtype=bool)
        accept[kept_rows] = True
        rounds.append(RoundStats(r, int(n_keep), int(len(U) - n_keep), 0))
        audit += _audit_rows(ctx, U, pseudo, accept, r)
        X_pool = sp.vstack([Xl, X_U[kept_rows]], format="csr")
        Y_pool = np.vstack([Yl, _onehot(pseudo[kept_rows], ctx.n_classes)])
        w_pool = np.concatenate([wl, np.ones(n_keep)])
        hook = None
        if use_mixup and n_keep > 0:
            n_lab = len(ctx.labeled_idx)
            pool_of = np.concatenate([np.zeros(n_lab, dtype=int),
                                      np.ones(n_keep, dtype=int)])
            partner_pools = {0: np.arange(n_lab, n_lab + n_keep),
                             1: np.arange(n_lab)}
            hook = _pair_mix_hook(X_pool, Y_pool, pool_of, partner_pools,
                                  scfg.mixup_alpha)
        final = _fit(ctx, X_pool, Y_pool, w_pool, mcfg, tcfg, batch_hook=hook)
        teacher = final
    aum_records = [
        AumRecord(ctx.train_ids[U[i]], last_probe.margin_history[:, i].tolist(),
                  float(last_probe.margin_history[:, i].mean()))
        for i in range(len(U))
    ]
    return final.params, rounds, [], {"aum_records": aum_records, "audit": audit,
                                      "pseudo": last_pseudo}


def _aum_st_mixup_impl(ctx, scfg, mcfg, tcfg, oracle=None):
    return _aum_st_impl(ctx, scfg, mcfg, tcfg, oracle, use_mixup=True)


def _conf_st_mixup_impl(ctx, scfg, mcfg, tcfg, oracle=None):
    U = ctx.unlabeled_idx
    if scfg.rounds == 0:
        res = _fit_supervised(ctx, mcfg, tcfg)
        return res.params, [], ["rounds=0; supervised only"], {}
    if len(U) == 0:
        return _empty_pool_result(ctx, mcfg, tcfg, "unlabeled pool empty; supervised only")
    Xl, Yl, wl = _labeled_pool(ctx)
    X_U = ctx.X_train[U]
    model = _fit(ctx, Xl, Yl, wl, mcfg, tcfg)
    rounds, audit = [], []
    for r in range(1, scfg.rounds + 1):
        probs = forward(model.params, X_U)[1]
        pseudo = probs.argmax(axis=1)
        high = _gaps(probs) >= scfg.confidence_threshold
        rounds.append(RoundStats(r, int(high.sum()), int((~high).sum()), 0,
                                 "rejected = low-gap pool, kept at w_low"))
        audit += _audit_rows(ctx, U, pseudo, high, r)
        hi_rows = np.flatnonzero(high)
        lo_rows = np.flatnonzero(~high)
        n_lab, n_hi, n_lo = len(ctx.labeled_idx), len(hi_rows), len(lo_rows)
        X_pool = sp.vstack([Xl, X_U[hi_rows], X_U[lo_rows]], format="csr")
        Y_pool = np.vstack([Yl, _onehot(pseudo[hi_rows], ctx.n_classes),
                            _onehot(pseudo[lo_rows], ctx.n_classes)])
        w_pool = np.concatenate([wl, np.ones(n_hi),
                                 np.full(n_lo, scfg.low_conf_weight)])
        pool_of = np.concatenate([np.zeros(n_lab, dtype=int),
                                  np.full(n_hi, 1, dtype=int),
                                  np.full(n_lo, 2, dtype=int)])
        lab_rows = np.arange(n_lab)
        hi_pool = np.arange(n_lab, n_lab + n_hi)
        lo_pool = np.arange(n_lab + n_hi, n_lab + n_hi + n_lo)
        partner_pools = {0: np.concatenate([hi_pool, lo_pool]),
                         1: np.concatenate([lab_rows, lo_pool]),
                         2: np.concatenate([lab_rows, hi_pool])}
        hook = _pair_mix_hook(X_pool, Y_pool, pool_of, partner_pools,
                              scfg.mixup_alpha)
        model = _fit(ctx, X_pool, Y_pool, w_pool, mcfg, tcfg, batch_hook=hook)
    return model.params, rounds, [], {"audit": audit}


def _verify_match_impl(ctx, scfg, mcfg, tcfg, oracle=None):
    if oracle is None:
        raise ValueError("verify_match needs an oracle")
    U = ctx.unlabeled_idx
    if len(U) == 0:
        return _empty_pool_result(ctx, mcfg, tcfg, "unlabeled pool empty; supervised only")
    pls = oracle(ctx, U)
    labels, _, oos = _pl_arrays(pls)
    valid = ~oos
    model = _fit_supervised(ctx, mcfg, tcfg)
    if not valid.any():
        warnings.warn("all oracle pseudo-labels out of schema; supervised fallback")
        return model.params, [], ["all pseudo-labels OOS; supervised fallback"], {}
    V = U[valid]
    llm_y = labels[valid]
    X_V = ctx.X_train[V]
    Xl, Yl, wl = _labeled_pool(ctx)
    n_lab = len(ctx.labeled_idx)
    n_oos = int(oos.sum())
    rounds, audit = [], []
    verified = np.zeros(len(V), dtype=bool)
    for r in range(1, scfg.rounds + 1):
        # dynamic threshold: mean top-prob over correctly classified D_L
        probs_l = forward(model.params, Xl)[1]
        correct = probs_l.argmax(axis=1) == ctx.y_train[ctx.labeled_idx]
        if correct.any():
            threshold = float(probs_l.max(axis=1)[correct].mean())
            probs_v = forward(model.params, X_V)[1]
            verified = probs_v[np.arange(len(V)), llm_y] >= threshold
        else:
            verified = np.zeros(len(V), dtype=bool)
        rounds.append(RoundStats(r, int(verified.sum()),
                                 int((~verified).sum()), n_oos,
                                 "rejected = unverified, kept via mixup at w_low"))
        ver_rows = np.flatnonzero(verified)
        unv_rows = np.flatnonzero(~verified)
        if scfg.low_conf_weight == 0:
            unv_rows = unv_rows[:0]  # weight-0 rows change nothing; drop them
        n_ver, n_unv = len(ver_rows), len(unv_rows)
        X_pool = sp.vstack([Xl, X_V[ver_rows], X_V[unv_rows]], format="csr")
        Y_pool = np.vstack([Yl, _onehot(llm_y[ver_rows], ctx.n_classes),
                            _onehot(llm_y[unv_rows], ctx.n_classes)])
        w_pool = np.concatenate([wl, np.ones(n_ver),
                                 np.full(n_unv, scfg.low_conf_weight)])
        # only unverified rows get mixed, each against a random labeled row
        pool_of = np.concatenate([np.zeros(n_lab + n_ver, dtype=int),
                                  np.ones(n_unv, dtype=int)])
        partner_pools = {1: np.arange(n_lab)}
        hook = _pair_mix_hook(X_pool, Y_pool, pool_of, partner_pools,
                              scfg.mixup_alpha)
        model = _fit(ctx, X_pool, Y_pool, w_pool, mcfg, tcfg, batch_hook=hook)
    audit += _audit_rows(ctx, V, llm_y, verified, len(rounds))
    return model.params, rounds, [], {"audit": audit, "verified": verified,
                                      "llm_labels": llm_y, "valid_idx": V}


def _cotrain(ctx, scfg, mcfg, tcfg, pls):
    """Shared co-training loop: agreement-gated cross-feeding of oracle labels.

    Examples where a model agrees with the oracle enter the twin's pool at
    full weight; everything else stays in the pool with the oracle label at
    w_low, so no pseudo-labeled example is ever discarded.
    """
    U = ctx.unlabeled_idx
    labels, _, oos = _pl_arrays(pls)
    valid = ~oos
    seed_b = child_seed(tcfg.seed, "model_b")
    if not valid.any():
        warnings.warn("all oracle pseudo-labels out of schema; supervised fallback")
        res = _fit_supervised(ctx, mcfg, tcfg)
        return (res.params, [], ["all pseudo-labels OOS; supervised fallback"], {})
    V = U[valid]
    llm_y = labels[valid]
    X_V = ctx.X_train[V]
    Y_V = _onehot(llm_y, ctx.n_classes)
    Xl, Yl, wl = _labeled_pool(ctx)
    n_oos = int(oos.sum())
    res_a = _fit_supervised(ctx, mcfg, tcfg)
    res_b = _fit_supervised(ctx, mcfg, tcfg, seed=seed_b)
    rounds, audit = [], []
    agree_a = agree_b = np.zeros(len(V), dtype=bool)
    for r in range(1, scfg.rounds + 1):
        agree_a = forward(res_a.params, X_V)[1].argmax(axis=1) == llm_y
        agree_b = forward(res_b.params, X_V)[1].argmax(axis=1) == llm_y

        def pool_for(agree):
            w = np.where(agree, 1.0, scfg.low_conf_weight)
            return (sp.vstack([Xl, X_V], format="csr"),
                    np.vstack([Yl, Y_V]),
                    np.concatenate([wl, w]))

        pool_a = pool_for(agree_b)  # B feeds A
        pool_b = pool_for(agree_a)  # A feeds B
        union = agree_a | agree_b
        rounds.append(RoundStats(r, int(union.sum()),
                                 int((~union).sum()), n_oos,
                                 f"a_agrees={int(agree_a.sum())} b_agrees={int(agree_b.sum())};"
                                 " rejected kept at w_low"))
        res_a = _fit(ctx, *pool_a, mcfg, tcfg)
        res_b = _fit(ctx, *pool_b, mcfg, tcfg, seed=seed_b)
    audit += _audit_rows(ctx, V, llm_y, agree_a | agree_b, len(rounds))
    winner, which = _best_of(res_a, res_b)
    extras = {
        "audit": audit,
        "winner": which,
        "params_a": res_a.params,
        "params_b": res_b.params,
        "val_f1_a": max(res_a.val_f1_history, default=-1.0),
        "val_f1_b": max(res_b.val_f1_history, default=-1.0),
    }
    return winner.params, rounds, [], extras


def _lg_cotrain_impl(ctx, scfg, mcfg, tcfg, oracle=None):
    if oracle is None:
        raise ValueError("lg_cotrain needs an oracle")
    U = ctx.unlabeled_idx
    if len(U) == 0:
        return _empty_pool_result(ctx, mcfg, tcfg, "unlabeled pool empty; supervised only")
    return _cotrain(ctx, scfg, mcfg, tcfg, oracle(ctx, U))


def _sg_cotrain_impl(ctx, scfg, mcfg, tcfg, oracle=None):
    """Ablation twin of lg_cotrain: the oracle is a teacher trained on D_L."""
    U = ctx.unlabeled_idx
    if len(U) == 0:
        return _empty_pool_result(ctx, mcfg, tcfg, "unlabeled pool empty; supervised only")
    teacher = _fit_supervised(ctx, mcfg, tcfg, seed=child_seed(tcfg.seed, "teacher"))
    pls = annotate_teacher(teacher.params, ctx.X_train[U],
                           [ctx.train_ids[i] for i in U])
    return _cotrain(ctx, scfg, mcfg, tcfg, pls)


_IMPLS = {
    "supervised": _supervised_impl,
    "self_train": _self_train_impl,
    "ust": _ust_impl,
    "mixmatch": _mixmatch_impl,
    "aum_st": _aum_st_impl,
    "conf_st_mixup": _conf_st_mixup_impl,
    "aum_st_mixup": _aum_st_mixup_impl,
    "verify_match": _verify_match_impl,
    "lg_cotrain": _lg_cotrain_impl,
    "sg_cotrain": _sg_cotrain_impl,
}


def run_strategy(ctx: RunContext, scfg: StrategyConfig, mcfg: ModelConfig,
                 tcfg: TrainConfig, oracle=None) -> StrategyResult:
    """Execute one strategy run and evaluate it on the val and test splits."""
    impl = _IMPLS[scfg.strategy]
    start = time.perf_counter()
    params, rounds, notes, extras = impl(ctx, scfg, mcfg, tcfg, oracle)
    wall = time.perf_counter() - start
    val_report = evaluate_probs(forward(params, ctx.X_val)[1], ctx.y_val,
                                ctx.active_classes)
    test_report = evaluate_probs(forward(params, ctx.X_test)[1], ctx.y_test,
                                 ctx.active_classes)
    record = RunRecord(scfg.strategy, asdict(scfg), tcfg.seed, rounds,
                       val_report, test_report, wall, notes)
    return StrategyResult(params, record, extras)


def _make_runner(strategy_id):
    def runner(ctx, scfg, mcfg, tcfg, oracle=None):
        if scfg.strategy != strategy_id:
            scfg = replace(scfg, strategy=strategy_id)
        return run_strategy(ctx, scfg, mcfg, tcfg, oracle)
    runner.__name__ = f"run_{strategy_id}"
    runner.__doc__ = f"Run the {strategy_id} strategy; see run_strategy."
    return runner


run_supervised = _make_runner("supervised")
run_self_train = _make_runner("self_train")
run_ust = _make_runner("ust")
run_mixmatch = _make_runner("mixmatch")
run_aum_st = _make_runner("aum_st")
run_conf_st_mixup = _make_runner("conf_st_mixup")
run_aum_st_mixup = _make_runner("aum_st_mixup")
run_verify_match = _make_runner("verify_match")
run_lg_cotrain = _make_runner("lg_cotrain")
run_sg_cotrain = _make_runner("sg_cotrain")
