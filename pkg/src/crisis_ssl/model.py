"""Compact probabilistic classifier trained by minibatch gradient descent.

The model is a softmax classifier with an optional single tanh hidden layer,
implemented directly in numpy so training is deterministic given a seed. The
loss is weighted soft-label cross-entropy; hard labels are one-hot rows. All
training strategies share this one core, which is what makes their R = 0
configurations bit-identical to plain supervised training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin

from .featurizer import fnv1a_64
from .metrics import macro_f1
from .validate import as_label_matrix, check_feature_matrix, check_sample_weight

PARAMS_FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Training hit a non-finite loss; carries the offending epoch/batch."""


def child_seed(seed: int, tag: str) -> int:
    """Stable derived seed for auxiliary RNG streams (hooks, twin models)."""
    return fnv1a_64(f"{seed}:{tag}".encode("utf-8")) % (2**32)


@dataclass
class ClassifierParams:
    """Weights of the classifier; hidden arrays are None for the linear model."""

    w_hidden: np.ndarray | None
    b_hidden: np.ndarray | None
    w_out: np.ndarray
    b_out: np.ndarray
    dropout_rate: float = 0.0

    @property
    def input_dim(self) -> int:
        return (self.w_hidden if self.w_hidden is not None else self.w_out).shape[0]

    @property
    def hidden_dim(self) -> int:
        return 0 if self.w_hidden is None else self.w_hidden.shape[1]

    @property
    def class_count(self) -> int:
        return self.w_out.shape[1]

    def arrays(self) -> dict:
        out = {"w_out": self.w_out, "b_out": self.b_out}
        if self.w_hidden is not None:
            out["w_hidden"] = self.w_hidden
            out["b_hidden"] = self.b_hidden
        return out

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(
            None if self.w_hidden is None else self.w_hidden.copy(),
            None if self.b_hidden is None else self.b_hidden.copy(),
            self.w_out.copy(),
            self.b_out.copy(),
            self.dropout_rate,
        )

    def equals(self, other: "ClassifierParams") -> bool:
        if (self.w_hidden is None) != (other.w_hidden is None):
            return False
        same_hidden = self.w_hidden is None or (
            np.array_equal(self.w_hidden, other.w_hidden)
            and np.array_equal(self.b_hidden, other.b_hidden)
        )
        return (same_hidden and np.array_equal(self.w_out, other.w_out)
                and np.array_equal(self.b_out, other.b_out))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    weight_decay: float = 0.0
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


def init_params(input_dim: int, hidden_dim: int, class_count: int, seed: int,
                dropout_rate: float = 0.0) -> ClassifierParams:
    """Seeded symmetric-uniform init scaled by fan-in; biases start at zero."""
    if input_dim < 1 or class_count < 1 or hidden_dim < 0:
        raise ValueError("bad dimensions")
    if not 0 <= dropout_rate < 1:
        raise ValueError("dropout_rate must be in [0, 1)")
    rng = np.random.default_rng(seed)
    if hidden_dim > 0:
        bound1 = 1.0 / np.sqrt(input_dim)
        w_hidden = rng.uniform(-bound1, bound1, size=(input_dim, hidden_dim))
        b_hidden = np.zeros(hidden_dim)
        bound2 = 1.0 / np.sqrt(hidden_dim)
        w_out = rng.uniform(-bound2, bound2, size=(hidden_dim, class_count))
    else:
        w_hidden = b_hidden = None
        bound = 1.0 / np.sqrt(input_dim)
        w_out = rng.uniform(-bound, bound, size=(input_dim, class_count))
    return ClassifierParams(w_hidden, b_hidden, w_out, np.zeros(class_count), dropout_rate)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    return (rng.random(shape) >= rate).astype(np.float64)


def _drop_input(X, mask: np.ndarray, rate: float):
    """Input-feature dropout for the linear model; masks only stored entries."""
    if sp.issparse(X):
        X = X.copy()
        X.data = X.data * mask / (1.0 - rate)
        return X
    return X * mask / (1.0 - rate)


def forward(params: ClassifierParams, X, dropout_rng=None, dropout_mask=None):
    """Logits and softmax probabilities; dropout only when a rng/mask is given.

    For the hidden-layer model dropout masks the hidden activations; for the
    linear model it masks the input features (stored entries only, which is
    equivalent for sparse rows).
    """
    X = check_feature_matrix(X, params.input_dim)
    use_dropout = params.dropout_rate > 0 and (dropout_rng is not None or dropout_mask is not None)
    if params.hidden_dim > 0:
        act = np.tanh(X @ params.w_hidden + params.b_hidden)
        if use_dropout:
            if dropout_mask is None:
                dropout_mask = _dropout_mask(dropout_rng, act.shape, params.dropout_rate)
            act = act * dropout_mask / (1.0 - params.dropout_rate)
        logits = act @ params.w_out + params.b_out
    else:
        if use_dropout:
            if dropout_mask is None:
                shape = X.data.shape if sp.issparse(X) else X.shape
                dropout_mask = _dropout_mask(dropout_rng, shape, params.dropout_rate)
            X = _drop_input(X, dropout_mask, params.dropout_rate)
        logits = X @ params.w_out + params.b_out
    logits = np.asarray(logits)
    probs = np.exp(_log_softmax(logits))
    return logits, probs


def predict_proba(params: ClassifierParams, X) -> np.ndarray:
    return forward(params, X)[1]


def loss_and_grad(params: ClassifierParams, X, Y, sample_weight, weight_decay=0.0,
                  dropout_rng=None, dropout_mask=None, validate=True):
    """Weighted soft-label cross-entropy plus L2 on weight matrices.

    Returns (objective, grads keyed like params.arrays(), data_loss). With an
    explicit dropout_mask the function is deterministic, which is what the
    finite-difference gradient checks rely on. validate=False skips input
    checks on the hot training path.
    """
    n = X.shape[0]
    if validate:
        X = check_feature_matrix(X, params.input_dim)
        w = check_sample_weight(sample_weight, n)
    else:
        w = sample_weight if sample_weight is not None else np.ones(n)
    wsum = w.sum()
    use_dropout = params.dropout_rate > 0 and (dropout_rng is not None or dropout_mask is not None)
    hidden = params.hidden_dim > 0

    act = mask = None
    if hidden:
        act = np.tanh(X @ params.w_hidden + params.b_hidden)
        layer_in = act
        if use_dropout:
            mask = dropout_mask if dropout_mask is not None else _dropout_mask(
                dropout_rng, act.shape, params.dropout_rate)
            layer_in = act * mask / (1.0 - params.dropout_rate)
        logits = layer_in @ params.w_out + params.b_out
    else:
        if use_dropout:
            shape = X.data.shape if sp.issparse(X) else X.shape
            mask = dropout_mask if dropout_mask is not None else _dropout_mask(
                dropout_rng, shape, params.dropout_rate)
            X = _drop_input(X, mask, params.dropout_rate)
        layer_in = X
        logits = np.asarray(X @ params.w_out) + params.b_out

    logp = _log_softmax(np.asarray(logits))
    data_loss = float(-(w[:, None] * Y * logp).sum() / wsum)
    reg = 0.5 * weight_decay * float(
        (params.w_out ** 2).sum()
        + ((params.w_hidden ** 2).sum() if hidden else 0.0))
    objective = data_loss + reg

    g = (np.exp(logp) - Y) * (w / wsum)[:, None]
    grads = {
        "w_out": np.asarray(layer_in.T @ g) + weight_decay * params.w_out,
        "b_out": g.sum(axis=0),
    }
    if hidden:
        d_layer = g @ params.w_out.T
        if use_dropout:
            d_layer = d_layer * mask / (1.0 - params.dropout_rate)
        d_pre = d_layer * (1.0 - act ** 2)
        grads["w_hidden"] = np.asarray(X.T @ d_pre) + weight_decay * params.w_hidden
        grads["b_hidden"] = d_pre.sum(axis=0)
    return objective, grads, data_loss


@dataclass
class TrainResult:
    params: ClassifierParams
    loss_history: list = field(default_factory=list)
    val_f1_history: list = field(default_factory=list)
    best_epoch: int = -1
    margin_history: np.ndarray | None = None


def train_model(params: ClassifierParams, X, Y, sample_weight=None,
                cfg: TrainConfig = TrainConfig(), *, val=None, margin_track=None,
                batch_hook=None) -> TrainResult:
    """Seeded-shuffle minibatch training; pure function of its arguments.

    val: optional (X_val, y_val, active_classes); when given, the returned
    params are the best-validation-Macro-F1 epoch snapshot.
    margin_track: optional (X_track, assigned) - records assigned-class
    margins on X_track after every epoch (used for AUM filtering).
    batch_hook: optional callable (rng, idx, Xb, Yb, wb, params) ->
    (Xb, Yb, wb) that can rewrite each batch against the live params (mixup
    and label guessing live here); it draws from its own derived generator so
    it never perturbs the main stream.
    """
    X = check_feature_matrix(X)
    n = X.shape[0]
    if n == 0:
        raise ValueError("need at least one training example")
    Y = as_label_matrix(Y, params.class_count)
    if Y.shape[0] != n:
        raise ValueError("X and Y length mismatch")
    w = check_sample_weight(sample_weight, n)

    params = params.copy()
    rng = np.random.default_rng(cfg.seed)
    hook_rng = np.random.default_rng(child_seed(cfg.seed, "batch_hook")) if batch_hook else None
    arrays = params.arrays()
    if cfg.optimizer == "adam":
        moment1 = {k: np.zeros_like(a) for k, a in arrays.items()}
        moment2 = {k: np.zeros_like(a) for k, a in arrays.items()}
        t = 0
    result = TrainResult(params)
    best_f1 = -np.inf
    best_params = None
    margins_per_epoch = []

    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        weight_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            Xb, Yb, wb = X[idx], Y[idx], w[idx]
            if batch_hook is not None:
                Xb, Yb, wb = batch_hook(hook_rng, idx, Xb, Yb, wb, params)
            drop_rng = rng if params.dropout_rate > 0 else None
            loss, grads, data_loss = loss_and_grad(
                params, Xb, Yb, wb, cfg.weight_decay, dropout_rng=drop_rng,
                validate=False)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss!r} at epoch {epoch}, batch {start // cfg.batch_size}")
            bw = float(np.sum(wb))
            loss_sum += data_loss * bw
            weight_sum += bw
            if cfg.optimizer == "adam":
                t += 1
                # bias correction folded into the step size; updates in place
                alpha = cfg.learning_rate * np.sqrt(1 - 0.999 ** t) / (1 - 0.9 ** t)
                for key in arrays:
                    g = grads[key]
                    m1, m2 = moment1[key], moment2[key]
                    m1 *= 0.9
                    m1 += 0.1 * g
                    m2 *= 0.999
                    np.multiply(g, g, out=g)
                    m2 += 0.001 * g
                    step = np.sqrt(m2)
                    step += 1e-8 * np.sqrt(1 - 0.999 ** t)
                    np.divide(m1, step, out=step)
                    step *= alpha
                    arrays[key] -= step
            else:
                for key in arrays:
                    arrays[key] -= cfg.learning_rate * grads[key]
        result.loss_history.append(loss_sum / weight_sum if weight_sum else 0.0)
        if val is not None:
            X_val, y_val, active = val
            val_probs = forward(params, X_val)[1]
            f1, _ = macro_f1(val_probs.argmax(axis=1), y_val, active, params.class_count)
            result.val_f1_history.append(f1)
            if f1 > best_f1:
                best_f1 = f1
                best_params = params.copy()
                result.best_epoch = epoch
        if margin_track is not None:
            X_t, assigned = margin_track
            logits_t = forward(params, X_t)[0]
            margins_per_epoch.append(margins(logits_t, assigned))

    if val is not None and best_params is not None:
        result.params = best_params
    if margin_track is not None:
        result.margin_history = np.asarray(margins_per_epoch)
    return result


def mc_dropout_predict(params: ClassifierParams, X, n_samples: int, seed: int):
    """Monte Carlo dropout: mean probabilities and per-class sample variance."""
    if params.dropout_rate <= 0:
        raise ValueError("mc_dropout_predict requires dropout_rate > 0")
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    draws = np.stack([forward(params, X, dropout_rng=rng)[1] for _ in range(n_samples)])
    return draws.mean(axis=0), draws.var(axis=0, ddof=1)


def margin(logits, assigned_class: int) -> float:
    """Assigned-class logit minus the largest other logit."""
    logits = np.asarray(logits, dtype=float)
    if logits.size < 2:
        raise ValueError("margin needs at least 2 classes")
    if not 0 <= assigned_class < logits.size:
        raise ValueError("assigned_class out of range")
    others = np.delete(logits, assigned_class)
    return float(logits[assigned_class] - others.max())


def margins(logits: np.ndarray, assigned: np.ndarray) -> np.ndarray:
    """Vectorized margin over rows of a logit matrix."""
    logits = np.asarray(logits, dtype=float)
    if logits.shape[1] < 2:
        raise ValueError("margin needs at least 2 classes")
    assigned = np.asarray(assigned, dtype=int)
    rows = np.arange(logits.shape[0])
    own = logits[rows, assigned]
    masked = logits.copy()
    masked[rows, assigned] = -np.inf
    return own - masked.max(axis=1)


def save_params(params: ClassifierParams, path: str | Path) -> None:
    payload = {
        "format_version": PARAMS_FORMAT_VERSION,
        "dropout_rate": params.dropout_rate,
        "w_out": params.w_out,
        "b_out": params.b_out,
    }
    if params.w_hidden is not None:
        payload["w_hidden"] = params.w_hidden
        payload["b_hidden"] = params.b_hidden
    np.savez(path, **payload)


def load_params(path: str | Path) -> ClassifierParams:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != PARAMS_FORMAT_VERSION:
            raise ValueError(f"unsupported params format version {version}")
        w_hidden = data["w_hidden"] if "w_hidden" in data else None
        b_hidden = data["b_hidden"] if "b_hidden" in data else None
        return ClassifierParams(w_hidden, b_hidden, data["w_out"], data["b_out"],
                                float(data["dropout_rate"]))


class CompactClassifier(ClassifierMixin, BaseEstimator):
    """sklearn-style front end over the functional training core.

    fit accepts hard integer labels or a (n, n_classes) soft-label matrix,
    plus optional per-example weights and a validation split for best-epoch
    selection, which is how the training strategies use the core directly.
    """

    def __init__(self, hidden_dim=64, dropout_rate=0.0, learning_rate=1e-3,
                 batch_size=32, epochs=30, weight_decay=0.0, optimizer="adam",
                 seed=0, n_classes=None):
        self.hidden_dim = hidden_dim
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.weight_decay = weight_decay
        self.optimizer = optimizer
        self.seed = seed
        self.n_classes = n_classes

    def _train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.epochs,
                           self.weight_decay, self.seed, self.optimizer)

    def fit(self, X, y, sample_weight=None, validation=None):
        X = check_feature_matrix(X)
        y = np.asarray(y)
        if self.n_classes is not None:
            n_classes = self.n_classes
        elif y.ndim == 2:
            n_classes = y.shape[1]
        else:
            n_classes = int(y.max()) + 1
        Y = as_label_matrix(y, n_classes)
        params = init_params(X.shape[1], self.hidden_dim, n_classes,
                             seed=self.seed, dropout_rate=self.dropout_rate)
        val = None
        if validation is not None:
            X_val, y_val = validation
            val = (check_feature_matrix(X_val, X.shape[1]),
                   np.asarray(y_val, dtype=int), np.arange(n_classes))
        result = train_model(params, X, Y, sample_weight, self._train_config(), val=val)
        self.params_ = result.params
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        self.loss_history_ = result.loss_history
        self.val_f1_history_ = result.val_f1_history
        self.best_epoch_ = result.best_epoch
        return self

    def decision_function(self, X) -> np.ndarray:
        return forward(self.params_, X)[0]

    def predict_proba(self, X) -> np.ndarray:
        return forward(self.params_, X)[1]

    def predict(self, X) -> np.ndarray:
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def mc_dropout_proba(self, X, n_samples=10, seed=0):
        return mc_dropout_predict(self.params_, X, n_samples, seed)
