"""Input validation helpers shared by the model, metrics, and strategies."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def check_feature_matrix(X, input_dim: int | None = None):
    """Accept a CSR matrix or 2-d float array; reject non-finite entries."""
    if sp.issparse(X):
        X = X.tocsr()
        if not np.all(np.isfinite(X.data)):
            raise ValueError("feature matrix contains non-finite entries")
    else:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("feature matrix must be 2-dimensional")
        if not np.all(np.isfinite(X)):
            raise ValueError("feature matrix contains non-finite entries")
    if input_dim is not None and X.shape[1] != input_dim:
        raise ValueError(f"feature dim {X.shape[1]} != expected {input_dim}")
    return X


def as_label_matrix(y, n_classes: int) -> np.ndarray:
    """Coerce hard labels (ints) or soft labels (rows on the simplex) to (n, C)."""
    y = np.asarray(y)
    if y.ndim == 1:
        y = y.astype(int)
        if y.size and (y.min() < 0 or y.max() >= n_classes):
            raise ValueError("label index out of range")
        out = np.zeros((y.size, n_classes))
        out[np.arange(y.size), y] = 1.0
        return out
    if y.ndim != 2 or y.shape[1] != n_classes:
        raise ValueError(f"soft labels must have shape (n, {n_classes})")
    out = np.asarray(y, dtype=np.float64)
    if out.size:
        if out.min() < 0:
            raise ValueError("soft labels must be non-negative")
        if np.abs(out.sum(axis=1) - 1.0).max() > 1e-6:
            raise ValueError("soft label rows must sum to 1 within 1e-6")
    return out


def check_sample_weight(w, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError("sample_weight length mismatch")
    if w.size and w.min() < 0:
        raise ValueError("sample weights must be >= 0")
    if w.sum() <= 0:
        raise ValueError("sample weights must not all be zero")
    return w
