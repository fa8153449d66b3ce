"""Image credibility analysis: thin wrappers over the native core."""

import json

import numpy as np

from . import _core
from ._core import DataError, NumericError, ShapeError, compute_betas, dedup, lsh_signature, tokenize

__all__ = [
    "DataError",
    "NumericError",
    "ShapeError",
    "compute_betas",
    "compute_metrics",
    "dedup",
    "iterative_transfer",
    "lsh_signature",
    "rank_patterns",
    "run_comparison",
    "split_manifest",
    "synth",
    "tokenize",
    "train_logreg",
    "weak_label",
]


def synth(spec=None):
    """Synthetic shift benchmark. Returns (manifest text, flipped auxiliary label count)."""
    out = json.loads(_core.synth(json.dumps(spec) if spec else ""))
    return out["manifest"], out["flipped"]


def rank_patterns(docs, max_n=3, method="chi2", top_k=10, min_df=1):
    """docs: iterable of (text or token list, label). Returns scored n-grams, best first."""
    prepared = [(tokenize(t) if isinstance(t, str) else list(t), int(y)) for t, y in docs]
    return _core.rank_patterns(prepared, max_n, method, top_k, min_df)


def weak_label(texts, patterns):
    """texts: iterable of (id, text). Returns ids of texts matching any pattern."""
    return _core.weak_label(list(texts), list(patterns))


def compute_metrics(predictions, labels):
    return json.loads(_core.compute_metrics(list(map(int, predictions)), list(map(int, labels))))


def split_manifest(manifest, ratio=(9, 1), seed=0):
    return _core.split_manifest(manifest, ratio[0], ratio[1], seed)


def train_logreg(X, y, w=None, config=None):
    """Weighted logistic regression. Returns (weights array, bias)."""
    X = np.asarray(X, dtype=float)
    w = np.ones(len(X)) if w is None else np.asarray(w, dtype=float)
    weights, bias = _core.train_logreg(X.tolist(), list(map(int, y)), w.tolist(), json.dumps(config) if config else "")
    return np.asarray(weights), bias


def run_comparison(manifest, config=None):
    return json.loads(_core.run_comparison(manifest, json.dumps(config) if config else ""))


def iterative_transfer(manifest, config=None):
    return json.loads(_core.iterative_transfer(manifest, json.dumps(config) if config else ""))
