"""Histogram gradient boosting: shared glue and backend selection.

Two interchangeable kernels implement the per-tree work: a compiled one
(surplus._gbt_cy, built from Cython) and a pure-NumPy twin (surplus._gbt_py).
Both consume the same pre-binned matrix and pre-drawn subsample rows and make
identical structural choices and float operations in identical order, so a fit
is reproducible bit-for-bit regardless of which kernel is active.

The active kernel is chosen once at import: compiled if present, NumPy
otherwise.  BACKEND names the choice; fit_forest(..., backend=...) can force
one explicitly (used by the parity tests and the benchmark).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import substream

try:
    from . import _gbt_cy as _default_impl

    BACKEND = "compiled"
except ImportError:
    from . import _gbt_py as _default_impl

    BACKEND = "python"

_MAX_BINS = 256  # per-feature histogram width, bins are quantile-spaced


def available_backends() -> tuple[str, ...]:
    if BACKEND == "compiled":
        return ("compiled", "python")
    return ("python",)


def _impl_for(backend):
    if backend is None:
        return _default_impl
    if backend == "python":
        from . import _gbt_py

        return _gbt_py
    if backend == "compiled":
        from . import _gbt_cy

        return _gbt_cy
    raise ValueError("unknown backend %r" % backend)


def make_bins(X: np.ndarray):
    """Quantile-bin each column; returns (bins, nbins, cut lists).

    bin(v) counts the cuts <= v, so a split at bin s sends v left exactly
    when v < cuts[s]; inference on raw values uses that same rule.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, m = X.shape
    bins = np.empty((n, m), dtype=np.int32)
    cuts_per_col = []
    probe = np.minimum((np.arange(1, _MAX_BINS) * n) // _MAX_BINS, n - 1)
    for j in range(m):
        col = X[:, j]
        cuts = np.unique(np.sort(col)[probe])
        bins[:, j] = np.searchsorted(cuts, col, side="right")
        cuts_per_col.append(cuts)
    nbins = np.array([c.size + 1 for c in cuts_per_col], dtype=np.int32)
    return bins, nbins, cuts_per_col


@dataclass
class Forest:
    """A fitted additive tree ensemble over a column-subset matrix."""

    base_value: float
    learning_rate: float
    max_depth: int
    feature: np.ndarray  # (rounds, nodes) int32: >=0 split, -1 leaf, -2 absent
    threshold: np.ndarray  # raw-value cut at split nodes
    value: np.ndarray  # leaf payloads (unscaled residual means)
    gain: np.ndarray  # per-column accumulated split gain
    train_curve: np.ndarray  # training MSE after each round

    @property
    def n_rounds(self) -> int:
        return self.feature.shape[0]


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    *,
    n_rounds: int,
    max_depth: int,
    learning_rate: float,
    subsample: float = 1.0,
    seed: int = 0,
    backend: str | None = None,
) -> Forest:
    """Fit least-squares boosted trees on (X, y).

    Identical inputs give identical forests, independent of the backend.
    """
    impl = _impl_for(backend)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, m = X.shape
    bins, nbins, cuts_per_col = make_bins(X)
    base = float(np.mean(y))

    max_nodes = (1 << (max_depth + 1)) - 1
    feature = np.full((n_rounds, max_nodes), -2, dtype=np.int32)
    split_bin = np.full((n_rounds, max_nodes), -1, dtype=np.int32)
    value = np.zeros((n_rounds, max_nodes))
    gain = np.zeros(m)
    curve = np.zeros(n_rounds)
    pred = np.full(n, base)

    if subsample < 1.0:
        m_sub = max(1, int(round(subsample * n)))
        rng = substream(seed, 31)
        samples = np.empty((n_rounds, m_sub), dtype=np.int32)
        for t in range(n_rounds):
            samples[t] = np.sort(rng.choice(n, m_sub, replace=False))
    else:
        samples = None

    impl.fit_forest(
        bins, nbins, y, base, n_rounds, max_depth, learning_rate, samples,
        feature, split_bin, value, gain, curve, pred,
    )

    threshold = np.zeros((n_rounds, max_nodes))
    ts, nds = np.nonzero(feature >= 0)
    for t, nd in zip(ts.tolist(), nds.tolist()):
        threshold[t, nd] = cuts_per_col[feature[t, nd]][split_bin[t, nd]]

    return Forest(base, learning_rate, max_depth, feature, threshold, value, gain, curve)


def predict_forest(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Evaluate the ensemble on raw feature values (same columns as the fit)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    R = forest.n_rounds
    node = np.zeros((n, R), dtype=np.int32)
    tix = np.arange(R)[None, :]
    rix = np.arange(n)[:, None]
    for _ in range(forest.max_depth):
        f = forest.feature[tix, node]
        active = f >= 0
        if not active.any():
            break
        thr = forest.threshold[tix, node]
        xv = X[rix, np.where(active, f, 0)]
        node = np.where(active, 2 * node + 1 + (xv >= thr), node)
    contrib = forest.value[tix, node]
    return forest.base_value + forest.learning_rate * contrib.sum(axis=1)
