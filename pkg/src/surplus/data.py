"""Datasets: simulated generators with controlled collinearity, CSV I/O,
and deterministic index splits.

The six built-in generators (DS1..DS6) produce regression problems whose
useful features are known by construction, so importance estimates can be
scored against the truth.  Several of them deliberately contain redundant or
composite columns that greedy learners latch onto.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .seeding import substream

DGP_IDS = ("DS1", "DS2", "DS3", "DS4", "DS5", "DS6")

# reserved stream ids inside one dataset's seed space
_TARGET_NOISE = 101
_COLLINEAR = 102  # 102, 103, ... one per derived column
_COMPOSITE_NOISE = 109


@dataclass(frozen=True, eq=False)
class Dataset:
    """A regression dataset with optional ground-truth feature set."""

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    true_set: frozenset[int] | None = None

    def __post_init__(self):
        # column-major storage: methods slice columns far more than rows
        X = np.asfortranarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be 2-d, got shape %s" % (X.shape,))
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(
                "y must be 1-d with one entry per row of X "
                "(X has %d rows, y has shape %s)" % (X.shape[0], y.shape)
            )
        if X.shape[0] < 2:
            raise ValueError("need at least 2 rows")
        if X.shape[1] < 1:
            raise ValueError("need at least 1 feature")
        if len(self.feature_names) != X.shape[1]:
            raise ValueError(
                "%d feature names for %d columns"
                % (len(self.feature_names), X.shape[1])
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("feature names must be unique")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("X and y must be finite")
        if self.true_set is not None:
            ts = frozenset(int(j) for j in self.true_set)
            if ts and (min(ts) < 0 or max(ts) >= X.shape[1]):
                raise ValueError("true_set indices out of range")
            object.__setattr__(self, "true_set", ts)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class DgpSpec:
    """Configuration for one simulated dataset."""

    id: str
    n: int
    seed: int
    noise_scale: float = 1.0
    collinearity_noise: float = 0.05

    def __post_init__(self):
        if self.id not in DGP_IDS:
            raise ValueError("unknown dgp %r, expected one of %s" % (self.id, DGP_IDS))
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not math.isfinite(self.noise_scale) or self.noise_scale < 0:
            raise ValueError("noise_scale must be a finite non-negative number")
        if not math.isfinite(self.collinearity_noise) or self.collinearity_noise < 0:
            raise ValueError("collinearity_noise must be a finite non-negative number")


@dataclass(frozen=True)
class SplitPlan:
    """How to partition row indices: k-fold CV or two random halves."""

    kind: str = "kfold"
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("kfold", "halves"):
            raise ValueError("kind must be 'kfold' or 'halves'")
        if self.kind == "kfold" and self.k < 2:
            raise ValueError("kfold needs k >= 2")


def _base(rng_path, n: int) -> np.ndarray:
    return substream(*rng_path).standard_normal(n)


def generate(spec: DgpSpec) -> Dataset:
    """Draw one dataset from the generator named by spec.id."""
    n, sd = spec.n, spec.seed
    ns, cn = spec.noise_scale, spec.collinearity_noise
    ds_id = DGP_IDS.index(spec.id) + 1

    def col(j):
        return _base((sd, ds_id, j), n)

    def aux(stream):
        return _base((sd, ds_id, stream), n)

    eps = ns * aux(_TARGET_NOISE)

    if spec.id == "DS1":
        x1 = col(0)
        x2 = x1 + cn * aux(_COLLINEAR)
        x3 = col(2)
        X = np.column_stack([x1, x2, x3])
        y = x1 + eps
        true = frozenset({0})
    elif spec.id == "DS2":
        # four jointly normal columns, pairwise correlation 0.3, plus noise
        z = np.column_stack([col(j) for j in range(4)])
        cov = np.full((4, 4), 0.3)
        np.fill_diagonal(cov, 1.0)
        L = np.linalg.cholesky(cov)
        X4 = z @ L.T
        X = np.column_stack([X4, col(4)])
        y = X4[:, 0] + X4[:, 1] + eps
        true = frozenset({0, 1})
    elif spec.id == "DS3":
        x1 = col(0)
        x2 = x1 + 0.5 * aux(_COLLINEAR)  # fixed 0.5 jitter, not the cn knob
        x3 = col(2)
        X = np.column_stack([x1, x2, x3])
        y = x2 + eps
        true = frozenset({1})
    elif spec.id == "DS4":
        X = np.column_stack([col(j) for j in range(3)])
        y = X[:, 0] ** 2 + X[:, 0] * X[:, 1] + eps
        true = frozenset({0, 1})
    elif spec.id == "DS5":
        x1, x2 = col(0), col(1)
        # composite column: the sum of both true features plus its own noise
        # draw (same scale as the target's) plus collinearity jitter
        x3 = x1 + x2 + ns * aux(_COMPOSITE_NOISE) + cn * aux(_COLLINEAR)
        X = np.column_stack([x1, x2, x3])
        y = x1 + x2 + eps
        true = frozenset({0, 1})
    else:  # DS6
        x1 = col(0)
        x2 = x1 + cn * aux(_COLLINEAR)
        x3 = x1 + cn * aux(_COLLINEAR + 1)
        rest = [col(j) for j in range(3, 10)]
        X = np.column_stack([x1, x2, x3] + rest)
        y = x1 + rest[0] + eps
        true = frozenset({0, 3})

    names = tuple("x%d" % (j + 1) for j in range(X.shape[1]))
    return Dataset(names, X, y, true)


def take(ds: Dataset, idx) -> Dataset:
    """Row-subset of a dataset (ground truth carried over)."""
    idx = np.asarray(idx, dtype=np.intp)
    return Dataset(ds.feature_names, ds.X[idx], ds.y[idx], ds.true_set)


def split(ds: Dataset, plan: SplitPlan) -> list[tuple[np.ndarray, np.ndarray]]:
    """Index pairs for the plan: (train, test) per fold, or the two halves.

    Folds partition the rows exactly; both members of every pair are sorted,
    disjoint, and determined by plan.seed alone.
    """
    n = ds.n
    if plan.kind == "kfold":
        if plan.k > n:
            raise ValueError("k=%d folds but only %d rows" % (plan.k, n))
        perm = substream(plan.seed, 11).permutation(n)
        sizes = [n // plan.k + (1 if i < n % plan.k else 0) for i in range(plan.k)]
        out = []
        stop = 0
        for size in sizes:
            start, stop = stop, stop + size
            test = np.sort(perm[start:stop])
            train = np.sort(np.concatenate([perm[:start], perm[stop:]]))
            out.append((train, test))
        return out
    perm = substream(plan.seed, 12).permutation(n)
    half = n // 2
    return [(np.sort(perm[:half]), np.sort(perm[half:]))]


def save_csv(ds: Dataset, path, target: str = "y") -> None:
    """Write the dataset as CSV with a header row; target is the last column."""
    if target in ds.feature_names:
        raise ValueError("target name %r collides with a feature" % target)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + [target])
        for i in range(ds.n):
            # repr of a Python float round-trips the exact binary value
            w.writerow([repr(float(v)) for v in ds.X[i]] + [repr(float(ds.y[i]))])


def load_csv(path, target: str = "y") -> Dataset:
    """Read a CSV with a header row into a dataset.

    Every non-target column becomes a feature.  Malformed input (missing
    target, ragged rows, non-numeric cells) raises ValueError naming the spot.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("%s: empty file" % path)
    header = rows[0]
    if target not in header:
        raise ValueError("%s: no column named %r in header" % (path, target))
    t = header.index(target)
    feat_idx = [j for j in range(len(header)) if j != t]
    X, y = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(
                "%s: row %d has %d cells, header has %d"
                % (path, r, len(row), len(header))
            )
        try:
            vals = [float(c) for c in row]
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise ValueError("%s: row %d: non-numeric cell %r" % (path, r, bad))
        X.append([vals[j] for j in feat_idx])
        y.append(vals[t])
    if not X:
        raise ValueError("%s: no data rows" % path)
    names = tuple(header[j] for j in feat_idx)
    return Dataset(names, np.array(X), np.array(y))


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


__all__ = [
    "DGP_IDS",
    "Dataset",
    "DgpSpec",
    "SplitPlan",
    "generate",
    "take",
    "split",
    "save_csv",
    "load_csv",
]
