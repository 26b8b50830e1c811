"""Scoring importance vectors against references, and method comparison grids.

Two scores for simulated data: the angle between an importance vector and
a reference weight vector (lower is better), and the fraction of clipped
weight landing on the truly relevant features (higher is better).  For
real data, split_consistency measures how much a method's output moves
between random halves of the same dataset.

derive_ground_truth builds reference weights by brute force: refit the
base learner on every feature subset of a large regenerated sample, keep
subsets whose cross-validated loss reaches the attainable floor, and
attribute the retained performance exactly with the Shapley engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.stats import rankdata

from .data import Dataset, DgpSpec, SplitPlan, generate, split, take
from .learner import CoalitionMask, LearnerSpec, _ridge_solve, cv_loss
from .seeding import child_seed
from .shapley import exact_shapley, filtered_value

__all__ = [
    "GroundTruth",
    "ComparisonTable",
    "METRIC_FOR",
    "METRIC_KINDS",
    "angle_score",
    "selective_ratio",
    "split_consistency",
    "derive_ground_truth",
    "refit_loss_table",
    "rank_summary",
    "MethodRanks",
]

METRIC_KINDS = ("angle", "selective_ratio", "consistency_angle")

# which simulated-data score applies to which generator
METRIC_FOR = {
    "DS1": "angle",
    "DS2": "selective_ratio",
    "DS3": "selective_ratio",
    "DS4": "selective_ratio",
    "DS5": "angle",
    "DS6": "angle",
}

_BETTER = {"angle": "lower", "selective_ratio": "higher", "consistency_angle": "lower"}

_ORACLE_N = 20000
_ORACLE_P_MAX = 12
_HALVES_STREAM = 53
_TRIAL_RUN_STREAM = 59
_ORACLE_SPLIT_STREAM = 61
_ORACLE_LEARNER_STREAM = 67


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Reference answers: a weight vector, a set of relevant features, or both."""

    weights: np.ndarray | None = None
    true_set: frozenset | None = None

    def __post_init__(self):
        if self.weights is None and self.true_set is None:
            raise ValueError("ground truth needs weights or a true set")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or w.size == 0 or not np.all(np.isfinite(w)):
                raise ValueError("weights must be a finite nonempty vector")
            object.__setattr__(self, "weights", w)
            w.setflags(write=False)
        if self.true_set is not None:
            ts = frozenset(int(j) for j in self.true_set)
            if not ts or min(ts) < 0:
                raise ValueError("true set must be a nonempty set of feature indices")
            if self.weights is not None and max(ts) >= self.weights.size:
                raise ValueError("true set indexes past the weight vector")
            object.__setattr__(self, "true_set", ts)


def _clipped(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("importance vectors are one-dimensional")
    if not np.all(np.isfinite(v)):
        raise ValueError("importance vector must be finite")
    return np.maximum(v, 0.0)


def angle_score(phi, truth, clip: bool = True, flags: set | None = None) -> float:
    """Angle in radians between phi and the reference weights.

    Negative entries are clipped to zero first unless clip=False.  A
    vector with no mass left after clipping carries no direction, so the
    score degrades to the maximally uninformative pi/2 and is flagged.
    """
    a = _clipped(phi) if clip else np.asarray(phi, dtype=float)
    b = _clipped(truth) if clip else np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError("vector lengths differ: %s vs %s" % (a.shape, b.shape))
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        if flags is not None:
            flags.add("zero_vector_angle")
        return math.pi / 2
    cos = float(np.dot(a, b) / (na * nb))
    return math.acos(min(1.0, max(-1.0, cos)))


def selective_ratio(phi, true_set, flags: set | None = None) -> float:
    """Fraction of total clipped weight that lands on the relevant features."""
    w = _clipped(phi)
    ts = frozenset(int(j) for j in true_set)
    if not ts:
        raise ValueError("true set is empty")
    if ts and max(ts) >= w.size:
        raise ValueError("true set indexes past phi")
    total = float(w.sum())
    if total == 0.0:
        if flags is not None:
            flags.add("zero_vector_ratio")
        return 0.0
    return float(sum(w[j] for j in sorted(ts)) / total)


def split_consistency(ds: Dataset, runner, trials: int = 5, seed: int = 0,
                      flags: set | None = None) -> float:
    """Mean angle between a method's outputs on random halves of ds.

    runner(half: Dataset, seed: int) -> ImportanceReport.  Both halves of
    a trial run under the same derived seed, so a method that ignores the
    data entirely scores exactly 0.
    """
    if ds.n < 40:
        raise ValueError("need at least 40 rows to halve, got %d" % ds.n)
    if not isinstance(trials, int) or trials < 1:
        raise ValueError("trials must be a positive integer")
    angles = []
    failures = []
    for t in range(trials):
        plan = SplitPlan("halves", seed=child_seed(seed, _HALVES_STREAM, t))
        left_idx, right_idx = split(ds, plan)[0]
        run_seed = child_seed(seed, _TRIAL_RUN_STREAM, t)
        try:
            left = runner(take(ds, left_idx), run_seed)
            right = runner(take(ds, right_idx), run_seed)
        except Exception as exc:
            failures.append((t, exc))
            if flags is not None:
                flags.add("trial_failed:%d" % t)
            continue
        angles.append(angle_score(left.phi, right.phi, flags=flags))
    if not angles:
        detail = "\n".join(
            "  trial %d: %s: %s" % (t, type(exc).__name__, exc) for t, exc in failures
        )
        raise RuntimeError("all %d consistency trials failed:\n%s" % (trials, detail))
    return float(np.mean(angles))


def refit_loss_table(ds: Dataset, learner_kind: str, plan: SplitPlan,
                     seed: int = 0) -> dict[CoalitionMask, float]:
    """Cross-validated loss for every nonempty feature subset of ds.

    The linear case solves each subset against precomputed per-fold Gram
    matrices instead of refitting from rows, which keeps the full 2^p
    enumeration cheap; the boosted case refits for real.
    """
    p = ds.p
    if p > _ORACLE_P_MAX:
        raise ValueError("subset enumeration is capped at %d features, got %d" % (_ORACLE_P_MAX, p))
    if learner_kind == "gbt":
        spec = LearnerSpec("gbt", seed=seed)
        out = {}
        for bits in range(1, 1 << p):
            mask = CoalitionMask(tuple(bits >> j & 1 for j in range(p)))
            out[mask] = cv_loss(spec, ds, mask, plan)
        return out
    if learner_kind != "ols":
        raise ValueError("loss tables support 'ols' or 'gbt', got %r" % learner_kind)

    per_fold = []
    for train_idx, test_idx in split(ds, plan):
        dtr = np.column_stack([np.ones(len(train_idx)), ds.X[train_idx]])
        dte = np.column_stack([np.ones(len(test_idx)), ds.X[test_idx]])
        ytr, yte = ds.y[train_idx], ds.y[test_idx]
        per_fold.append((
            dtr.T @ dtr,
            dtr.T @ ytr,
            dte.T @ dte,
            dte.T @ yte,
            float(yte @ yte),
            len(test_idx),
        ))
    out = {}
    for bits in range(1, 1 << p):
        cols = [0] + [j + 1 for j in range(p) if bits >> j & 1]
        losses = []
        for gram, rhs, gram_te, rhs_te, yy, n_te in per_fold:
            gs = gram[np.ix_(cols, cols)]
            bs = rhs[cols]
            try:
                w = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gs), bs)
                if not np.all(np.isfinite(w)):
                    raise np.linalg.LinAlgError("non-finite solve")
            except np.linalg.LinAlgError:
                w = _ridge_solve(gs, bs)
            gts = gram_te[np.ix_(cols, cols)]
            bts = rhs_te[cols]
            # held-out MSE from the test Gram identity: ||y - Dw||^2 expanded
            losses.append((yy - 2.0 * float(w @ bts) + float(w @ gts @ w)) / n_te)
        out[CoalitionMask(tuple(bits >> j & 1 for j in range(p)))] = float(np.mean(losses))
    return out


def derive_ground_truth(spec: DgpSpec) -> GroundTruth:
    """Reference weights and true set for a simulated generator.

    Regenerates the data at a large fixed n, enumerates every subset's
    cross-validated refit loss, keeps subsets whose loss reaches the
    attainable floor for the generator's noise level, and attributes the
    retained performance with exact Shapley values.  The filtered game
    scores a retained coalition by its negated loss, so the reference
    weights flip the sign back: features whose arrival unlocks retained
    coalitions come out positive.
    """
    big = generate(replace(spec, n=_ORACLE_N))
    if big.p > _ORACLE_P_MAX:
        raise ValueError("subset enumeration is capped at %d features, got %d" % (_ORACLE_P_MAX, big.p))
    plan = SplitPlan("kfold", 5, child_seed(spec.seed, _ORACLE_SPLIT_STREAM))
    if spec.id == "DS4":
        # the only curved response; linear refits would misprice every subset
        table = refit_loss_table(big, "gbt", plan, seed=child_seed(spec.seed, _ORACLE_LEARNER_STREAM))
        cutoff = 1.25 * spec.noise_scale**2 + 1e-9
    else:
        table = refit_loss_table(big, "ols", plan)
        cutoff = 1.05 * spec.noise_scale**2 + 1e-9
    phi = -exact_shapley(filtered_value(table, cutoff)).phi
    return GroundTruth(weights=phi, true_set=big.true_set)


@dataclass(frozen=True, eq=False)
class ComparisonTable:
    """Complete method-by-dataset score grid with one metric kind per column."""

    methods: tuple[str, ...]
    datasets: tuple[str, ...]
    metric_kinds: tuple[str, ...]
    cells: np.ndarray
    seeds_per_cell: int = 1

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "metric_kinds", tuple(self.metric_kinds))
        if not self.methods or not self.datasets:
            raise ValueError("table needs at least one method and one dataset")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate method names")
        if len(self.metric_kinds) != len(self.datasets):
            raise ValueError("one metric kind per dataset column")
        for kind in self.metric_kinds:
            if kind not in METRIC_KINDS:
                raise ValueError("unknown metric kind %r" % kind)
        cells = np.asarray(self.cells, dtype=float)
        if cells.shape != (len(self.methods), len(self.datasets)):
            raise ValueError(
                "cells must be %d x %d, got %s"
                % (len(self.methods), len(self.datasets), cells.shape)
            )
        if not np.all(np.isfinite(cells)):
            raise ValueError("incomplete grid: non-finite cells")
        if not isinstance(self.seeds_per_cell, int) or self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be a positive integer")
        object.__setattr__(self, "cells", cells)
        cells.setflags(write=False)

    def to_json_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "datasets": list(self.datasets),
            "metric": list(self.metric_kinds),
            "cells": [[float(v) for v in row] for row in self.cells],
            "seeds_per_cell": self.seeds_per_cell,
        }

    def to_text(self) -> str:
        heads = [
            "%s (%s)" % (d, k) for d, k in zip(self.datasets, self.metric_kinds)
        ]
        name_w = max(len("method"), max(len(m) for m in self.methods))
        widths = [max(len(h), 8) for h in heads]
        lines = [
            "method".ljust(name_w)
            + "  "
            + "  ".join(h.rjust(w) for h, w in zip(heads, widths))
        ]
        for i, m in enumerate(self.methods):
            row = "  ".join(
                ("%.4f" % self.cells[i, j]).rjust(widths[j])
                for j in range(len(self.datasets))
            )
            lines.append(m.ljust(name_w) + "  " + row)
        lines.append("(%d seed%s per cell)" % (self.seeds_per_cell,
                                               "" if self.seeds_per_cell == 1 else "s"))
        return "\n".join(lines)


@dataclass(frozen=True)
class MethodRanks:
    mean: float
    best: float
    worst: float


def rank_summary(table: ComparisonTable) -> dict[str, MethodRanks]:
    """Per-method rank statistics across columns; rank 1 is best per column.

    Each column is ranked in its own metric's better direction, ties get
    the mean of their positions.
    """
    m = len(table.methods)
    ranks = np.empty((m, len(table.datasets)))
    for j, kind in enumerate(table.metric_kinds):
        col = table.cells[:, j]
        ranks[:, j] = rankdata(col if _BETTER[kind] == "lower" else -col)
    return {
        name: MethodRanks(
            mean=float(ranks[i].mean()),
            best=float(ranks[i].min()),
            worst=float(ranks[i].max()),
        )
        for i, name in enumerate(table.methods)
    }
