"""Trainable predictors with seeded, mask-aware fitting.

A fit sees only the columns its coalition mask lets through (true refit by
column exclusion, never zero-filling), and is a pure function of
(spec.seed, data, mask).  Built-ins: ordinary least squares and the
histogram boosted trees from _gbt.  A third kind delegates fitting to an
external process speaking the line-JSON protocol in external.py.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import scipy.linalg

from . import _gbt
from .data import Dataset, SplitPlan, split, take
from .seeding import child_seed

LEARNER_KINDS = ("ols", "gbt", "external")

GBT_DEFAULTS = {
    "n_rounds": 100,
    "max_depth": 3,
    "learning_rate": 0.1,
    "subsample": 1.0,
}

_RIDGE = 1e-8


@dataclass(frozen=True)
class CoalitionMask:
    """Binary inclusion vector over the p features."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ValueError("mask must cover at least one feature")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("mask bits must be 0 or 1")
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))

    @classmethod
    def full(cls, p: int) -> "CoalitionMask":
        return cls((1,) * p)

    @classmethod
    def from_indices(cls, p: int, indices) -> "CoalitionMask":
        bits = [0] * p
        for j in indices:
            bits[j] = 1
        return cls(tuple(bits))

    @property
    def p(self) -> int:
        return len(self.bits)

    @property
    def popcount(self) -> int:
        return sum(self.bits)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(j for j, b in enumerate(self.bits) if b)

    def includes(self, j: int) -> bool:
        return self.bits[j] == 1

    def drop(self, j: int) -> "CoalitionMask":
        if not self.bits[j]:
            raise ValueError("feature %d not in mask" % j)
        bits = list(self.bits)
        bits[j] = 0
        return CoalitionMask(tuple(bits))

    def __str__(self):
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class LossMetric:
    """Pointwise loss between target and prediction vectors (MSE only)."""

    kind: str = "mse"

    def __post_init__(self):
        if self.kind != "mse":
            raise ValueError("unsupported loss %r" % self.kind)

    def compute(self, y, yhat) -> float:
        y = np.asarray(y, dtype=np.float64)
        yhat = np.asarray(yhat, dtype=np.float64)
        if y.shape != yhat.shape:
            raise ValueError("shape mismatch %s vs %s" % (y.shape, yhat.shape))
        return float(np.mean((y - yhat) ** 2))


MSE = LossMetric()


@dataclass(frozen=True)
class LearnerSpec:
    """What to train: learner kind, hyperparameters, and the fit seed."""

    kind: str
    hyperparams: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0
    external_cmd: tuple[str, ...] = ()
    timeout: float = 300.0

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError("unknown learner kind %r" % self.kind)
        object.__setattr__(self, "hyperparams", dict(self.hyperparams))
        object.__setattr__(self, "external_cmd", tuple(self.external_cmd))
        if self.kind == "gbt":
            hp = gbt_params(self)
            if not (isinstance(hp["n_rounds"], int) and hp["n_rounds"] >= 1):
                raise ValueError("n_rounds must be an integer >= 1")
            if not (isinstance(hp["max_depth"], int) and 1 <= hp["max_depth"] <= 12):
                raise ValueError("max_depth must be in 1..12")
            if not 0 < hp["learning_rate"] <= 1:
                raise ValueError("learning_rate must be in (0, 1]")
            if not 0 < hp["subsample"] <= 1:
                raise ValueError("subsample must be in (0, 1]")
            unknown = set(self.hyperparams) - set(GBT_DEFAULTS)
            if unknown:
                raise ValueError("unknown gbt hyperparams %s" % sorted(unknown))
        if self.kind == "external" and not self.external_cmd:
            raise ValueError("external learner needs a command")


def gbt_params(spec: LearnerSpec) -> dict:
    hp = dict(GBT_DEFAULTS)
    hp.update(spec.hyperparams)
    hp["n_rounds"] = int(hp["n_rounds"])
    hp["max_depth"] = int(hp["max_depth"])
    return hp


@dataclass(frozen=True)
class _OlsState:
    intercept: float
    coef: np.ndarray  # one weight per masked-in column


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: LearnerSpec
    feature_mask: CoalitionMask
    state: object
    train_loss: float
    flags: tuple[str, ...] = ()

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


def fit(spec: LearnerSpec, ds: Dataset, mask: CoalitionMask | None = None) -> FittedModel:
    """Train on the masked-in columns only; deterministic in (seed, ds, mask)."""
    if mask is None:
        mask = CoalitionMask.full(ds.p)
    if mask.p != ds.p:
        raise ValueError("mask length %d != p %d" % (mask.p, ds.p))
    if mask.popcount < 1:
        raise ValueError("mask must include at least one feature")

    cols = list(mask.indices)
    Xs = np.ascontiguousarray(ds.X[:, cols])
    flags: tuple[str, ...] = ()

    if spec.kind == "ols":
        state, flags = _fit_ols(Xs, ds.y)
    elif spec.kind == "gbt":
        hp = gbt_params(spec)
        state = _gbt.fit_forest(
            Xs,
            ds.y,
            n_rounds=hp["n_rounds"],
            max_depth=hp["max_depth"],
            learning_rate=hp["learning_rate"],
            subsample=hp["subsample"],
            seed=spec.seed,
        )
    else:
        from .external import ExternalModel

        state = ExternalModel(spec)
        state.fit(ds.X, ds.y, mask.bits)

    train_loss = MSE.compute(ds.y, _predict_state(state, cols, ds.X))
    return FittedModel(spec, mask, state, train_loss, flags)


def _fit_ols(Xs, y):
    n = Xs.shape[0]
    design = np.column_stack([np.ones(n), Xs])
    gram = design.T @ design
    rhs = design.T @ y
    flags = ()
    try:
        w = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
        if not np.all(np.isfinite(w)):
            raise np.linalg.LinAlgError("non-finite solve")
    except np.linalg.LinAlgError:
        w = _ridge_solve(gram, rhs)
        flags = ("ridge_fallback",)
    return _OlsState(float(w[0]), np.asarray(w[1:])), flags


def _ridge_solve(gram, rhs):
    penalized = gram + _RIDGE * np.eye(gram.shape[0])
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(penalized), rhs)


def predict(model: FittedModel, X) -> np.ndarray:
    """Evaluate the model on full-width rows; masked-out columns are ignored."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.feature_mask.p:
        raise ValueError(
            "X must have %d columns, got shape %s" % (model.feature_mask.p, X.shape)
        )
    return _predict_state(model.state, list(model.feature_mask.indices), X)


def _predict_state(state, cols, X):
    if isinstance(state, _OlsState):
        return state.intercept + X[:, cols] @ state.coef
    if isinstance(state, _gbt.Forest):
        return _gbt.predict_forest(state, np.ascontiguousarray(X[:, cols]))
    return state.predict(X)  # external process owns the masking


def release(model: FittedModel) -> None:
    """Free out-of-process resources; no-op for built-in learners."""
    close = getattr(model.state, "close", None)
    if close is not None:
        close()


def cv_loss(
    spec: LearnerSpec,
    ds: Dataset,
    mask: CoalitionMask,
    plan: SplitPlan,
    metric: LossMetric = MSE,
    flags: set | None = None,
) -> float:
    """Mean held-out loss over the plan's folds.

    Each fold refits with a seed derived from (spec.seed, fold), so the
    whole number is a pure function of its arguments.
    """
    if plan.kind != "kfold":
        raise ValueError("cv_loss needs a kfold plan")
    losses = []
    for f, (train_idx, test_idx) in enumerate(split(ds, plan)):
        fold_spec = replace(spec, seed=child_seed(spec.seed, 17, f))
        model = fit(fold_spec, take(ds, train_idx), mask)
        try:
            losses.append(metric.compute(ds.y[test_idx], predict(model, ds.X[test_idx])))
            if flags is not None:
                flags.update(model.flags)
        finally:
            release(model)
    return float(np.mean(losses))


def baseline_cv_loss(ds: Dataset, plan: SplitPlan, metric: LossMetric = MSE) -> float:
    """Held-out loss of the no-feature predictor (train-fold target mean)."""
    losses = []
    for train_idx, test_idx in split(ds, plan):
        mean = float(np.mean(ds.y[train_idx]))
        losses.append(metric.compute(ds.y[test_idx], np.full(len(test_idx), mean)))
    return float(np.mean(losses))


def gain_importance(model: FittedModel) -> np.ndarray:
    """Total split-gain per feature, mapped back to full-width indexing."""
    if not isinstance(model.state, _gbt.Forest):
        raise TypeError("gain importance requires a boosted-tree model")
    out = np.zeros(model.feature_mask.p)
    for local, j in enumerate(model.feature_mask.indices):
        out[j] = model.state.gain[local]
    return out
