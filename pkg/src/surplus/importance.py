"""Feature-importance estimators built on refitting.

Five methods, one report shape:

  smssm     subset-refit marginal surplus with a top-quantile model filter
  loco      drop-one-column analysis with intervals and signed-rank tests
  mcr       permutation importance averaged over near-optimal boosted models
  replacement  constant-substitution deltas on a single fitted model
  gain      total split gain of one boosted model

Every randomized quantity is seeded from (run seed, structural indices),
never from scheduling, so reports are bitwise identical across thread
counts.  n_models_fit counts cross-validated model evaluations, each of
which fits one model per fold internally.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm, wilcoxon

from .data import Dataset, SplitPlan, split, take
from .learner import (
    MSE,
    CoalitionMask,
    FittedModel,
    LearnerSpec,
    baseline_cv_loss,
    cv_loss,
    fit,
    gain_importance,
    predict,
    release,
)
from .seeding import child_seed, substream

__all__ = [
    "METHODS",
    "MarginalRecord",
    "FeatureDiagnostics",
    "ImportanceReport",
    "SmssmConfig",
    "LocoConfig",
    "smssm",
    "loco",
    "mcr_simplified",
    "constant_replacement_importance",
    "replacement_cv",
    "gain_report",
    "report_to_dict",
    "report_from_dict",
]

METHODS = ("smssm", "loco", "mcr", "replacement", "gain")
REPORT_SCHEMA_VERSION = 1

# seed-path constants; must stay distinct from those in data/learner/evaluation
_SPLIT_STREAM = 23
_LEARNER_STREAM = 29
_MCR_PLAN_STREAM = 37
_MCR_PARAM_STREAM = 41
_MCR_MODEL_STREAM = 43
_MCR_PERM_STREAM = 47
_MASK_STREAM = 83


@dataclass(frozen=True)
class MarginalRecord:
    """One (subset, dropped feature) loss comparison."""

    mask: CoalitionMask
    subset_loss: float
    dropped_feature: int
    drop_loss: float
    delta: float

    def __post_init__(self):
        if not self.mask.includes(self.dropped_feature):
            raise ValueError(
                "dropped feature %d not in mask %s" % (self.dropped_feature, self.mask)
            )
        # exact identity, not approximate: delta is defined as this difference
        if self.delta != self.drop_loss - self.subset_loss:
            raise ValueError("delta must equal drop_loss - subset_loss")


@dataclass(frozen=True)
class FeatureDiagnostics:
    """Per-feature uncertainty summaries (one entry per feature)."""

    std_err: tuple[float, ...]
    ci_low: tuple[float, ...]
    ci_high: tuple[float, ...]
    p_value_greater: tuple[float, ...]
    p_value_less: tuple[float, ...]

    def __post_init__(self):
        lengths = {
            len(self.std_err),
            len(self.ci_low),
            len(self.ci_high),
            len(self.p_value_greater),
            len(self.p_value_less),
        }
        if len(lengths) != 1 or 0 in lengths:
            raise ValueError("diagnostic tuples must share a nonzero length")
        for name in ("std_err", "ci_low", "ci_high", "p_value_greater", "p_value_less"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    method: str
    phi: np.ndarray
    feature_names: tuple[str, ...]
    n_models_fit: int
    retained_fraction: float
    seed: int
    wall_time: float
    diagnostics: FeatureDiagnostics | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError("unknown method %r" % self.method)
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 1 or phi.shape[0] != len(self.feature_names):
            raise ValueError("phi must be one value per feature")
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi must be finite")
        object.__setattr__(self, "phi", phi)
        phi.setflags(write=False)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if not isinstance(self.n_models_fit, int) or self.n_models_fit < 0:
            raise ValueError("n_models_fit must be a nonnegative integer")
        if not 0.0 <= self.retained_fraction <= 1.0:
            raise ValueError("retained_fraction must lie in [0, 1]")
        if not (math.isfinite(self.wall_time) and self.wall_time >= 0):
            raise ValueError("wall_time must be a nonnegative duration")
        # only the drop-one analysis carries uncertainty summaries
        if (self.diagnostics is not None) != (self.method == "loco"):
            raise ValueError("diagnostics are present exactly for the loco method")
        if self.diagnostics is not None and len(self.diagnostics.std_err) != phi.shape[0]:
            raise ValueError("diagnostics length must match phi")
        object.__setattr__(self, "flags", tuple(str(f) for f in self.flags))

    @property
    def p(self) -> int:
        return len(self.feature_names)


@dataclass(frozen=True)
class SmssmConfig:
    k: int = 200
    top_fraction: float = 0.25
    learner: LearnerSpec = LearnerSpec("gbt")
    cv: SplitPlan = SplitPlan()
    seed: int = 0
    aggregate: str = "stratified"

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError("k must be a positive integer")
        if not 0 < self.top_fraction <= 1:
            raise ValueError("top_fraction must lie in (0, 1]")
        if self.aggregate not in ("stratified", "pooled"):
            raise ValueError("aggregate must be 'stratified' or 'pooled'")


@dataclass(frozen=True)
class LocoConfig:
    repeats: int = 20
    learner: LearnerSpec = LearnerSpec("gbt")
    cv: SplitPlan = SplitPlan()
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.repeats, int) or self.repeats < 2:
            raise ValueError("repeats must be an integer >= 2 to estimate spread")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def _parallel_map(fn, items, n_jobs: int):
    """Apply fn to items, results in submission order regardless of workers."""
    items = list(items)
    if not isinstance(n_jobs, int) or n_jobs < 1:
        raise ValueError("n_jobs must be a positive integer")
    if n_jobs == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        futures = [pool.submit(fn, it) for it in items]
        return [f.result() for f in futures]


def _sample_masks(p: int, k: int, seed: int) -> list[CoalitionMask]:
    # popcounts cycle round-robin over 2..p so every size is equally covered
    rng = substream(seed, _MASK_STREAM)
    masks = []
    for i in range(k):
        size = 2 + i % (p - 1)
        idx = rng.choice(p, size=size, replace=False)
        masks.append(CoalitionMask.from_indices(p, idx))
    return masks


def _eval_mask(ds: Dataset, cfg: SmssmConfig, i: int, mask: CoalitionMask):
    """Subset loss plus one drop loss per included feature, for mask i."""
    plan = replace(cfg.cv, seed=child_seed(cfg.cv.seed, _SPLIT_STREAM, i))
    spec = replace(cfg.learner, seed=child_seed(cfg.learner.seed, _LEARNER_STREAM, i))
    flags: set = set()
    subset_loss = cv_loss(spec, ds, mask, plan, flags=flags)
    n_evals = 1
    records = []
    for l in mask.indices:
        if mask.popcount == 1:
            # dropping the last feature leaves no model; score the target mean
            drop_loss = baseline_cv_loss(ds, plan)
            flags.add("baseline_drop")
        else:
            drop_loss = cv_loss(spec, ds, mask.drop(l), plan, flags=flags)
        n_evals += 1
        records.append(MarginalRecord(mask, subset_loss, l, drop_loss, drop_loss - subset_loss))
    return subset_loss, records, n_evals, flags


def smssm(ds: Dataset, cfg: SmssmConfig, n_jobs: int = 1) -> ImportanceReport:
    """Subset-refit marginal surplus, filtered to the best-performing subsets.

    Samples cfg.k feature subsets, scores each by cross-validated loss,
    records the loss increase from dropping each included feature, keeps
    only records whose subset loss falls at or below the cfg.top_fraction
    quantile, and averages the kept deltas per feature (within coalition
    size first, then across sizes).
    """
    t0 = time.perf_counter()
    p = ds.p
    if p < 2:
        raise ValueError("subset analysis needs at least two features")
    if cfg.k < p - 1:
        raise ValueError("k=%d cannot cover all subset sizes; need k >= p-1 = %d" % (cfg.k, p - 1))
    masks = _sample_masks(p, cfg.k, cfg.seed)

    def task(i):
        try:
            return True, (i,) + _eval_mask(ds, cfg, i, masks[i])
        except Exception as exc:
            return False, (i, exc)

    outcomes = _parallel_map(task, range(cfg.k), n_jobs)

    subset_losses: dict[int, float] = {}
    records: list[MarginalRecord] = []
    flags: set = set()
    failures = []
    n_fit = 0
    for ok, payload in outcomes:
        if ok:
            i, sub, recs, n_evals, fl = payload
            subset_losses[i] = sub
            records.extend(recs)
            flags |= fl
            n_fit += n_evals
        else:
            i, exc = payload
            failures.append((i, exc))
            flags.add("mask_failed:%d" % i)
    if not subset_losses:
        detail = "\n".join(
            "  mask %d (%s): %s: %s" % (i, masks[i], type(exc).__name__, exc)
            for i, exc in failures
        )
        raise RuntimeError("all %d subset evaluations failed:\n%s" % (cfg.k, detail))

    ordered = [subset_losses[i] for i in sorted(subset_losses)]
    cutoff = float(np.quantile(np.asarray(ordered), cfg.top_fraction))
    kept = [r for r in records if r.subset_loss <= cutoff]
    retained = sum(1 for v in ordered if v <= cutoff) / cfg.k

    phi = np.zeros(p)
    for l in range(p):
        mine = [r for r in kept if r.dropped_feature == l]
        if not mine:
            phi[l] = 0.0
            flags.add("never_retained:%s" % ds.feature_names[l])
            continue
        if cfg.aggregate == "stratified":
            by_size: dict[int, list[float]] = {}
            for r in mine:
                by_size.setdefault(r.mask.popcount, []).append(r.delta)
            means = [math.fsum(v) / len(v) for _, v in sorted(by_size.items())]
            phi[l] = math.fsum(means) / len(means)
        else:
            phi[l] = math.fsum(r.delta for r in mine) / len(mine)

    return ImportanceReport(
        method="smssm",
        phi=phi,
        feature_names=ds.feature_names,
        n_models_fit=n_fit,
        retained_fraction=retained,
        seed=cfg.seed,
        wall_time=time.perf_counter() - t0,
        flags=tuple(sorted(flags)),
    )


def loco(ds: Dataset, cfg: LocoConfig, n_jobs: int = 1) -> ImportanceReport:
    """Drop-one-column importance with normal CIs and signed-rank tests.

    Each repeat draws a fresh cross-validation split and learner seed
    (the same derivation the subset method uses, so the two agree exactly
    when the subset method is restricted to full-size masks).
    """
    t0 = time.perf_counter()
    p = ds.p
    if p < 2:
        raise ValueError("drop-one analysis needs at least two features")
    full = CoalitionMask.full(p)

    def one(t):
        plan = replace(cfg.cv, seed=child_seed(cfg.cv.seed, _SPLIT_STREAM, t))
        spec = replace(cfg.learner, seed=child_seed(cfg.learner.seed, _LEARNER_STREAM, t))
        fl: set = set()
        base = cv_loss(spec, ds, full, plan, flags=fl)
        row = [cv_loss(spec, ds, full.drop(j), plan, flags=fl) - base for j in range(p)]
        return row, fl

    results = _parallel_map(one, range(cfg.repeats), n_jobs)
    diffs = np.array([row for row, _ in results])
    flags: set = set()
    for _, fl in results:
        flags |= fl

    # compensated per-column mean, bit-identical to the subset method's
    # aggregation when the subset space collapses to full-size masks
    theta = np.array([math.fsum(diffs[:, j]) / cfg.repeats for j in range(p)])
    s = diffs.std(axis=0, ddof=1)
    se = s / math.sqrt(cfg.repeats)
    z = float(norm.ppf(1 - cfg.alpha / 2))

    p_greater, p_less = [], []
    for j in range(p):
        col = diffs[:, j]
        if np.all(col == 0):
            # the test statistic is undefined on identical pairs
            p_greater.append(1.0)
            p_less.append(1.0)
            flags.add("degenerate_test:%s" % ds.feature_names[j])
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                p_greater.append(float(wilcoxon(col, alternative="greater").pvalue))
                p_less.append(float(wilcoxon(col, alternative="less").pvalue))
            except ValueError:
                p_greater.append(1.0)
                p_less.append(1.0)
                flags.add("degenerate_test:%s" % ds.feature_names[j])

    diag = FeatureDiagnostics(
        std_err=tuple(se),
        ci_low=tuple(theta - z * se),
        ci_high=tuple(theta + z * se),
        p_value_greater=tuple(p_greater),
        p_value_less=tuple(p_less),
    )
    return ImportanceReport(
        method="loco",
        phi=theta,
        feature_names=ds.feature_names,
        n_models_fit=cfg.repeats * (1 + p),
        retained_fraction=1.0,
        seed=cfg.seed,
        wall_time=time.perf_counter() - t0,
        diagnostics=diag,
        flags=tuple(sorted(flags)),
    )


def mcr_simplified(
    ds: Dataset,
    k_models: int = 20,
    delta: float = 0.0,
    n_perms: int = 20,
    learner_family: LearnerSpec | None = None,
    seed: int = 0,
    plan: SplitPlan | None = None,
    n_jobs: int = 1,
) -> ImportanceReport:
    """Permutation importance averaged over near-optimal boosted models.

    Trains k_models boosted-tree models under randomized hyperparameters,
    keeps those within delta of the best cross-validated loss, and scores
    each feature by the mean held-out loss increase over n_perms random
    column permutations, averaged over the kept models.

    learner_family fixes the model family (boosted trees only); its own
    hyperparameters and seed are ignored in favor of the randomized draws.
    Kept models are refit from their seeds for the permutation pass, so
    n_models_fit is k_models plus the number kept.
    """
    t0 = time.perf_counter()
    if not isinstance(k_models, int) or k_models < 2:
        raise ValueError("k_models must be an integer >= 2")
    if not (math.isfinite(delta) and delta >= 0):
        raise ValueError("delta must be a nonnegative real")
    if not isinstance(n_perms, int) or n_perms < 1:
        raise ValueError("n_perms must be a positive integer")
    if learner_family is None:
        learner_family = LearnerSpec("gbt")
    if learner_family.kind != "gbt":
        raise ValueError("the simplified analysis searches boosted-tree hyperparameters only")
    if plan is None:
        plan = SplitPlan("kfold", 5, child_seed(seed, _MCR_PLAN_STREAM))
    p = ds.p
    full = CoalitionMask.full(p)
    folds = split(ds, plan)

    def model_spec(m):
        rng = substream(seed, _MCR_PARAM_STREAM, m)
        hp = {
            "n_rounds": int(rng.integers(60, 301)),
            "max_depth": int(rng.integers(2, 7)),
            "learning_rate": float(np.exp(rng.uniform(math.log(0.03), math.log(0.3)))),
            "subsample": float(rng.uniform(0.6, 1.0)),
        }
        return LearnerSpec("gbt", hp, seed=child_seed(seed, _MCR_MODEL_STREAM, m))

    cvs = _parallel_map(lambda m: cv_loss(model_spec(m), ds, full, plan), range(k_models), n_jobs)
    best = min(cvs)
    members = [m for m in range(k_models) if cvs[m] <= best + delta]

    def perm_phi(m):
        spec = model_spec(m)
        acc = np.zeros(p)
        for f, (train_idx, test_idx) in enumerate(folds):
            fold_spec = replace(spec, seed=child_seed(spec.seed, 17, f))
            model = fit(fold_spec, take(ds, train_idx))
            Xte = np.array(ds.X[test_idx])
            yte = ds.y[test_idx]
            base = MSE.compute(yte, predict(model, Xte))
            for l in range(p):
                orig = Xte[:, l].copy()
                deltas = []
                for q in range(n_perms):
                    rng = substream(seed, _MCR_PERM_STREAM, m, f, l, q)
                    Xte[:, l] = orig[rng.permutation(orig.shape[0])]
                    deltas.append(MSE.compute(yte, predict(model, Xte)) - base)
                Xte[:, l] = orig
                acc[l] += math.fsum(deltas) / n_perms
        return acc / len(folds)

    per_model = _parallel_map(perm_phi, members, n_jobs)
    phi = np.sum(per_model, axis=0) / len(members)

    return ImportanceReport(
        method="mcr",
        phi=phi,
        feature_names=ds.feature_names,
        n_models_fit=k_models + len(members),
        retained_fraction=len(members) / k_models,
        seed=seed,
        wall_time=time.perf_counter() - t0,
    )


def constant_replacement_importance(
    model: FittedModel, ds: Dataset, constant: str = "mean"
) -> ImportanceReport:
    """Loss increase from overwriting one column with a constant.

    No refitting happens: the fitted model is evaluated on ds as given
    (pass held-out rows for an honest estimate) with each column in turn
    replaced by its mean over ds, or by zero.
    """
    t0 = time.perf_counter()
    if constant not in ("mean", "zero"):
        raise ValueError("constant must be 'mean' or 'zero'")
    if model.feature_mask.p != ds.p:
        raise ValueError("model width %d != dataset width %d" % (model.feature_mask.p, ds.p))
    if model.feature_mask.popcount != ds.p:
        raise ValueError("replacement analysis needs a model fitted on the full feature set")

    base = MSE.compute(ds.y, predict(model, ds.X))
    Xr = np.array(ds.X)
    phi = np.zeros(ds.p)
    for l in range(ds.p):
        orig = Xr[:, l].copy()
        Xr[:, l] = float(orig.mean()) if constant == "mean" else 0.0
        phi[l] = MSE.compute(ds.y, predict(model, Xr)) - base
        Xr[:, l] = orig

    return ImportanceReport(
        method="replacement",
        phi=phi,
        feature_names=ds.feature_names,
        n_models_fit=0,
        retained_fraction=1.0,
        seed=model.spec.seed,
        wall_time=time.perf_counter() - t0,
        flags=tuple(sorted(set(model.flags))),
    )


def replacement_cv(
    ds: Dataset, learner: LearnerSpec, plan: SplitPlan, constant: str = "mean"
) -> ImportanceReport:
    """Fold-averaged constant replacement: fit on train rows, score on test rows."""
    t0 = time.perf_counter()
    folds = split(ds, plan)
    per_fold = np.zeros((len(folds), ds.p))
    flags: set = set()
    for f, (train_idx, test_idx) in enumerate(folds):
        fold_spec = replace(learner, seed=child_seed(learner.seed, 17, f))
        model = fit(fold_spec, take(ds, train_idx))
        try:
            rep = constant_replacement_importance(model, take(ds, test_idx), constant)
        finally:
            release(model)
        per_fold[f] = rep.phi
        flags |= set(rep.flags)
    return ImportanceReport(
        method="replacement",
        phi=per_fold.mean(axis=0),
        feature_names=ds.feature_names,
        n_models_fit=1,
        retained_fraction=1.0,
        seed=learner.seed,
        wall_time=time.perf_counter() - t0,
        flags=tuple(sorted(flags)),
    )


def gain_report(ds: Dataset, learner: LearnerSpec) -> ImportanceReport:
    """Split-gain totals of a single boosted model fit on all rows."""
    t0 = time.perf_counter()
    if learner.kind != "gbt":
        raise ValueError("gain importance needs a boosted-tree learner")
    model = fit(learner, ds)
    return ImportanceReport(
        method="gain",
        phi=gain_importance(model),
        feature_names=ds.feature_names,
        n_models_fit=1,
        retained_fraction=1.0,
        seed=learner.seed,
        wall_time=time.perf_counter() - t0,
        flags=tuple(sorted(set(model.flags))),
    )


def report_to_dict(report: ImportanceReport) -> dict:
    out = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "method": report.method,
        "feature_names": list(report.feature_names),
        "phi": [float(v) for v in report.phi],
        "n_models_fit": report.n_models_fit,
        "retained_fraction": report.retained_fraction,
        "seed": report.seed,
        "wall_time": report.wall_time,
        "flags": list(report.flags),
        "diagnostics": None,
    }
    if report.diagnostics is not None:
        d = report.diagnostics
        out["diagnostics"] = {
            "std_err": list(d.std_err),
            "ci_low": list(d.ci_low),
            "ci_high": list(d.ci_high),
            "p_value_greater": list(d.p_value_greater),
            "p_value_less": list(d.p_value_less),
        }
    return out


def report_from_dict(data: dict) -> ImportanceReport:
    version = data.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise ValueError("unsupported report schema version %r" % version)
    missing = {
        "method",
        "feature_names",
        "phi",
        "n_models_fit",
        "retained_fraction",
        "seed",
        "wall_time",
    } - set(data)
    if missing:
        raise ValueError("report is missing fields %s" % sorted(missing))
    diag = None
    if data.get("diagnostics") is not None:
        d = data["diagnostics"]
        diag = FeatureDiagnostics(
            std_err=tuple(d["std_err"]),
            ci_low=tuple(d["ci_low"]),
            ci_high=tuple(d["ci_high"]),
            p_value_greater=tuple(d["p_value_greater"]),
            p_value_less=tuple(d["p_value_less"]),
        )
    return ImportanceReport(
        method=data["method"],
        phi=np.asarray(data["phi"], dtype=float),
        feature_names=tuple(data["feature_names"]),
        n_models_fit=int(data["n_models_fit"]),
        retained_fraction=float(data["retained_fraction"]),
        seed=int(data["seed"]),
        wall_time=float(data["wall_time"]),
        diagnostics=diag,
        flags=tuple(data.get("flags", ())),
    )
