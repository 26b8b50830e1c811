import math

import numpy as np
import pytest

from surplus import (
    CoalitionMask,
    ComparisonTable,
    Dataset,
    DgpSpec,
    GroundTruth,
    LearnerSpec,
    LocoConfig,
    SplitPlan,
    angle_score,
    derive_ground_truth,
    exact_shapley,
    filtered_value,
    generate,
    loco,
    rank_summary,
    refit_loss_table,
    selective_ratio,
    split_consistency,
)
from surplus.importance import ImportanceReport
from surplus.seeding import child_seed, substream

from oracles import lstsq_fit_predict, mse


# --- metrics -----------------------------------------------------------------


def test_angle_identical_direction_is_zero():
    v = np.array([1.0, 2.0, 0.5])
    assert angle_score(v, v) == 0.0
    assert angle_score(v, 3.0 * v) == pytest.approx(0.0, abs=1e-12)


def test_angle_orthogonal():
    assert angle_score([1, 0], [0, 1]) == pytest.approx(math.pi / 2)


def test_angle_clips_negatives_by_default():
    # a negative entry is treated as no weight, not opposite weight
    a = angle_score([1.0, -5.0], [1.0, 0.0])
    assert a == 0.0
    raw = angle_score([1.0, -1.0], [1.0, 1.0], clip=False)
    assert raw == pytest.approx(math.pi / 2)


def test_angle_zero_vector_flagged():
    flags = set()
    assert angle_score([-1.0, -2.0], [1.0, 0.0], flags=flags) == pytest.approx(math.pi / 2)
    assert "zero_vector_angle" in flags


def test_angle_symmetric():
    rng = substream(31)
    for _ in range(10):
        a, b = rng.uniform(0, 1, 4), rng.uniform(0, 1, 4)
        assert angle_score(a, b) == pytest.approx(angle_score(b, a), abs=1e-12)


def test_angle_validation():
    with pytest.raises(ValueError):
        angle_score([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        angle_score([np.nan, 1.0], [1.0, 1.0])


def test_selective_ratio_extremes():
    assert selective_ratio([2.0, 1.0, 0.0], {0, 1}) == 1.0
    assert selective_ratio([0.0, 0.0, 3.0], {0, 1}) == 0.0
    assert selective_ratio([1.0, 1.0, 2.0], {0, 1}) == pytest.approx(0.5)


def test_selective_ratio_scale_invariant_and_clipped():
    assert selective_ratio([4.0, -9.0, 4.0], {0}) == pytest.approx(0.5)
    assert selective_ratio([8.0, -1.0, 8.0], {0}) == pytest.approx(0.5)


def test_selective_ratio_zero_vector():
    flags = set()
    assert selective_ratio([0.0, -1.0], {0}, flags=flags) == 0.0
    assert "zero_vector_ratio" in flags
    with pytest.raises(ValueError):
        selective_ratio([1.0], set())
    with pytest.raises(ValueError):
        selective_ratio([1.0, 2.0], {5})


# --- split consistency ---------------------------------------------------------


def _fixed_runner(phi):
    def runner(half, seed):
        return ImportanceReport("gain", np.asarray(phi, float), tuple("f%d" % i for i in range(len(phi))), 1, 1.0, seed, 0.0)

    return runner


def test_split_consistency_data_independent_method_scores_zero():
    ds = generate(DgpSpec("DS1", 60, seed=0))
    assert split_consistency(ds, _fixed_runner([1.0, 2.0, 3.0]), trials=3) == 0.0


def test_split_consistency_single_trial():
    ds = generate(DgpSpec("DS1", 60, seed=0))
    val = split_consistency(ds, _fixed_runner([1.0, 0.5, 0.0]), trials=1)
    assert val == pytest.approx(0.0, abs=1e-7)  # arccos jitter near cos=1


def test_split_consistency_real_method_reproducible():
    ds = generate(DgpSpec("DS3", 400, seed=21))

    def runner(half, seed):
        return loco(half, LocoConfig(repeats=3, learner=LearnerSpec("ols"), seed=seed))

    a = split_consistency(ds, runner, trials=2, seed=5)
    b = split_consistency(ds, runner, trials=2, seed=5)
    assert a == b
    assert 0.0 <= a <= math.pi / 2


def test_split_consistency_failures_skipped_then_fatal():
    ds = generate(DgpSpec("DS1", 60, seed=0))
    calls = []

    def flaky(half, seed):
        calls.append(seed)
        if len(calls) <= 2:  # first trial: both halves... first call fails the trial
            raise RuntimeError("synthetic")
        return _fixed_runner([1.0, 1.0, 1.0])(half, seed)

    flags = set()
    val = split_consistency(ds, flaky, trials=3, seed=1, flags=flags)
    assert val == 0.0
    assert any(f.startswith("trial_failed:") for f in flags)

    def always_bad(half, seed):
        raise RuntimeError("nope")

    with pytest.raises(RuntimeError, match="all 2 consistency trials failed"):
        split_consistency(ds, always_bad, trials=2)


def test_split_consistency_needs_rows():
    ds = generate(DgpSpec("DS1", 20, seed=0))
    with pytest.raises(ValueError, match="40"):
        split_consistency(ds, _fixed_runner([1, 1, 1]))


# --- refit loss tables and ground truth -----------------------------------------


def test_refit_loss_table_matches_direct_lstsq():
    """The Gram-matrix shortcut must price every subset exactly like a naive
    per-fold refit with the reference least-squares implementation."""
    ds = generate(DgpSpec("DS5", 500, seed=3))
    plan = SplitPlan("kfold", 4, seed=9)
    table = refit_loss_table(ds, "ols", plan)
    assert len(table) == 7

    from surplus.data import split

    for mask, loss in table.items():
        cols = list(mask.indices)
        fold_losses = []
        for tr, te in split(ds, plan):
            yhat = lstsq_fit_predict(ds.X[np.ix_(tr, cols)], ds.y[tr], ds.X[np.ix_(te, cols)])
            fold_losses.append(mse(ds.y[te], yhat))
        assert loss == pytest.approx(np.mean(fold_losses), abs=1e-8), mask.bits


def test_refit_loss_table_gbt_uses_cv_loss():
    from surplus import cv_loss

    ds = generate(DgpSpec("DS1", 120, seed=4))
    plan = SplitPlan("kfold", 3, seed=2)
    seed = 17
    table = refit_loss_table(ds, "gbt", plan, seed=seed)
    mask = CoalitionMask((1, 0, 1))
    assert table[mask] == cv_loss(LearnerSpec("gbt", seed=seed), ds, mask, plan)


def test_refit_loss_table_validation():
    ds = generate(DgpSpec("DS1", 50, seed=0))
    with pytest.raises(ValueError):
        refit_loss_table(ds, "svm", SplitPlan())
    wide = Dataset(
        tuple("c%d" % j for j in range(13)),
        substream(1).standard_normal((40, 13)),
        np.zeros(40),
    )
    with pytest.raises(ValueError, match="12"):
        refit_loss_table(wide, "ols", SplitPlan("kfold", 2, 0))


def test_ground_truth_efficiency_against_enumerated_game():
    spec = DgpSpec("DS5", 2000, seed=1)
    big = generate(DgpSpec("DS5", 20000, seed=1))
    plan = SplitPlan("kfold", 5, child_seed(1, 61))
    table = refit_loss_table(big, "ols", plan)
    cutoff = 1.05 * 1.0 + 1e-9
    game = filtered_value(table, cutoff)
    phi_game = exact_shapley(game).phi
    truth = derive_ground_truth(spec)
    assert np.max(np.abs(truth.weights + phi_game)) <= 1e-12  # sign flip only
    grand = game.value(frozenset(range(3)))
    assert abs(math.fsum(phi_game) - grand) <= 1e-9


def test_ground_truth_ds5_shape():
    truth = derive_ground_truth(DgpSpec("DS5", 1000, seed=1))
    assert truth.true_set == frozenset({0, 1})
    w = truth.weights
    # the two generating features carry the weight; the composite is noise-level
    assert w[0] > 0.3 and w[1] > 0.3
    assert abs(w[2]) < 0.02 * (w[0] + w[1])
    assert w[0] == pytest.approx(w[1], rel=0.05)


def test_ground_truth_ds5_zero_noise_null_surplus():
    # with no target noise the composite column reconstructs y alone, every
    # coalition at the loss floor ties, and the filtered game degenerates
    truth = derive_ground_truth(DgpSpec("DS5", 1000, seed=2, noise_scale=0.0))
    assert truth.weights[2] == pytest.approx(0.0, abs=1e-9)


def test_ground_truth_ds1_near_symmetric_duplicates():
    truth = derive_ground_truth(DgpSpec("DS1", 1000, seed=1, collinearity_noise=1e-6))
    w = truth.weights
    assert w[0] / w[1] == pytest.approx(1.0, abs=0.1)


def test_ground_truth_true_sets():
    for ds_id, expect in (("DS2", {0, 1}), ("DS4", {0, 1}), ("DS6", {0, 3})):
        truth = derive_ground_truth(DgpSpec(ds_id, 500, seed=3))
        assert truth.true_set == frozenset(expect)


def test_ground_truth_validation():
    with pytest.raises(ValueError):
        GroundTruth()
    with pytest.raises(ValueError):
        GroundTruth(weights=np.array([np.inf, 1.0]))
    with pytest.raises(ValueError):
        GroundTruth(weights=np.zeros(2), true_set={3})
    gt = GroundTruth(weights=np.zeros(3))  # all-zero allowed: degenerate truths exist
    assert gt.true_set is None


# --- comparison tables -----------------------------------------------------------


def _table():
    return ComparisonTable(
        methods=("alpha", "beta", "gamma"),
        datasets=("D1", "D2"),
        metric_kinds=("angle", "selective_ratio"),
        cells=[[0.1, 0.9], [0.2, 0.8], [0.3, 0.7]],
        seeds_per_cell=2,
    )


def test_table_validation():
    with pytest.raises(ValueError):
        ComparisonTable(("m",), ("d",), ("angle",), [[np.nan]])
    with pytest.raises(ValueError):
        ComparisonTable(("m", "m"), ("d",), ("angle",), [[1.0], [2.0]])
    with pytest.raises(ValueError):
        ComparisonTable(("m",), ("d",), ("accuracy",), [[1.0]])
    with pytest.raises(ValueError):
        ComparisonTable(("m",), ("d", "e"), ("angle",), [[1.0]])


def test_table_serialization_and_text():
    t = _table()
    doc = t.to_json_dict()
    assert doc["metric"] == ["angle", "selective_ratio"]
    assert doc["cells"][0] == [0.1, 0.9]
    text = t.to_text()
    assert "alpha" in text and "D2 (selective_ratio)" in text
    assert "(2 seeds per cell)" in text


def test_rank_summary_directions():
    ranks = rank_summary(_table())
    # lower is better for angle, higher for ratio: alpha wins both columns
    assert ranks["alpha"].mean == 1.0
    assert ranks["alpha"].best == 1.0 and ranks["alpha"].worst == 1.0
    assert ranks["gamma"].mean == 3.0


def test_rank_summary_single_column_permutation():
    t = ComparisonTable(("a", "b", "c"), ("d",), ("angle",), [[0.3], [0.1], [0.2]])
    ranks = rank_summary(t)
    assert sorted(r.mean for r in ranks.values()) == [1.0, 2.0, 3.0]


def test_rank_summary_mean_of_means():
    ranks = rank_summary(_table())
    m = len(ranks)
    col_mean = sum(r.mean for r in ranks.values()) / m
    assert col_mean == pytest.approx((m + 1) / 2)


def test_rank_summary_ties_get_mean_rank():
    t = ComparisonTable(("a", "b"), ("d",), ("angle",), [[0.5], [0.5]])
    ranks = rank_summary(t)
    assert ranks["a"].mean == ranks["b"].mean == 1.5
