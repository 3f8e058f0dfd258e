import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dtt.data import GroupPartition, TrioDataset
from dtt.errors import InputError
from dtt.hmm import GeneticMap, HmmParams
from dtt.statistics import (
    FittedModel,
    LossStatistic,
    TDTStatistic,
    check_family,
    group_weights,
    loss_statistic,
    support_mask,
    tdt_analytic,
    tdt_counts,
    tdt_pvalue,
    tdt_statistic,
)

# ---------------------------------------------------------------- TDT


def test_tdt_statistic_examples():
    assert tdt_statistic([2, 1, 0], [0, 0, 0]) == 0
    assert tdt_statistic([2, 1, 0], [1, 1, 0]) == 3
    G = np.array([[2, 0], [1, 1], [0, 2]])
    assert tdt_statistic(G, [1, 1, 0]) == 3  # column sums (3, 1)
    with pytest.raises(InputError):
        tdt_statistic([1, 2], [0.5, 1])


@given(
    arrays(np.int64, 12, elements=st.integers(0, 2)),
    arrays(np.int64, 12, elements=st.integers(0, 1)),
    st.integers(0, 11),
)
def test_tdt_statistic_is_additive_in_rows(x, y, k):
    base = tdt_statistic(x, y)
    doubled = tdt_statistic(np.r_[x, x[k]], np.r_[y, y[k]])
    assert doubled == base + x[k] * y[k]
    assert base == np.sum(x[y == 1])


def test_tdt_pvalue_examples():
    assert tdt_pvalue(7, 7) == 1.0
    assert tdt_pvalue(0, 0) == 1.0
    # chi-square(1) upper tail at 10
    assert tdt_pvalue(10, 0) == pytest.approx(0.0015654022580025, rel=1e-10)


def _tdt_data(mother, father, x_m, x_f, y):
    p = len(x_m[0])
    return TrioDataset(
        x_m, x_f, mother, father, np.ones(len(y), bool), np.ones(len(y), bool), y,
        GeneticMap.uniform(p, 0.1), HmmParams(0.0),
    )


def test_tdt_counts_by_hand():
    # site 0: mother het transmits 1 (case), father het transmits 0 (case); control ignored
    # site 1: all parents homozygous, nothing is informative
    mother = np.array([[[0, 1], [1, 1]], [[0, 1], [1, 1]]])
    father = np.array([[[1, 0], [0, 0]], [[1, 0], [0, 0]]])
    x_m = np.array([[1, 1], [0, 1]])
    x_f = np.array([[0, 0], [1, 0]])
    data = _tdt_data(mother, father, x_m, x_f, np.array([1.0, 0.0]))
    b, c = tdt_counts(data)
    assert b.tolist() == [1, 0] and c.tolist() == [1, 0]
    assert np.allclose(tdt_analytic(data), [1.0, 1.0])


def test_tdt_no_heterozygous_parents():
    mother = np.zeros((3, 2, 2), np.uint8)
    father = np.ones((3, 2, 2), np.uint8)
    data = _tdt_data(mother, father, np.zeros((3, 2)), np.ones((3, 2)), np.array([1.0, 1.0, 0.0]))
    assert np.all(tdt_analytic(data) == 1.0)


def test_tdt_ignores_absent_parent():
    mother = np.array([[[0], [1]]] * 4)
    father = np.array([[[0], [1]]] * 4)
    x = np.ones((4, 1))
    data = TrioDataset(x, x, mother, father, np.ones(4, bool), np.zeros(4, bool), np.ones(4),
                       GeneticMap.uniform(1, 0.1), HmmParams(0.0))
    b, c = tdt_counts(data)
    assert b.tolist() == [4] and c.tolist() == [0]


# ---------------------------------------------------------------- loss statistics


def test_loss_statistic_gaussian_examples():
    y = np.array([1.0, -2.0, 0.5])
    zero = FittedModel(0.0, np.zeros(2), "gaussian")
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert loss_statistic(zero, X, y) == pytest.approx(-np.sum(y**2))
    perfect = FittedModel(0.25, np.array([1.0, -2.0]), "gaussian")
    yy = 0.25 + X @ np.array([1.0, -2.0])
    assert loss_statistic(perfect, X, yy) == 0.0


def test_loss_statistic_logistic_oracle():
    model = FittedModel(0.0, np.array([1.0]), "logistic")
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0])
    mpmath.mp.dps = 30
    sig = [1 / (1 + mpmath.exp(-mpmath.mpf(e))) for e in (0, 1, 2)]
    ref = sum(yi * mpmath.log(s) + (1 - yi) * mpmath.log(1 - s) for yi, s in zip(y, sig))
    assert loss_statistic(model, X, y) == pytest.approx(float(ref), rel=1e-14)
    assert float(ref) == pytest.approx(-2.1333368791, abs=1e-10)


def test_loss_statistic_rejects_non_finite():
    model = FittedModel(0.0, np.array([1.0]), "logistic")
    with pytest.raises(InputError):
        loss_statistic(model, np.array([[np.inf]]), [1.0])


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["gaussian", "logistic"]))
def test_loss_statistic_row_order_invariant(seed, family):
    gen = np.random.default_rng(seed)
    n, p = 20, 5
    X = gen.uniform(0, 2, size=(n, p))
    y = gen.integers(0, 2, n).astype(float)
    model = FittedModel(gen.normal(), gen.normal(size=p), family)
    perm = gen.permutation(n)
    assert loss_statistic(model, X[perm], y[perm]) == pytest.approx(loss_statistic(model, X, y), rel=1e-12)


def test_check_family_aliases():
    assert check_family("binomial") == "logistic"
    assert check_family("linear") == "gaussian"
    with pytest.raises(InputError):
        check_family("poisson")


# ---------------------------------------------------------------- block scoring


@pytest.mark.parametrize("stat_kind", ["tdt", "tdt_scoped", "loss_logistic", "loss_gaussian"])
def test_score_block_matches_direct_evaluation(stat_kind):
    gen = np.random.default_rng(3)
    n, p = 30, 12
    base = gen.integers(0, 3, size=(n, p)).astype(float)
    base[:, 0] = gen.uniform(0, 2, n)  # masked (real-valued) column
    y = gen.integers(0, 2, n).astype(float)
    coef = gen.normal(size=p)
    coef[[2, 7]] = 0.0
    stat = {
        "tdt": TDTStatistic(),
        "tdt_scoped": TDTStatistic(np.arange(4, 9)),
        "loss_logistic": LossStatistic(FittedModel(0.3, coef, "logistic")),
        "loss_gaussian": LossStatistic(FittedModel(0.3, coef, "gaussian")),
    }[stat_kind]
    cols = np.arange(3, 8)
    needed = stat.needed(cols)
    block = gen.integers(0, 3, size=(6, n, needed.size))
    ctx = stat.prepare(base, y)
    scores = stat.score_block(ctx, needed, block)
    for b in range(6):
        G = base.copy()
        G[:, needed] = block[b]
        assert scores[b] == pytest.approx(stat(G, y), rel=1e-12, abs=1e-12)


def test_needed_columns():
    coef = np.array([0.0, 1.0, 0.0, -1.0])
    assert LossStatistic(FittedModel(0.0, coef)).needed(np.arange(4)).tolist() == [1, 3]
    assert TDTStatistic([1, 2]).needed(np.arange(4)).tolist() == [1, 2]
    assert TDTStatistic().localize([2, 3]).needed(np.arange(4)).tolist() == [2, 3]


# ---------------------------------------------------------------- weights and models


def _partition(p, intervals):
    return GroupPartition.from_intervals(intervals, GeneticMap.uniform(p, 0.1))


def test_group_weights_examples():
    part = _partition(3, [(0, 1), (2, 2)])
    model = FittedModel(0.0, np.array([1.0, -2.0, 0.5]))
    assert np.allclose(group_weights(model, part), [3.0, 0.5])
    zero = FittedModel(0.0, np.zeros(3))
    assert np.all(group_weights(zero, part) == 0)
    assert support_mask(model).tolist() == [True, True, True]
    assert support_mask(zero).tolist() == [False, False, False]


@given(arrays(np.float64, 9, elements=st.floats(-5, 5)), st.randoms())
def test_group_weights_invariant_to_within_group_permutation(coef, rnd):
    part = _partition(9, [(0, 2), (3, 7), (8, 8)])
    w = group_weights(FittedModel(0.0, coef), part)
    shuffled = coef.copy()
    idx = list(range(3, 8))
    rnd.shuffle(idx)
    shuffled[3:8] = coef[idx]
    assert np.allclose(group_weights(FittedModel(0.0, shuffled), part), w)
    assert np.all(w >= 0)


def test_model_round_trip(tmp_path):
    model = FittedModel(-0.123456789012345, np.array([0.0, 1e-17, -3.25, 1 / 3]), "logistic",
                        lam=0.01, cv_score=1.5, site_ids=["a", "b", "c", "d"])
    path = tmp_path / "m.txt"
    model.save(path)
    back = FittedModel.load(path)
    assert back.intercept == model.intercept
    assert np.array_equal(back.coefficients, model.coefficients)
    assert back.site_ids == model.site_ids and back.family == "logistic" and back.lam == 0.01
    back.save(tmp_path / "m2.txt")
    assert (tmp_path / "m2.txt").read_bytes() == path.read_bytes()


def test_model_load_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("not a model\n")
    with pytest.raises(InputError, match="line 1"):
        FittedModel.load(bad)
    bad.write_text("# dtt-model v1\nfamily\tlogistic\nintercept\t0.0\nsite_id\tcoefficient\na\tx\n")
    with pytest.raises(InputError, match="line 5"):
        FittedModel.load(bad)
    with pytest.raises(InputError):
        FittedModel(0.0, np.array([1.0, np.nan]))
