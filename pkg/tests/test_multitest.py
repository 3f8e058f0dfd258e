import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtt.data import GroupPartition, PValueTable
from dtt.errors import InputError
from dtt.hmm import GeneticMap
from dtt.multitest import (
    accumulation_test,
    benjamini_hochberg,
    bonferroni,
    combine,
    false_discovery_proportion,
    hinge_exp,
    selective_seqstep,
)

pvals_st = st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=1, max_size=12)
grid_pvals_st = st.lists(st.integers(1, 20).map(lambda k: k / 20), min_size=1, max_size=12)


def brute_force_bh(p, alpha):
    p = np.asarray(p)
    m = len(p)
    best = 0
    for k in range(1, m + 1):
        if np.sort(p)[k - 1] <= alpha * k / m:
            best = k
    if best == 0:
        return set()
    return {i for i in range(m) if p[i] <= alpha * best / m}


def test_bonferroni_examples():
    assert bonferroni([0.04], 0.05).rejected.tolist() == [0]
    assert bonferroni([0.06], 0.05).rejected.tolist() == []
    assert bonferroni([0.001, 0.5], 0.05).rejected.tolist() == [0]
    assert len(bonferroni([1.0] * 5, 0.05)) == 0


def test_bh_examples():
    assert benjamini_hochberg([0.01, 0.02, 0.9], 0.05).rejected.tolist() == [0, 1]
    assert benjamini_hochberg([0.03], 0.05).rejected.tolist() == [0]
    assert len(benjamini_hochberg([1.0] * 4, 0.05)) == 0


@settings(max_examples=300)
@given(st.one_of(pvals_st, grid_pvals_st), st.sampled_from([0.01, 0.05, 0.1, 0.2, 0.5]))
def test_bh_equals_brute_force(p, alpha):
    assert set(benjamini_hochberg(p, alpha).rejected.tolist()) == brute_force_bh(p, alpha)


def test_hinge_exp():
    assert np.all(hinge_exp([0.0, 0.2, 0.5]) == 0)
    assert hinge_exp([0.99])[0] == pytest.approx(2 * math.log(50))
    assert hinge_exp([0.99])[0] == pytest.approx(7.824046010856292)
    assert np.isfinite(hinge_exp([1.0])[0])
    with pytest.raises(InputError):
        hinge_exp([0.5], c=1.0)


def test_accumulation_examples():
    res = accumulation_test([0.01] * 10, 0.2)
    assert res.rejected.tolist() == list(range(10))
    res = accumulation_test([0.01] + [0.99] * 9, 0.2)
    assert res.rejected.tolist() == [0]
    assert res.params["k_hat"] == 1
    assert len(accumulation_test([0.99] * 3, 0.2)) == 0
    assert len(accumulation_test([1.0] * 3, 0.2)) == 0
    with pytest.raises(InputError):
        accumulation_test([0.1], 0.2, c=0.5)


def test_seqstep_examples():
    res = selective_seqstep([0.01] * 50, 0.2, 0.5)
    assert res.rejected.tolist() == list(range(50))
    # the running estimate first falls to 0.2 at k = 5
    assert selective_seqstep([0.01] * 4, 0.2, 0.5).rejected.tolist() == []
    assert selective_seqstep([0.01] * 5, 0.2, 0.5).rejected.tolist() == list(range(5))
    assert len(selective_seqstep([0.9] * 50, 0.2, 0.5)) == 0
    assert len(selective_seqstep([0.01], 0.2, 0.5)) == 0
    with pytest.raises(InputError):
        selective_seqstep([0.1], 0.2, c=1.0)


def test_seqstep_skips_large_pvalues_inside_prefix():
    p = [0.01] * 12 + [0.9] + [0.01] * 12
    res = selective_seqstep(p, 0.2, 0.5)
    assert 12 not in res
    assert res.params["k_hat"] == 25


@settings(max_examples=200)
@given(pvals_st, st.floats(0.01, 0.4), st.floats(0.01, 0.4))
def test_monotone_in_alpha(p, a1, a2):
    lo, hi = sorted([a1, a2])
    for proc in (bonferroni, benjamini_hochberg, accumulation_test, selective_seqstep):
        assert set(proc(p, lo).rejected.tolist()) <= set(proc(p, hi).rejected.tolist())


@settings(max_examples=200)
@given(pvals_st, st.floats(0.05, 0.5))
def test_ordered_procedures_reject_within_a_prefix(p, alpha):
    acc = accumulation_test(p, alpha)
    assert acc.rejected.tolist() == list(range(len(acc)))
    seq = selective_seqstep(p, alpha)
    k = seq.params["k_hat"]
    assert all(i < k and p[i] <= 0.5 for i in seq.rejected)
    assert len(seq) == sum(1 for i in range(k) if p[i] <= 0.5)


@pytest.mark.parametrize("procedure", ["bh", "seqstep"])
def test_empirical_fdr(procedure):
    gen = np.random.default_rng(0)
    m, m1, alpha, reps = 100, 20, 0.2, 400
    fdp = []
    for _ in range(reps):
        is_null = np.ones(m, bool)
        is_null[:m1] = False
        p = gen.uniform(size=m)
        p[:m1] = gen.beta(0.1, 1.0, size=m1)
        if procedure == "bh":
            rej = benjamini_hochberg(p, alpha).rejected
        else:
            # ordering informative but imperfect: non-nulls tend to come first
            order = np.argsort(np.where(is_null, gen.uniform(0, 1, m), gen.uniform(0, 0.6, m)))
            rej = order[selective_seqstep(p[order], alpha).rejected]
        fdp.append(false_discovery_proportion(rej, is_null))
    fdp = np.array(fdp)
    assert fdp.mean() <= alpha + 2 * fdp.std(ddof=1) / np.sqrt(reps)


def _table(pvals, weights):
    gmap = GeneticMap.uniform(len(pvals), 0.1)
    part = GroupPartition.from_intervals([(k, k) for k in range(len(pvals))], gmap)
    return PValueTable(part, pvals, weights, 99)


def test_combine_orders_by_weight_with_genomic_ties():
    table = _table([0.9, 0.01, 0.01, 0.01, 0.01, 0.01], [0.0, 1.0, 1.0, 2.0, 0.5, 1.0])
    acc = combine(table, "accumulation", 0.2)
    assert acc.params["order"].tolist() == [3, 1, 2, 5, 4, 0]
    assert acc.rejected.tolist() == [1, 2, 3, 4, 5]
    assert acc.guarantee == "modified FDR"
    bh = combine(table, "bh", 0.2)
    assert bh.rejected.tolist() == [1, 2, 3, 4, 5]
    with pytest.raises(InputError):
        combine(table, "holm", 0.2)


def test_input_validation():
    with pytest.raises(InputError):
        bonferroni([1.5], 0.05)
    with pytest.raises(InputError):
        benjamini_hochberg([0.1], 0.0)
