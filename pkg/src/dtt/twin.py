"""Digital twin tests: the full-chromosome test, the local test and the
local test with jointly independent group p-values.

All three compare a statistic on the observed data with the same statistic
on ``K`` synthetic offspring ("digital twins") resampled from the meiosis
model given the parents.  Twins are generated in fixed-size replicate blocks
drawn from keyed streams, scored as they are produced and discarded, so
memory stays bounded and results do not depend on how work is split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import MATERNAL, PATERNAL, SIDES, GroupPartition, PValueTable, TrioDataset, TrioRecord
from .errors import InputError
from .hmm import (
    compute_fb_weights,
    posterior_mean_segment,
    sample_ancestry_posterior,
    sample_global_twin,
    sample_local_twin,
    sample_modified_local_twin,
    subset_distances,
)
from .rng import GLOBAL, GROUP, MODIFIED, POSTERIOR, TIES, as_keyed
from .statistics import LossStatistic, Statistic, group_weights

REPLICATE_BLOCK = 8
# the independent-p-value sampler only redraws flagged segments, so its blocks can be larger
SEGMENT_BLOCK = 64
TIE_POLICIES = ("randomized", "deterministic")


def quantile_pvalue(t_star, t_twins, tie_policy="randomized", rng=None) -> float:
    """``(1 + #{k: t* <= t_k}) / (K + 1)``.

    With ``tie_policy="randomized"`` the observed score is placed uniformly at
    random among the twins it ties with, which makes the p-value exactly
    uniform on the ``K + 1`` grid under exchangeability.
    """
    t = np.asarray(t_twins, dtype=float).ravel()
    K = t.size
    if K == 0:
        raise InputError("no twin scores")
    if tie_policy not in TIE_POLICIES:
        raise InputError(f"tie_policy must be one of {TIE_POLICIES}")
    above = int(np.count_nonzero(t > t_star))
    ties = int(np.count_nonzero(t == t_star))
    if tie_policy == "deterministic":
        return (1 + above + ties) / (K + 1)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    r = int(gen.integers(0, ties + 1)) if ties else 0
    return (1 + above + r) / (K + 1)


@dataclass(frozen=True)
class SamplingPlan:
    """Which offspring haplotypes are resampled (True) or held fixed."""

    maternal: bool
    paternal: bool


def resolve_duos(record: TrioRecord) -> SamplingPlan:
    """Sides with a missing parent keep the observed haplotype in every twin."""
    if record.mother is None and record.father is None:
        raise InputError(f"trio {record.trio_id!r} has no parent, nothing can be resampled")
    return SamplingPlan(record.mother is not None, record.father is not None)


@dataclass
class TestResult:
    p_value: float
    t_star: float
    t_twins: np.ndarray

    def __float__(self):
        return self.p_value


def _blocks(K: int, width: int = REPLICATE_BLOCK):
    if K < 1:
        raise InputError("K must be at least 1")
    for b, start in enumerate(range(0, K, width)):
        yield b, min(width, K - start)


def _chrom_columns(data: TrioDataset, chrom) -> tuple:
    gmap = data.gmap
    if np.ndim(chrom) == 0:
        a, b = gmap.chrom_range(int(chrom))
        return int(chrom), np.arange(a, b)
    cols = np.asarray(chrom, dtype=np.int64)
    if cols.size == 0:
        raise InputError("empty chromosome index set")
    label = int(gmap.chrom[cols[0]])
    a, b = gmap.chrom_range(label)
    if not np.array_equal(cols, np.arange(a, b)):
        raise InputError("the global test needs the full index set of one chromosome")
    return label, cols


def _check_stat(stat: Statistic, data: TrioDataset):
    if not isinstance(stat, Statistic):
        raise InputError("statistic must implement the Statistic contract")
    stat.check(data.phenotype)


def _finish(stat, ctx, needed, truth, twin_blocks, K, tie_rng, tie_policy):
    t_star = float(stat.score_block(ctx, needed, truth[None])[0])
    if needed.size == 0:
        twins = np.full(K, t_star)
    else:
        twins = np.concatenate([stat.score_block(ctx, needed, blk) for blk in twin_blocks])
    return TestResult(quantile_pvalue(t_star, twins, tie_policy, tie_rng), t_star, twins)


# ---------------------------------------------------------------- full chromosome


class GlobalTwinSampler:
    """Unconditional twins over a set of columns of one chromosome."""

    def __init__(self, data: TrioDataset, rng):
        self.data = data
        self.keyed = as_keyed(rng)

    def block(self, chrom: int, cols: np.ndarray, b: int, size: int) -> np.ndarray:
        """Twin genotypes ``(size, n, len(cols))`` for replicate block ``b``."""
        data = self.data
        d = subset_distances(data.gmap, cols)
        out = np.broadcast_to(data.genotypes[:, cols], (size, data.n, len(cols))).copy()
        for s in SIDES:
            hap, parents, present = data.side(s)
            rows = np.flatnonzero(present)
            if rows.size == 0:
                continue
            gen = self.keyed.stream(GLOBAL, chrom, s, b)
            twin, _ = sample_global_twin(parents[rows][:, :, cols], d, data.params, gen, size=size)
            out[:, rows] += twin - hap[rows][:, cols]
        return out


def digital_twin_test(
    data: TrioDataset, chrom, stat: Statistic, K: int = 99, rng=None,
    tie_policy="randomized", return_details=False,
):
    """Full-chromosome test: resample every transmitted haplotype on ``chrom``.

    ``chrom`` is a chromosome label or its complete index set.  Sides whose
    parent is missing are held fixed.  Returns the p-value (or a
    :class:`TestResult` with ``return_details``).
    """
    _check_stat(stat, data)
    label, cols = _chrom_columns(data, chrom)
    stat = stat.localize(cols)
    keyed = as_keyed(rng)
    needed = np.asarray(stat.needed(cols), dtype=np.int64)
    G = data.genotypes
    ctx = stat.prepare(G, data.phenotype)
    sampler = GlobalTwinSampler(data, keyed)
    blocks = (sampler.block(label, needed, b, size) for b, size in _blocks(K))
    res = _finish(
        stat, ctx, needed, G[:, needed], blocks, K, keyed.stream(TIES, GLOBAL, label), tie_policy
    )
    return res if return_details else res.p_value


# ---------------------------------------------------------------- local test


class LocalTwinSampler:
    """Twins of a group drawn from ``X_g | X_{-g}, parents``.

    Forward-backward weights are computed once per (side, chromosome).
    """

    def __init__(self, data: TrioDataset, rng):
        self.data = data
        self.keyed = as_keyed(rng)
        self._weights = {}

    def _side_weights(self, s: int, chrom: int):
        key = (s, chrom)
        if key not in self._weights:
            hap, parents, present = self.data.side(s)
            a, b = self.data.gmap.chrom_range(chrom)
            rows = np.flatnonzero(present)
            d = self.data.gmap.distances[a:b]
            w = compute_fb_weights(hap[rows, a:b], parents[rows, :, a:b], d, self.data.params) if rows.size else None
            self._weights[key] = (rows, a, d, w)
        return self._weights[key]

    def block(self, group, cols: np.ndarray, b: int, size: int) -> np.ndarray:
        data = self.data
        lo, hi = int(group[0]), int(group[1])
        chrom = int(data.gmap.chrom[lo])
        out = np.broadcast_to(data.genotypes[:, cols], (size, data.n, len(cols))).copy()
        for s in SIDES:
            rows, a, d, w = self._side_weights(s, chrom)
            if rows.size == 0:
                continue
            hap, parents, _ = data.side(s)
            gen = self.keyed.stream(GROUP, lo, hi, s, b)
            seg = sample_local_twin(
                hap[rows, a : a + len(d)], parents[rows, :, a : a + len(d)], d, data.params,
                (lo - a, hi - a), gen, size=size, weights=w, sites=cols - a,
            )
            out[:, rows] += seg - hap[rows][:, cols]
        return out


def _check_group(data: TrioDataset, group) -> tuple:
    lo, hi = int(group[0]), int(group[1])
    if not 0 <= lo <= hi < data.p:
        raise InputError(f"group [{lo}, {hi}] outside the data")
    if data.gmap.chrom[lo] != data.gmap.chrom[hi]:
        raise InputError(f"group [{lo}, {hi}] crosses a chromosome boundary")
    return lo, hi


def local_dtt(
    data: TrioDataset, group, stat: Statistic, K: int = 99, rng=None,
    tie_policy="randomized", return_details=False, sampler: Optional[LocalTwinSampler] = None,
):
    """Local test of ``group`` (inclusive index pair): resample ``X_g`` given
    the rest of the offspring haplotypes and the parents."""
    _check_stat(stat, data)
    lo, hi = _check_group(data, group)
    cols = np.arange(lo, hi + 1)
    stat = stat.localize(cols)
    keyed = as_keyed(rng) if sampler is None else sampler.keyed
    sampler = sampler or LocalTwinSampler(data, keyed)
    needed = np.asarray(stat.needed(cols), dtype=np.int64)
    G = data.genotypes
    ctx = stat.prepare(G, data.phenotype)
    blocks = (sampler.block((lo, hi), needed, b, size) for b, size in _blocks(K))
    res = _finish(stat, ctx, needed, G[:, needed], blocks, K, keyed.stream(TIES, GROUP, lo, hi), tie_policy)
    return res if return_details else res.p_value


def _default_weights(stat, partition):
    if isinstance(stat, LossStatistic):
        return group_weights(stat.model, partition)
    return np.zeros(len(partition))


def local_dtt_partition(
    data: TrioDataset, partition: GroupPartition, stat: Statistic, K: int = 99, rng=None,
    tie_policy="randomized", weights=None,
) -> PValueTable:
    """The local test for every group of ``partition`` (draws independent per group)."""
    partition.validate(data.gmap)
    sampler = LocalTwinSampler(data, rng)
    res = [
        local_dtt(data, g, stat, K, tie_policy=tie_policy, return_details=True, sampler=sampler)
        for g in partition
    ]
    w = _default_weights(stat, partition) if weights is None else weights
    return PValueTable(partition, [r.p_value for r in res], w, K, np.array([r.t_star for r in res]))


# ---------------------------------------------------------------- independent p-values


class IndependentTwinSampler:
    """Twins for the local test with jointly independent group p-values.

    Ancestry is drawn once from its posterior.  A (trio, side, group) is
    flagged when the ancestry states at the group's two ends differ; only
    flagged segments are resampled (odd number of crossovers between the end
    states), everything else is copied.  Outside the tested group the
    statistic sees the masked genotypes: flagged segments replaced by their
    conditional means given the parents and end states.
    """

    def __init__(self, data: TrioDataset, partition: GroupPartition, rng, point_weights="distance"):
        partition.validate(data.gmap)
        self.data = data
        self.partition = partition
        self.keyed = as_keyed(rng)
        self.point_weights = point_weights
        self.ancestry = self._draw_ancestry()
        self.flags = self._flag()
        self._masked = None

    def _draw_ancestry(self) -> dict:
        data = self.data
        out = {}
        for s in SIDES:
            hap, parents, present = data.side(s)
            u = np.zeros((data.n, data.p), np.uint8)
            rows = np.flatnonzero(present)
            if rows.size:
                for chrom, (a, b) in data.gmap.chromosomes.items():
                    gen = self.keyed.stream(POSTERIOR, s, chrom)
                    u[rows, a:b] = sample_ancestry_posterior(
                        hap[rows, a:b], parents[rows, :, a:b], data.gmap.distances[a:b], data.params, gen
                    )
            out[s] = u
        return out

    def _flag(self) -> dict:
        """``flags[s]`` is a boolean ``(n, n_groups)`` matrix."""
        out = {}
        for s in SIDES:
            _, _, present = self.data.side(s)
            u = self.ancestry[s]
            out[s] = (u[:, self.partition.starts] != u[:, self.partition.ends]) & present[:, None]
        return out

    def flagged_rows(self, k: int, s: int) -> np.ndarray:
        return np.flatnonzero(self.flags[s][:, k])

    def masked_haplotypes(self, s: int) -> np.ndarray:
        data = self.data
        hap, parents, _ = data.side(s)
        out = hap.astype(float)
        u = self.ancestry[s]
        d = data.gmap.distances
        for k, (lo, hi) in enumerate(self.partition):
            rows = self.flagged_rows(k, s)
            if rows.size:
                ends = np.stack([u[rows, lo], u[rows, hi]], axis=1)
                out[rows, lo : hi + 1] = posterior_mean_segment(
                    parents[rows], ends, d, data.params, (lo, hi)
                )
        return out

    @property
    def masked_genotypes(self) -> np.ndarray:
        if self._masked is None:
            self._masked = self.masked_haplotypes(MATERNAL) + self.masked_haplotypes(PATERNAL)
        return self._masked

    def segments(self, k: int, s: int, b: int, size: int):
        """Resampled ``(haplotype, ancestry)`` of the flagged rows of side ``s``
        in group ``k``: arrays ``(size, n_flagged, group_size)``."""
        data = self.data
        lo, hi = self.partition[k]
        rows = self.flagged_rows(k, s)
        g = hi - lo + 1
        if rows.size == 0:
            empty = np.zeros((size, 0, g), np.uint8)
            return rows, empty, empty
        _, parents, _ = data.side(s)
        u = self.ancestry[s]
        ends = np.stack([u[rows, lo], u[rows, hi]], axis=1)
        par = parents[rows][:, :, lo : hi + 1]
        d = data.gmap.distances[lo : hi + 1].copy()
        d[0] = np.inf
        gen = self.keyed.stream(MODIFIED, lo, hi, s, b)
        seg, anc = sample_modified_local_twin(
            np.tile(ends, (size, 1)), np.tile(par, (size, 1, 1)), d, data.params, (0, g - 1), gen,
            point_weights=self.point_weights,
        )
        return rows, seg.reshape(size, rows.size, g), anc.reshape(size, rows.size, g)

    def block(self, k: int, cols: np.ndarray, b: int, size: int) -> np.ndarray:
        lo, _ = self.partition[k]
        data = self.data
        out = np.broadcast_to(data.genotypes[:, cols], (size, data.n, len(cols))).copy()
        for s in SIDES:
            rows, seg, _ = self.segments(k, s, b, size)
            if rows.size:
                hap, _, _ = data.side(s)
                out[:, rows] += seg[:, :, cols - lo] - hap[rows][:, cols]
        return out

    def statistic_base(self, k: int) -> np.ndarray:
        """Masked genotypes outside group ``k``, true genotypes inside."""
        lo, hi = self.partition[k]
        base = self.masked_genotypes.copy()
        base[:, lo : hi + 1] = self.data.genotypes[:, lo : hi + 1]
        return base


def local_dtt_independent(
    data: TrioDataset, partition: GroupPartition, stat: Statistic, K: int = 99, rng=None,
    tie_policy="randomized", weights=None, point_weights="distance", return_sampler=False,
):
    """Local tests for all groups with jointly independent null p-values.

    Returns a :class:`PValueTable` (and the sampler with ``return_sampler``).
    """
    _check_stat(stat, data)
    sampler = IndependentTwinSampler(data, partition, rng, point_weights)
    keyed = sampler.keyed
    G = data.genotypes
    pvals, tstars = [], []
    for k, (lo, hi) in enumerate(partition):
        cols = np.arange(lo, hi + 1)
        st = stat.localize(cols)
        needed = np.asarray(st.needed(cols), dtype=np.int64)
        ctx = st.prepare(sampler.statistic_base(k), data.phenotype)
        blocks = (sampler.block(k, needed, b, size) for b, size in _blocks(K, SEGMENT_BLOCK))
        res = _finish(st, ctx, needed, G[:, needed], blocks, K, keyed.stream(TIES, MODIFIED, lo, hi), tie_policy)
        pvals.append(res.p_value)
        tstars.append(res.t_star)
    w = _default_weights(stat, partition) if weights is None else weights
    table = PValueTable(partition, pvals, w, K, np.array(tstars))
    return (table, sampler) if return_sampler else table
