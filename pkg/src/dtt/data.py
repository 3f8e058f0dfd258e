"""Trio datasets, group partitions and p-value tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .hmm import GeneticMap, HaplotypePair, HmmParams

MATERNAL = 0
PATERNAL = 1
SIDES = (MATERNAL, PATERNAL)


@dataclass(eq=False)
class TrioRecord:
    """One offspring with its phased haplotypes and available parents."""

    x_m: np.ndarray
    x_f: np.ndarray
    mother: Optional[HaplotypePair] = None
    father: Optional[HaplotypePair] = None
    trio_id: str = ""

    def __post_init__(self):
        self.x_m = np.asarray(self.x_m, dtype=np.uint8)
        self.x_f = np.asarray(self.x_f, dtype=np.uint8)
        if self.x_m.shape != self.x_f.shape or self.x_m.ndim != 1:
            raise InputError("offspring haplotypes must be vectors of equal length")
        if self.mother is None and self.father is None:
            raise InputError(f"trio {self.trio_id!r} has no parent")
        for parent in (self.mother, self.father):
            if parent is not None and len(parent) != len(self.x_m):
                raise InputError(f"trio {self.trio_id!r}: parent and offspring lengths differ")

    @property
    def genotype(self) -> np.ndarray:
        return self.x_m + self.x_f


def phenotype_kind(y) -> str:
    y = np.asarray(y, dtype=float)
    return "binary" if np.all((y == 0) | (y == 1)) else "continuous"


@dataclass(eq=False)
class TrioDataset:
    """Arrays for ``n`` trios over ``p`` sites.

    ``mother`` and ``father`` are ``(n, 2, p)`` strand arrays; rows of absent
    parents are zero and flagged by ``has_mother`` / ``has_father``.
    """

    x_m: np.ndarray
    x_f: np.ndarray
    mother: np.ndarray
    father: np.ndarray
    has_mother: np.ndarray
    has_father: np.ndarray
    phenotype: np.ndarray
    gmap: GeneticMap
    params: HmmParams = field(default_factory=HmmParams)
    ids: Optional[list] = None
    parent_ids: Optional[list] = None  # (mother_id, father_id) per trio, None when absent

    def __post_init__(self):
        self.x_m = np.ascontiguousarray(self.x_m, dtype=np.uint8)
        self.x_f = np.ascontiguousarray(self.x_f, dtype=np.uint8)
        self.mother = np.ascontiguousarray(self.mother, dtype=np.uint8)
        self.father = np.ascontiguousarray(self.father, dtype=np.uint8)
        self.has_mother = np.asarray(self.has_mother, dtype=bool)
        self.has_father = np.asarray(self.has_father, dtype=bool)
        self.phenotype = np.asarray(self.phenotype, dtype=float)
        n, p = self.x_m.shape
        if n == 0:
            raise InputError("dataset has no trios")
        if p != self.gmap.p:
            raise InputError(f"haplotypes have {p} sites but the map has {self.gmap.p}")
        if self.x_f.shape != (n, p):
            raise InputError("paternal haplotype matrix has the wrong shape")
        for name in ("mother", "father"):
            if getattr(self, name).shape != (n, 2, p):
                raise InputError(f"{name} array must have shape (n, 2, p)")
        if self.has_mother.shape != (n,) or self.has_father.shape != (n,):
            raise InputError("parent flags must have length n")
        if not np.all(self.has_mother | self.has_father):
            bad = int(np.flatnonzero(~(self.has_mother | self.has_father))[0])
            raise InputError(f"trio {self.id_of(bad)!r} has neither parent")
        if self.phenotype.shape != (n,):
            raise InputError(f"phenotype has {self.phenotype.size} entries for {n} trios")
        if not np.all(np.isfinite(self.phenotype)):
            raise InputError("phenotype contains non-finite values")
        for arr in (self.x_m, self.x_f, self.mother, self.father):
            if arr.size and arr.max() > 1:
                raise InputError("haplotype entries must be 0 or 1")
        if self.ids is None:
            self.ids = [f"trio{i + 1}" for i in range(n)]
        self.ids = [str(i) for i in self.ids]
        if len(self.ids) != n or len(set(self.ids)) != n:
            raise InputError("trio ids must be unique, one per trio")
        if self.parent_ids is None:
            self.parent_ids = [
                (f"{t}_mother" if hm else None, f"{t}_father" if hf else None)
                for t, hm, hf in zip(self.ids, self.has_mother, self.has_father)
            ]
        self.parent_ids = [tuple(pair) for pair in self.parent_ids]
        if len(self.parent_ids) != n:
            raise InputError("parent ids must be given for every trio")

    @classmethod
    def from_records(
        cls, records: Sequence[TrioRecord], phenotype, gmap: GeneticMap, params=None
    ) -> "TrioDataset":
        n = len(records)
        if n == 0:
            raise InputError("dataset has no trios")
        p = gmap.p
        mother = np.zeros((n, 2, p), np.uint8)
        father = np.zeros((n, 2, p), np.uint8)
        for i, r in enumerate(records):
            if r.mother is not None:
                mother[i] = np.asarray(r.mother)
            if r.father is not None:
                father[i] = np.asarray(r.father)
        return cls(
            np.stack([r.x_m for r in records]),
            np.stack([r.x_f for r in records]),
            mother,
            father,
            [r.mother is not None for r in records],
            [r.father is not None for r in records],
            phenotype,
            gmap,
            params or HmmParams(),
            [r.trio_id or f"trio{i + 1}" for i, r in enumerate(records)],
        )

    @property
    def n(self) -> int:
        return self.x_m.shape[0]

    @property
    def p(self) -> int:
        return self.x_m.shape[1]

    @property
    def kind(self) -> str:
        return phenotype_kind(self.phenotype)

    @property
    def genotypes(self) -> np.ndarray:
        return self.x_m + self.x_f

    def id_of(self, i: int) -> str:
        return self.ids[i] if self.ids is not None else f"trio{i + 1}"

    def side(self, s: int):
        """``(haplotypes, parents, present)`` for the maternal (0) or paternal (1) side."""
        if s == MATERNAL:
            return self.x_m, self.mother, self.has_mother
        return self.x_f, self.father, self.has_father

    def record(self, i: int) -> TrioRecord:
        return TrioRecord(
            self.x_m[i],
            self.x_f[i],
            HaplotypePair(*self.mother[i]) if self.has_mother[i] else None,
            HaplotypePair(*self.father[i]) if self.has_father[i] else None,
            self.id_of(i),
        )

    def __iter__(self):
        return (self.record(i) for i in range(self.n))

    def with_phenotype(self, y) -> "TrioDataset":
        return TrioDataset(
            self.x_m, self.x_f, self.mother, self.father, self.has_mother,
            self.has_father, y, self.gmap, self.params, self.ids, self.parent_ids,
        )


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """Disjoint contiguous site intervals ``[start, end]`` (inclusive), in genomic order."""

    starts: np.ndarray
    ends: np.ndarray
    chrom: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=np.int64)
        ends = np.asarray(self.ends, dtype=np.int64)
        chrom = np.asarray(self.chrom, dtype=np.int64)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "chrom", chrom)
        if not (starts.shape == ends.shape == chrom.shape) or starts.ndim != 1:
            raise InputError("group bounds must be vectors of equal length")
        if len(starts) == 0:
            raise InputError("partition has no groups")
        if np.any(ends < starts) or np.any(starts < 0):
            raise InputError("group end precedes its start")
        if np.any(starts[1:] <= ends[:-1]):
            k = int(np.flatnonzero(starts[1:] <= ends[:-1])[0]) + 1
            raise InputError(f"group {k + 1} overlaps or precedes group {k}")
        names = tuple(self.names) if self.names else tuple(f"g{k + 1}" for k in range(len(starts)))
        if len(names) != len(starts) or len(set(names)) != len(names):
            raise InputError("group names must be unique, one per group")
        object.__setattr__(self, "names", names)

    @classmethod
    def from_intervals(cls, intervals, gmap: GeneticMap, names=()) -> "GroupPartition":
        iv = np.asarray(intervals, dtype=np.int64).reshape(-1, 2)
        if np.any(iv < 0) or np.any(iv >= gmap.p):
            raise InputError("group bounds outside the map")
        chrom_lo = gmap.chrom[iv[:, 0]]
        if np.any(chrom_lo != gmap.chrom[iv[:, 1]]):
            k = int(np.flatnonzero(chrom_lo != gmap.chrom[iv[:, 1]])[0])
            raise InputError(f"group {k + 1} crosses a chromosome boundary")
        return cls(iv[:, 0], iv[:, 1], chrom_lo, names)

    @classmethod
    def by_width(cls, gmap: GeneticMap, width_bp: float, chromosomes=None) -> "GroupPartition":
        """Windows of ``width_bp`` anchored at each chromosome's first site.

        Empty windows are dropped, so a chromosome spanning ``L`` bp yields at
        most ``floor(L / width) + 1`` groups.
        """
        if width_bp <= 0:
            raise InputError("group width must be positive")
        intervals = []
        for c, (a, b) in gmap.chromosomes.items():
            if chromosomes is not None and c not in chromosomes:
                continue
            pos = gmap.position[a:b]
            win = ((pos - pos[0]) // width_bp).astype(np.int64)
            cut = np.flatnonzero(np.diff(win)) + 1
            lo = np.r_[0, cut]
            hi = np.r_[cut, b - a] - 1
            intervals.extend(zip(lo + a, hi + a))
        return cls.from_intervals(intervals, gmap)

    @classmethod
    def by_count(cls, gmap: GeneticMap, k: int, chromosomes=None) -> "GroupPartition":
        """Split each chromosome into ``k`` runs of (nearly) equal site counts."""
        intervals = []
        for c, (a, b) in gmap.chromosomes.items():
            if chromosomes is not None and c not in chromosomes:
                continue
            edges = np.linspace(a, b, min(k, b - a) + 1).round().astype(np.int64)
            intervals.extend(zip(edges[:-1], edges[1:] - 1))
        return cls.from_intervals(intervals, gmap)

    @classmethod
    def whole_chromosomes(cls, gmap: GeneticMap) -> "GroupPartition":
        iv = list(gmap.chromosomes.values())
        return cls.from_intervals([(a, b - 1) for a, b in iv], gmap)

    def __len__(self) -> int:
        return len(self.starts)

    def __iter__(self):
        return iter(zip(self.starts.tolist(), self.ends.tolist()))

    def __getitem__(self, k) -> tuple:
        return int(self.starts[k]), int(self.ends[k])

    def columns(self, k) -> np.ndarray:
        return np.arange(self.starts[k], self.ends[k] + 1)

    def sizes(self) -> np.ndarray:
        return self.ends - self.starts + 1

    def group_of(self, sites) -> np.ndarray:
        """Group index of each site (-1 when a site lies in no group)."""
        sites = np.asarray(sites)
        k = np.searchsorted(self.starts, sites, side="right") - 1
        ok = (k >= 0) & (sites <= self.ends[np.clip(k, 0, None)])
        return np.where(ok, k, -1)

    def validate(self, gmap: GeneticMap) -> None:
        if self.ends.max() >= gmap.p:
            raise InputError("partition extends past the end of the map")
        if np.any(gmap.chrom[self.starts] != gmap.chrom[self.ends]):
            raise InputError("a group crosses a chromosome boundary")
        if np.any(gmap.chrom[self.starts] != self.chrom):
            raise InputError("group chromosome labels disagree with the map")


@dataclass
class PValueTable:
    """One p-value per group, with ordering weights and the replicate count."""

    partition: GroupPartition
    pvalues: np.ndarray
    weights: np.ndarray
    K: int
    t_star: Optional[np.ndarray] = None

    def __post_init__(self):
        self.pvalues = np.asarray(self.pvalues, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.pvalues.shape != (len(self.partition),) or self.weights.shape != self.pvalues.shape:
            raise InputError("one p-value and one weight per group are required")
        if np.any(self.pvalues <= 0) or np.any(self.pvalues > 1):
            raise InputError("p-values must lie in (0, 1]")

    def order(self) -> np.ndarray:
        """Group indices by decreasing weight; ties kept in genomic order."""
        return np.argsort(-self.weights, kind="stable")

    def with_weights(self, weights) -> "PValueTable":
        return PValueTable(self.partition, self.pvalues, weights, self.K, self.t_star)
