"""Haldane meiosis HMM: transitions, forward-backward weights, twin samplers.

Ancestry states are coded ``0`` for strand ``a`` and ``1`` for strand ``b``.
Parental haplotypes are arrays of shape ``(..., 2, p)`` (strand a, strand b)
and offspring haplotypes ``(..., p)``; leading dimensions are batch
dimensions (individuals, replicates) and are processed together.

Genetic distances are in Morgans.  A distance of ``inf`` marks the first site
of a chromosome: the stay probability there is 1/2, so a genome-wide chain
with infinite distances at chromosome starts is exactly a product of
independent per-chromosome chains.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .errors import DegenerateEvidenceError, InputError

STRAND_A = 0
STRAND_B = 1


def transition_prob(d):
    """Probability that the ancestry state is unchanged across distance ``d``.

    An even number of Poisson(``d``) crossovers: ``(1 + exp(-2 d)) / 2``.
    """
    d = np.asarray(d, dtype=float)
    if np.any(np.isnan(d)) or np.any(d < 0):
        raise InputError("genetic distance must be non-negative")
    out = 0.5 * (1.0 + np.exp(-2.0 * d))
    return out if out.ndim else float(out)


def switch_prob(d):
    """``1 - transition_prob(d)``, computed without cancellation."""
    d = np.asarray(d, dtype=float)
    if np.any(np.isnan(d)) or np.any(d < 0):
        raise InputError("genetic distance must be non-negative")
    out = -0.5 * np.expm1(-2.0 * d)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class GeneticMap:
    """Ordered biallelic sites with physical and genetic (Morgan) positions.

    Chromosomes occupy contiguous index ranges.  Use
    :meth:`from_centimorgans` for map files, which carry cM.
    """

    site_ids: tuple
    chrom: np.ndarray
    position: np.ndarray
    morgans: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "site_ids", tuple(str(s) for s in self.site_ids))
        object.__setattr__(self, "chrom", np.asarray(self.chrom, dtype=np.int64))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.int64))
        object.__setattr__(self, "morgans", np.asarray(self.morgans, dtype=float))
        p = len(self.site_ids)
        if not (self.chrom.shape == self.position.shape == self.morgans.shape == (p,)):
            raise InputError("map columns have different lengths")
        if p == 0:
            raise InputError("genetic map has no sites")
        if len(set(self.site_ids)) != p:
            raise InputError("duplicate site ids in genetic map")
        starts = np.flatnonzero(np.diff(self.chrom) != 0) + 1
        seen = self.chrom[np.r_[0, starts]]
        if len(np.unique(seen)) != len(seen):
            raise InputError("sites of a chromosome must be contiguous in the map")
        same = self.chrom[1:] == self.chrom[:-1]
        if np.any(np.diff(self.morgans)[same] < 0):
            raise InputError("genetic positions decrease within a chromosome")
        if np.any(np.diff(self.position)[same] < 0):
            raise InputError("physical positions decrease within a chromosome")
        if not np.all(np.isfinite(self.morgans)):
            raise InputError("genetic positions must be finite")

    @classmethod
    def from_centimorgans(cls, site_ids, chrom, position, cm) -> "GeneticMap":
        return cls(site_ids, chrom, position, np.asarray(cm, dtype=float) / 100.0)

    @classmethod
    def uniform(
        cls, p: int, length: float, chrom: int = 1, bp_per_morgan: float = 1e8
    ) -> "GeneticMap":
        """Evenly spaced sites spanning ``length`` Morgans on one chromosome."""
        morgans = np.linspace(0.0, length, p)
        position = np.round(morgans * bp_per_morgan).astype(np.int64) + 1
        ids = [f"{chrom}:{bp}" for bp in position]
        if len(set(ids)) != p:
            ids = [f"snp{chrom}_{j}" for j in range(p)]
        return cls(ids, np.full(p, chrom), position, morgans)

    @property
    def p(self) -> int:
        return len(self.site_ids)

    def __len__(self) -> int:
        return self.p

    @property
    def centimorgans(self) -> np.ndarray:
        return self.morgans * 100.0

    @property
    def chromosomes(self) -> dict:
        """``chrom -> (start, stop)`` half-open index ranges, in map order."""
        bounds = np.r_[0, np.flatnonzero(np.diff(self.chrom) != 0) + 1, self.p]
        return {int(self.chrom[a]): (int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])}

    def chrom_range(self, chrom: int) -> tuple:
        try:
            return self.chromosomes[int(chrom)]
        except KeyError:
            raise InputError(f"chromosome {chrom} not in map") from None

    @property
    def distances(self) -> np.ndarray:
        """``d_j`` between site ``j-1`` and ``j``; ``inf`` at chromosome starts."""
        d = np.empty(self.p)
        d[0] = np.inf
        d[1:] = np.diff(self.morgans)
        d[1:][self.chrom[1:] != self.chrom[:-1]] = np.inf
        return d

    def subset(self, indices) -> "GeneticMap":
        idx = np.asarray(indices, dtype=np.int64)
        return GeneticMap(
            [self.site_ids[i] for i in idx], self.chrom[idx], self.position[idx], self.morgans[idx]
        )

    def index_of(self, site_id: str) -> int:
        try:
            return self.site_ids.index(site_id)
        except ValueError:
            raise InputError(f"unknown site id {site_id!r}") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeneticMap):
            return NotImplemented
        return (
            self.site_ids == other.site_ids
            and np.array_equal(self.chrom, other.chrom)
            and np.array_equal(self.position, other.position)
            and np.array_equal(self.morgans, other.morgans)
        )


@dataclass(frozen=True, eq=False)
class HaplotypePair:
    """The two phased haplotypes of a parent."""

    strand_a: np.ndarray
    strand_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.strand_a, dtype=np.uint8)
        b = np.asarray(self.strand_b, dtype=np.uint8)
        if a.shape != b.shape or a.ndim != 1:
            raise InputError("haplotype strands must be vectors of equal length")
        if np.any(a > 1) or np.any(b > 1):
            raise InputError("haplotype entries must be 0 or 1")
        object.__setattr__(self, "strand_a", a)
        object.__setattr__(self, "strand_b", b)

    def __array__(self, dtype=None, copy=None):
        out = np.stack([self.strand_a, self.strand_b])
        return out if dtype is None else out.astype(dtype)

    def __len__(self) -> int:
        return len(self.strand_a)


@dataclass(frozen=True)
class HmmParams:
    """Meiosis model parameters; ``epsilon`` is the de novo mutation rate."""

    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 0.5:
            raise InputError("epsilon must lie in [0, 0.5)")


@dataclass
class WeightTable:
    """Scaled forward/backward weights.

    ``forward[..., j, u]`` is alpha_j(u) divided by ``exp(cumsum(forward_log_scale)[j])``
    and ``backward[..., j, u]`` is beta_j(u) divided by
    ``exp(sum(backward_log_scale[j:]))``.
    """

    forward: np.ndarray
    forward_log_scale: np.ndarray
    backward: np.ndarray
    backward_log_scale: np.ndarray

    def loglik(self) -> np.ndarray:
        return self.forward_log_scale.sum(axis=-1)

    def log_forward(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.forward) + np.cumsum(self.forward_log_scale, axis=-1)[..., None]

    def log_backward(self) -> np.ndarray:
        tail = np.cumsum(self.backward_log_scale[..., ::-1], axis=-1)[..., ::-1]
        with np.errstate(divide="ignore"):
            return np.log(self.backward) + tail[..., None]

    def posterior(self) -> np.ndarray:
        """``P(U_j = u | data)`` with shape ``(..., p, 2)``."""
        w = self.forward * self.backward
        return w / w.sum(axis=-1, keepdims=True)


def _as_distances(gmap) -> np.ndarray:
    if isinstance(gmap, GeneticMap):
        return gmap.distances
    d = np.asarray(gmap, dtype=float)
    if d.ndim != 1 or np.any(np.isnan(d)) or np.any(d < 0):
        raise InputError("distances must be a non-negative vector")
    return d


def subset_distances(gmap, sites) -> np.ndarray:
    """Distances of the chain restricted to ``sites`` (sorted indices).

    The Haldane chain marginalises exactly onto any subset of sites with
    summed distances; ``inf`` marks the first kept site of each chromosome.
    """
    d = _as_distances(gmap)
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size and (np.any(np.diff(sites) <= 0) or sites[0] < 0 or sites[-1] >= len(d)):
        raise InputError("sites must be sorted, distinct and inside the map")
    chrom_id = np.cumsum(~np.isfinite(d))
    cum = np.cumsum(np.where(np.isfinite(d), d, 0.0))
    out = np.empty(len(sites))
    if len(sites):
        out[0] = np.inf
        out[1:] = np.diff(cum[sites])
        out[1:][np.diff(chrom_id[sites]) != 0] = np.inf
    return out


def _as_parents(parents) -> np.ndarray:
    par = np.asarray(parents)
    if par.ndim < 2 or par.shape[-2] != 2:
        raise InputError("parents must have shape (..., 2, p)")
    return par.astype(np.uint8, copy=False)


def _check(haplotype, parents, d):
    hap = np.asarray(haplotype, dtype=np.uint8)
    par = _as_parents(parents)
    if hap.shape[-1] != par.shape[-1] or hap.shape[-1] != len(d):
        raise InputError(
            f"length mismatch: haplotype {hap.shape[-1]}, parents {par.shape[-1]}, map {len(d)}"
        )
    if hap.shape[:-1] != par.shape[:-2]:
        raise InputError("haplotype and parents batch shapes differ")
    return hap, par


def emission_probs(haplotype, parents, epsilon: float) -> np.ndarray:
    """``P(X_j = x_j | U_j = u)`` with shape ``(..., p, 2)``."""
    par = _as_parents(parents)
    match = par == np.asarray(haplotype, dtype=np.uint8)[..., None, :]
    em = np.where(match, 1.0 - epsilon, epsilon)
    return np.moveaxis(em, -2, -1)


@njit(cache=True)
def _forward_kernel(em, stay):
    n, p, _ = em.shape
    alpha = np.empty((n, p, 2))
    logc = np.empty((n, p))
    for i in range(n):
        a0 = 0.5 * em[i, 0, 0]
        a1 = 0.5 * em[i, 0, 1]
        c = a0 + a1
        if c > 0:
            a0 /= c
            a1 /= c
            logc[i, 0] = np.log(c)
        else:
            logc[i, 0] = -np.inf
        alpha[i, 0, 0] = a0
        alpha[i, 0, 1] = a1
        for j in range(1, p):
            s = stay[j]
            b0 = (s * a0 + (1.0 - s) * a1) * em[i, j, 0]
            b1 = (s * a1 + (1.0 - s) * a0) * em[i, j, 1]
            c = b0 + b1
            if c > 0:
                a0 = b0 / c
                a1 = b1 / c
                logc[i, j] = np.log(c)
            else:
                a0 = 0.0
                a1 = 0.0
                logc[i, j] = -np.inf
            alpha[i, j, 0] = a0
            alpha[i, j, 1] = a1
    return alpha, logc


@njit(cache=True)
def _backward_kernel(em, stay):
    n, p, _ = em.shape
    beta = np.empty((n, p, 2))
    logc = np.zeros((n, p))
    for i in range(n):
        b0 = 1.0
        b1 = 1.0
        beta[i, p - 1, 0] = 1.0
        beta[i, p - 1, 1] = 1.0
        for j in range(p - 2, -1, -1):
            s = stay[j + 1]
            e0 = em[i, j + 1, 0] * b0
            e1 = em[i, j + 1, 1] * b1
            c0 = s * e0 + (1.0 - s) * e1
            c1 = s * e1 + (1.0 - s) * e0
            c = c0 + c1
            if c > 0:
                b0 = c0 / c
                b1 = c1 / c
                logc[i, j] = np.log(c)
            else:
                b0 = 0.0
                b1 = 0.0
                logc[i, j] = -np.inf
            beta[i, j, 0] = b0
            beta[i, j, 1] = b1
    return beta, logc


def compute_fb_weights(haplotype, parents, gmap, params: HmmParams) -> WeightTable:
    """Forward-backward weights of ``haplotype`` under the meiosis HMM.

    Weights are renormalised at every site and the log normalisers are kept,
    so likelihoods and posteriors survive chromosomes of any length.

    Raises
    ------
    DegenerateEvidenceError
        If some haplotype has zero likelihood (only possible when epsilon is 0).
    """
    d = _as_distances(gmap)
    hap, par = _check(haplotype, parents, d)
    batch = hap.shape[:-1]
    p = hap.shape[-1]
    em = emission_probs(hap, par, params.epsilon).reshape(-1, p, 2)
    stay = transition_prob(d)
    alpha, flog = _forward_kernel(em, stay)
    bad = ~np.isfinite(flog).all(axis=1)
    if bad.any():
        rows = np.flatnonzero(bad)
        raise DegenerateEvidenceError(
            f"{len(rows)} haplotype(s) have zero likelihood under epsilon={params.epsilon}; "
            "the offspring alleles contradict the parental strands",
            rows=rows,
        )
    beta, blog = _backward_kernel(em, stay)
    return WeightTable(
        alpha.reshape(*batch, p, 2),
        flog.reshape(*batch, p),
        beta.reshape(*batch, p, 2),
        blog.reshape(*batch, p),
    )


def _mutate(alleles: np.ndarray, epsilon: float, gen: np.random.Generator) -> np.ndarray:
    """Flip each entry independently with probability ``epsilon`` (in place)."""
    if epsilon <= 0 or alleles.size == 0:
        return alleles
    k = gen.binomial(alleles.size, epsilon)
    if k:
        flat = alleles.reshape(-1)
        hit = gen.choice(alleles.size, size=k, replace=False)
        flat[hit] ^= 1
    return alleles


def _emit(parents: np.ndarray, states: np.ndarray, epsilon: float, gen) -> np.ndarray:
    """Draw alleles ``M^{U_j}_j`` with mutation; parents broadcast against states."""
    a = parents[..., 0, :]
    b = parents[..., 1, :]
    out = np.where(states.astype(bool), b, a).astype(np.uint8)
    return _mutate(out, epsilon, gen)


def _crossover_states(d: np.ndarray, n_hap: int, gen: np.random.Generator) -> np.ndarray:
    """Ancestry paths for ``n_hap`` independent meioses under Haldane's model.

    Crossovers are drawn as a Poisson process on each chromosome; the state
    flips at site ``j`` iff an odd number fall in ``(G_{j-1}, G_j]``, which
    is the per-site flip law ``1 - transition_prob(d_j)``.
    """
    p = len(d)
    states = np.zeros((n_hap, p), dtype=np.uint8)
    starts = np.flatnonzero(~np.isfinite(d))
    if len(starts) == 0 or starts[0] != 0:
        starts = np.r_[0, starts]
    stops = np.r_[starts[1:], p]
    for a, b in zip(starts, stops):
        states[:, a] = gen.integers(0, 2, size=n_hap, dtype=np.uint8)
        if b - a < 2:
            continue
        cum = np.r_[0.0, np.cumsum(d[a + 1 : b])]
        length = cum[-1]
        counts = gen.poisson(length, size=n_hap) if length > 0 else np.zeros(n_hap, np.int64)
        total = int(counts.sum())
        if total:
            rows = np.repeat(np.arange(n_hap), counts)
            pos = gen.random(total) * length
            site = np.searchsorted(cum, pos, side="left")
            site = np.clip(site, 1, b - a - 1) + a
            np.bitwise_xor.at(states, (rows, site), np.uint8(1))
        np.bitwise_xor.accumulate(states[:, a:b], axis=1, out=states[:, a:b])
    return states


def sample_global_twin(parents, gmap, params: HmmParams, rng, size=None):
    """Draw offspring haplotypes from the unconditional meiosis law.

    Parameters
    ----------
    parents : array_like, shape ``(..., 2, p)`` or HaplotypePair
    gmap : GeneticMap or distance vector
    params : HmmParams
    rng : numpy Generator or seed
    size : int or tuple, optional
        Extra leading replicate dimensions.

    Returns
    -------
    haplotype, ancestry : uint8 arrays of shape ``size + parents.shape[:-2] + (p,)``
    """
    d = _as_distances(gmap)
    par = _as_parents(parents)
    if par.shape[-1] != len(d):
        raise InputError(f"length mismatch: parents {par.shape[-1]}, map {len(d)}")
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    size = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    shape = size + par.shape[:-2]
    n_hap = int(np.prod(shape, dtype=np.int64))
    states = _crossover_states(d, n_hap, gen).reshape(*shape, len(d))
    return _emit(par, states, params.epsilon, gen), states


@njit(cache=True)
def _posterior_path_kernel(em, beta, stay, unif):
    n, p, _ = em.shape
    out = np.empty((n, p), dtype=np.uint8)
    for i in range(n):
        w0 = 0.5 * em[i, 0, 0] * beta[i, 0, 0]
        w1 = 0.5 * em[i, 0, 1] * beta[i, 0, 1]
        u = 1 if unif[i, 0] * (w0 + w1) >= w0 else 0
        out[i, 0] = u
        for j in range(1, p):
            s = stay[j]
            t0 = s if u == 0 else 1.0 - s
            w0 = t0 * em[i, j, 0] * beta[i, j, 0]
            w1 = (1.0 - t0) * em[i, j, 1] * beta[i, j, 1]
            u = 1 if unif[i, j] * (w0 + w1) >= w0 else 0
            out[i, j] = u
    return out


def sample_ancestry_posterior(haplotype, parents, gmap, params: HmmParams, rng, weights=None):
    """Draw ``U`` from its posterior given the offspring haplotype and parents.

    Sites are visited left to right with probabilities
    ``T(u_{j-1}, u) e_j(u) beta_j(u)``; ``weights`` may be passed to reuse a
    forward-backward pass.
    """
    d = _as_distances(gmap)
    hap, par = _check(haplotype, parents, d)
    if weights is None:
        weights = compute_fb_weights(hap, par, d, params)
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    p = hap.shape[-1]
    em = emission_probs(hap, par, params.epsilon).reshape(-1, p, 2)
    beta = weights.backward.reshape(-1, p, 2)
    unif = gen.random(em.shape[:2])
    path = _posterior_path_kernel(em, beta, transition_prob(d), unif)
    return path.reshape(hap.shape)


def _chrom_bounds(d: np.ndarray, lo: int, hi: int) -> tuple:
    """Chromosome index range containing ``[lo, hi]`` (inclusive group)."""
    if not 0 <= lo <= hi < len(d):
        raise InputError(f"group [{lo}, {hi}] outside 0..{len(d) - 1}")
    inner = d[lo + 1 : hi + 1]
    if not np.all(np.isfinite(inner)):
        raise InputError(f"group [{lo}, {hi}] spans a chromosome boundary")
    starts = np.flatnonzero(~np.isfinite(d))
    c0 = int(starts[starts <= lo].max()) if np.any(starts <= lo) else 0
    later = starts[starts > hi]
    c1 = int(later.min()) if len(later) else len(d)
    return c0, c1


@njit(cache=True)
def _bridge_kernel(left, beta_end, stay, stay_to_end, unif):
    """Sample U over a group given the left message and beta at the group end."""
    nb, n, g = unif.shape
    out = np.empty((nb, n, g), dtype=np.uint8)
    for i in range(n):
        r0 = beta_end[i, 0]
        r1 = beta_end[i, 1]
        for k in range(nb):
            s = stay_to_end[0]
            h0 = s * r0 + (1.0 - s) * r1
            h1 = s * r1 + (1.0 - s) * r0
            w0 = left[i, 0] * h0
            w1 = left[i, 1] * h1
            u = 1 if unif[k, i, 0] * (w0 + w1) >= w0 else 0
            out[k, i, 0] = u
            for j in range(1, g):
                s = stay_to_end[j]
                h0 = s * r0 + (1.0 - s) * r1
                h1 = s * r1 + (1.0 - s) * r0
                t0 = stay[j] if u == 0 else 1.0 - stay[j]
                w0 = t0 * h0
                w1 = (1.0 - t0) * h1
                u = 1 if unif[k, i, j] * (w0 + w1) >= w0 else 0
                out[k, i, j] = u
    return out


def sample_local_twin(
    haplotype, parents, gmap, params: HmmParams, group, rng, size=None, weights=None,
    sites=None, return_ancestry=False,
):
    """Resample the alleles of ``group`` given everything outside it.

    Draws ``X_g | X_{-g}, parents`` exactly: the ancestry state entering the
    group is weighted by the forward message from the left, each state inside
    is weighted by the probability of the data to the right of the group
    (through ``beta`` at the group's last site), and alleles are re-emitted.

    ``group`` is an inclusive ``(start, end)`` index pair.  Returns the new
    segment of shape ``size + batch + (end - start + 1,)``; sites outside the
    group are never touched.  ``sites`` (sorted indices inside the group)
    restricts the draw to those sites; their joint law is the marginal of the
    full-group draw.
    """
    d = _as_distances(gmap)
    hap, par = _check(haplotype, parents, d)
    lo, hi = int(group[0]), int(group[1])
    c0, _ = _chrom_bounds(d, lo, hi)
    if sites is None:
        sites = np.arange(lo, hi + 1)
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size == 0 or sites[0] < lo or sites[-1] > hi or np.any(np.diff(sites) <= 0):
        raise InputError("sites must be sorted, distinct and inside the group")
    if weights is None:
        weights = compute_fb_weights(hap, par, d, params)
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    size = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    batch = hap.shape[:-1]
    p = hap.shape[-1]

    # genetic position relative to the group start
    cum = np.r_[0.0, np.cumsum(d[lo + 1 : hi + 1])]
    pos = cum[sites - lo]
    fwd = weights.forward.reshape(-1, p, 2)
    if lo == c0:
        left = np.full((fwd.shape[0], 2), 0.5)
    else:
        a = fwd[:, lo - 1]
        # carry the forward message from lo - 1 to the first requested site
        s = transition_prob(d[lo] + pos[0])
        left = np.stack([s * a[:, 0] + (1 - s) * a[:, 1], s * a[:, 1] + (1 - s) * a[:, 0]], axis=1)
    beta_end = weights.backward.reshape(-1, p, 2)[:, hi]
    stay = np.r_[1.0, transition_prob(np.diff(pos))]
    to_end = transition_prob(cum[-1] - pos)
    g = len(sites)
    nrep = int(np.prod(size, dtype=np.int64))
    unif = gen.random((nrep, fwd.shape[0], g))
    states = _bridge_kernel(left, beta_end, stay, to_end, unif)
    states = states.reshape(*size, *batch, g)
    seg = _emit(par[..., sites], states, params.epsilon, gen)
    return (seg, states) if return_ancestry else seg


def _odd_poisson(mean: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Poisson(``mean``) conditioned on an odd outcome, by inversion.

    Same law as redrawing until odd, without the ~1/mean expected retries
    for short groups.
    """
    mean = np.asarray(mean, dtype=float)
    if np.any(mean <= 0):
        raise InputError("an odd crossover count needs positive genetic length")
    u = gen.random(mean.shape)
    # P(m = k | odd) = mean^k / k! / sinh(mean), k = 1, 3, 5, ...
    big = mean > 700
    term = np.where(big, 0.0, np.divide(mean, np.sinh(np.minimum(mean, 700.0))))
    out = np.ones(mean.shape, dtype=np.int64)
    cdf = term.copy()
    k = 1
    todo = (u > cdf) & ~big
    while todo.any():
        term = term * mean * mean / ((k + 1) * (k + 2))
        k += 2
        cdf = cdf + term
        out[todo] = k
        todo &= u > cdf
        if k > 10_000:
            break
    if big.any():
        # far tail: plain rejection is efficient here
        idx = np.flatnonzero(big)
        draws = gen.poisson(mean[idx])
        while np.any(draws % 2 == 0):
            even = draws % 2 == 0
            draws[even] = gen.poisson(mean[idx][even])
        out[idx] = draws
    return out


def sample_modified_local_twin(
    boundary_states, parents, gmap, params: HmmParams, group, rng, point_weights="distance"
):
    """Resample a group whose boundary ancestry states differ.

    The crossover count is Poisson with mean equal to the group's genetic
    length, conditioned to be odd; crossover points are placed independently
    on the group's intervals and a site's state flips when an odd number of
    points land on its interval.  Alleles are then re-emitted with mutation.

    Parameters
    ----------
    boundary_states : array of shape ``(n, 2)``
        Ancestry at the group's first and last site for ``n`` haplotypes.
    parents : array of shape ``(n, 2, p)`` or ``(2, p)``
    point_weights : {"distance", "stay"}
        ``"distance"`` weights interval ``j`` by ``d_j`` (the exact bridge law
        of the chain).  ``"stay"`` weights it by ``transition_prob(d_j)``.

    Returns
    -------
    segment, ancestry : uint8 arrays of shape ``(n, g)``
    """
    d = _as_distances(gmap)
    par = _as_parents(parents)
    lo, hi = int(group[0]), int(group[1])
    _chrom_bounds(d, lo, hi)
    bs = np.atleast_2d(np.asarray(boundary_states, dtype=np.uint8))
    if bs.shape[-1] != 2:
        raise InputError("boundary_states must have shape (n, 2)")
    if np.any(bs[:, 0] == bs[:, 1]):
        raise ValueError(
            "boundary states are equal; the caller must copy the true segment instead"
        )
    if hi == lo:
        raise ValueError("a single-site group cannot have differing boundary states")
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = bs.shape[0]
    g = hi - lo + 1
    inner = d[lo + 1 : hi + 1]
    if point_weights == "distance":
        w = inner.copy()
    elif point_weights == "stay":
        w = transition_prob(inner)
    else:
        raise ValueError(f"unknown point_weights {point_weights!r}")
    if w.sum() <= 0:
        raise DegenerateEvidenceError("group has zero genetic length but differing boundary states")
    total = float(inner.sum())
    m = _odd_poisson(np.full(n, max(total, 1e-300)), gen)
    rows = np.repeat(np.arange(n), m)
    cdf = np.cumsum(w) / w.sum()
    cdf[-1] = 1.0
    interval = np.searchsorted(cdf, gen.random(len(rows)), side="right")
    flips = np.zeros((n, g), dtype=np.uint8)
    np.bitwise_xor.at(flips, (rows, interval + 1), np.uint8(1))
    flips[:, 0] = bs[:, 0]
    states = np.bitwise_xor.accumulate(flips, axis=1)
    seg = _emit(par[..., lo : hi + 1], states, params.epsilon, gen)
    return seg, states


def bridge_posterior(gmap, group, boundary_states) -> np.ndarray:
    """``P(U_j = b | U_start, U_end)`` for every site of ``group``.

    Returns shape ``(n, g)`` for ``boundary_states`` of shape ``(n, 2)``.
    """
    d = _as_distances(gmap)
    lo, hi = int(group[0]), int(group[1])
    _chrom_bounds(d, lo, hi)
    bs = np.atleast_2d(np.asarray(boundary_states, dtype=np.uint8))
    cum = np.r_[0.0, np.cumsum(d[lo + 1 : hi + 1])]
    s_left = transition_prob(cum)
    s_right = transition_prob(cum[-1] - cum)
    u0 = bs[:, :1].astype(bool)
    u1 = bs[:, 1:].astype(bool)
    # weight of state a (0) and b (1) at each site
    left_a = np.where(u0, 1 - s_left, s_left)
    left_b = np.where(u0, s_left, 1 - s_left)
    right_a = np.where(u1, 1 - s_right, s_right)
    right_b = np.where(u1, s_right, 1 - s_right)
    wa = left_a * right_a
    wb = left_b * right_b
    return wb / (wa + wb)


def posterior_mean_segment(parents, boundary_states, gmap, params: HmmParams, group) -> np.ndarray:
    """``E[X_j | parents, U_start, U_end]`` over ``group``, values in [0, 1]."""
    par = _as_parents(parents)
    lo, hi = int(group[0]), int(group[1])
    pb = bridge_posterior(gmap, (lo, hi), boundary_states)
    ma = par[..., 0, lo : hi + 1].astype(float)
    mb = par[..., 1, lo : hi + 1].astype(float)
    eps = params.epsilon
    pa = 1.0 - pb
    return (1 - eps) * (pa * ma + pb * mb) + eps * (pa * (1 - ma) + pb * (1 - mb))


def ancestry_labels(states: Sequence[int]) -> str:
    return "".join("ab"[int(u)] for u in states)
