"""Synthetic trio cohorts and phenotypes.

Founder haplotypes come from a first-order Markov copying model: along a
chromosome a latent uniform is kept with probability ``exp(-rate * d_j)``
and redrawn otherwise, and the allele is ``1`` when the latent value falls
below the site's allele frequency.  Marginal frequencies are exact and LD
decays with genetic distance at rate ``ld_rate`` (per Morgan).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps
from scipy.special import expit, logit

from .data import GroupPartition, TrioDataset
from .errors import InputError
from .hmm import GeneticMap, HmmParams, sample_global_twin
from .rng import PERMUTATION, PHENOTYPE, SIMULATION, as_keyed

HOMOGENEOUS = "homogeneous"
ADMIXED_F2 = "admixed-F2"


@dataclass
class PopulationModel:
    """Founder population: per-subpopulation allele frequencies ``(k, p)``."""

    freqs: np.ndarray
    gmap: GeneticMap
    ld_rate: float = 50.0
    design: str = HOMOGENEOUS
    n: int = 100

    def __post_init__(self):
        self.freqs = np.atleast_2d(np.asarray(self.freqs, dtype=float))
        if self.freqs.shape[1] != self.gmap.p:
            raise InputError("frequency vectors must have one entry per map site")
        if np.any(self.freqs <= 0) or np.any(self.freqs >= 1):
            raise InputError("allele frequencies must lie strictly inside (0, 1)")
        if self.design not in (HOMOGENEOUS, ADMIXED_F2):
            raise InputError(f"unknown population design {self.design!r}")
        if self.design == ADMIXED_F2 and self.freqs.shape[0] != 2:
            raise InputError("the admixed-F2 design needs exactly two subpopulations")
        if self.ld_rate < 0:
            raise InputError("LD decay rate must be non-negative")
        if self.n < 1:
            raise InputError("need at least one couple")


def random_frequencies(p: int, rng, n_pop: int = 1, low=0.05, high=0.5, divergence=0.0):
    """Site frequencies; with ``divergence > 0`` subpopulations drift apart
    (Balding-Nichols draws around a shared ancestral frequency)."""
    gen = as_keyed(rng).stream(SIMULATION, "freqs")
    anc = gen.uniform(low, high, size=p)
    if n_pop == 1 or divergence <= 0:
        return np.tile(anc, (n_pop, 1))
    a = anc * (1 - divergence) / divergence
    b = (1 - anc) * (1 - divergence) / divergence
    f = gen.beta(a, b, size=(n_pop, p))
    return np.clip(f, 0.01, 0.99)


def markov_haplotypes(freqs, gmap, ld_rate, n_hap, gen) -> np.ndarray:
    """``n_hap`` founder haplotypes from the Markov copying model."""
    freqs = np.asarray(freqs, dtype=float)
    d = gmap.distances if isinstance(gmap, GeneticMap) else np.asarray(gmap, dtype=float)
    p = len(d)
    keep = np.exp(-ld_rate * np.where(np.isfinite(d), d, np.inf))
    out = np.empty((n_hap, p), np.uint8)
    chunk = max(1, int(2e7 // max(p, 1)))
    for start in range(0, n_hap, chunk):
        m = min(chunk, n_hap - start)
        fresh = gen.random((m, p)) >= keep
        fresh[:, 0] = True
        idx = np.where(fresh, np.arange(p), 0)
        np.maximum.accumulate(idx, axis=1, out=idx)
        latent = gen.random((m, p))
        v = np.take_along_axis(latent, idx, axis=1)
        out[start : start + m] = v < freqs
    return out


@dataclass
class Founders:
    mothers: np.ndarray  # (n, 2, p)
    fathers: np.ndarray
    origin: Optional[np.ndarray] = None  # (n, 2, 2, p) subpopulation of each parental allele


def generate_founders(model: PopulationModel, params: HmmParams = HmmParams(), rng=None) -> Founders:
    """Parental haplotype pairs for ``model.n`` couples.

    ``admixed-F2``: every parent is the child of one founder from each
    subpopulation, so its strands are meiotic mosaics of two founder pairs.
    """
    keyed = as_keyed(rng)
    n, p = model.n, model.gmap.p
    if model.design == HOMOGENEOUS:
        gen = keyed.stream(SIMULATION, "founders")
        habs = markov_haplotypes(model.freqs[0], model.gmap, model.ld_rate, 4 * n, gen)
        habs = habs.reshape(n, 2, 2, p)
        return Founders(habs[:, 0], habs[:, 1])
    parents = np.empty((n, 2, 2, p), np.uint8)
    origin = np.empty((n, 2, 2, p), np.uint8)
    for pop in (0, 1):
        gen = keyed.stream(SIMULATION, "founders", pop)
        grand = markov_haplotypes(model.freqs[pop], model.gmap, model.ld_rate, 4 * n, gen)
        grand = grand.reshape(n, 2, 2, p)  # one founder couple-half per parent
        hap, _ = sample_global_twin(grand, model.gmap, params, keyed.stream(SIMULATION, "f1", pop))
        parents[:, :, pop] = hap
        origin[:, :, pop] = pop
    return Founders(parents[:, 0], parents[:, 1], origin)


def sample_offspring(mothers, fathers, gmap, params: HmmParams = HmmParams(), rng=None):
    """Transmitted haplotypes ``(x_m, x_f)`` and their ancestry paths."""
    keyed = as_keyed(rng)
    x_m, u_m = sample_global_twin(mothers, gmap, params, keyed.stream(SIMULATION, "offspring", 0))
    x_f, u_f = sample_global_twin(fathers, gmap, params, keyed.stream(SIMULATION, "offspring", 1))
    return x_m, x_f, u_m, u_f


def simulate_cohort(model: PopulationModel, params: HmmParams = HmmParams(), rng=None,
                    founders: Optional[Founders] = None) -> TrioDataset:
    """Founders plus one offspring per couple; the phenotype is left at zero."""
    keyed = as_keyed(rng)
    founders = founders or generate_founders(model, params, keyed.child("founders"))
    x_m, x_f, _, _ = sample_offspring(founders.mothers, founders.fathers, model.gmap, params, keyed.child("offspring"))
    n = founders.mothers.shape[0]
    return TrioDataset(
        x_m, x_f, founders.mothers, founders.fathers, np.ones(n, bool), np.ones(n, bool),
        np.zeros(n), model.gmap, params,
    )


def population_genotypes(model: PopulationModel, n: int, params: HmmParams = HmmParams(), rng=None):
    """Genotypes of ``n`` unrelated individuals from the same population
    (one offspring of each of ``n`` fresh couples)."""
    sub = PopulationModel(model.freqs, model.gmap, model.ld_rate, model.design, n)
    data = simulate_cohort(sub, params, rng)
    return data.genotypes


# ---------------------------------------------------------------- traits


@dataclass
class TraitModel:
    family: str
    beta: np.ndarray
    intercept: float = 0.0
    noise_sd: float = 1.0
    h2: Optional[float] = None
    prevalence: Optional[float] = None

    def __post_init__(self):
        if self.family not in ("logistic", "gaussian"):
            raise InputError(f"unknown trait family {self.family!r}")
        self.beta = np.asarray(self.beta, dtype=float)
        if self.prevalence is not None and not 0 < self.prevalence < 1:
            raise InputError("prevalence must lie in (0, 1)")
        if self.noise_sd < 0:
            raise InputError("noise scale must be non-negative")

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    def eta(self, genotypes) -> np.ndarray:
        G = np.asarray(genotypes)
        s = self.support
        return self.intercept + G[:, s].astype(float) @ self.beta[s]


def generate_binary_phenotype(genotypes, trait: TraitModel, rng=None) -> np.ndarray:
    """Independent draws from ``logit P(Y = 1) = b0 + beta' X``."""
    if trait.family != "logistic":
        raise InputError("binary phenotypes need the logistic family")
    gen = as_keyed(rng).stream(PHENOTYPE)
    pr = expit(trait.eta(genotypes))
    return (gen.random(pr.shape) < pr).astype(float)


def generate_continuous_phenotype(genotypes, trait: TraitModel, rng=None) -> np.ndarray:
    """``Y = b0 + beta' X + N(0, noise_sd^2)``."""
    if trait.family != "gaussian":
        raise InputError("continuous phenotypes need the gaussian family")
    gen = as_keyed(rng).stream(PHENOTYPE)
    eta = trait.eta(genotypes)
    return eta + trait.noise_sd * gen.standard_normal(eta.shape)


def generate_phenotype(genotypes, trait: TraitModel, rng=None) -> np.ndarray:
    if trait.family == "logistic":
        return generate_binary_phenotype(genotypes, trait, rng)
    return generate_continuous_phenotype(genotypes, trait, rng)


def liability_heritability(genotypes, trait: TraitModel) -> float:
    """Observed-scale variance ratio rescaled to the liability scale.

    ``var(Yhat) / var(Y) * Ybar (1 - Ybar) / phi(Phi^{-1}(Ybar))^2`` with
    ``Yhat = P(Y = 1 | X)`` from the model and averages over ``genotypes``.
    """
    if trait.family != "logistic":
        raise InputError("liability-scale heritability is defined for binary traits")
    yhat = expit(trait.eta(genotypes))
    return _liability(yhat)


def _liability(yhat) -> float:
    ybar = float(np.mean(yhat))
    if not 0 < ybar < 1:
        raise InputError("prevalence is 0 or 1; heritability undefined")
    var_y = ybar * (1 - ybar)
    dens = sps.norm.pdf(sps.norm.ppf(ybar))
    return float(np.var(yhat) / var_y * var_y / dens**2)


def _intercept_for(eta0, prevalence, tol=1e-12):
    """Intercept giving mean predicted probability ``prevalence`` (bisection)."""
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(expit(eta0 + mid)) < prevalence:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def calibrate_trait(genotypes, support, h2: float, prevalence: float = 0.5,
                    family: str = "logistic", signs=None, tol: float = 1e-4) -> TraitModel:
    """Equal-strength causal effects on ``support`` hitting (h2, prevalence).

    Logistic: inner bisection on the intercept for the prevalence, outer
    bisection on the common effect size for liability-scale h2, both
    evaluated on the supplied genotype sample.  Gaussian: unit effects and a
    noise scale giving ``var(beta'X) / var(Y) = h2``.
    """
    G = np.asarray(genotypes)
    p = G.shape[1]
    support = np.asarray(support, dtype=np.int64)
    if not 0 <= h2 < 1:
        raise InputError("target heritability must lie in [0, 1)")
    sgn = np.ones(len(support)) if signs is None else np.asarray(signs, dtype=float)
    unit = np.zeros(p)
    unit[support] = sgn
    if family == "gaussian":
        if h2 == 0:
            return TraitModel("gaussian", np.zeros(p), 0.0, 1.0, 0.0)
        if support.size == 0:
            raise InputError("a heritable trait needs at least one causal site")
        v = float(np.var(G[:, support].astype(float) @ sgn))
        if v == 0:
            raise InputError("causal sites do not vary in the sample")
        beta = unit / np.sqrt(v)
        return TraitModel("gaussian", beta, 0.0, float(np.sqrt((1 - h2) / h2)), h2)
    if not 0 < prevalence < 1:
        raise InputError("prevalence must lie in (0, 1)")
    if h2 == 0:
        return TraitModel("logistic", np.zeros(p), float(logit(prevalence)), h2=0.0, prevalence=prevalence)
    if support.size == 0:
        raise InputError("a heritable trait needs at least one causal site")
    score = G[:, support].astype(float) @ sgn

    def h2_at(a):
        b0 = _intercept_for(a * score, prevalence)
        return _liability(expit(b0 + a * score)), b0

    hi = 1.0
    while h2_at(hi)[0] < h2:
        hi *= 2
        if hi > 1e3:
            raise InputError(f"heritability {h2} is not reachable with {support.size} causal sites")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val, _ = h2_at(mid)
        if abs(val - h2) < tol:
            break
        if val < h2:
            lo = mid
        else:
            hi = mid
    a = mid
    _, b0 = h2_at(a)
    return TraitModel("logistic", unit * a, float(b0), h2=h2, prevalence=prevalence)


# ---------------------------------------------------------------- confounding example


def make_confounded_example() -> TrioDataset:
    """Eight trios in two subpopulations where a non-causal SNP tracks the trait.

    In subpopulation 1 the mother is homozygous for allele 1 and the father
    homozygous for 0 at the tested site (offspring genotype 1); in
    subpopulation 2 both parents are homozygous 0.  Every parent is
    homozygous everywhere, so offspring are fully determined by their parents.
    The phenotype is the subpopulation-1 indicator.  The tested site is
    index 2 of 5; mutation rate 0.
    """
    p = 5
    gmap = GeneticMap.from_centimorgans(
        [f"s{j + 1}" for j in range(p)], [1] * p, 1_000_000 * np.arange(1, p + 1), np.arange(p) * 1.0
    )
    base = np.array([0, 1, 0, 1, 1], np.uint8)
    n = 8
    mothers = np.zeros((n, 2, p), np.uint8)
    fathers = np.zeros((n, 2, p), np.uint8)
    y = np.zeros(n)
    for i in range(n):
        pop1 = i < 4
        m = base.copy()
        f = base.copy()
        m[2] = 1 if pop1 else 0
        f[2] = 0
        mothers[i] = m
        fathers[i] = f
        y[i] = 1.0 if pop1 else 0.0
    x_m = mothers[:, 0].copy()
    x_f = fathers[:, 0].copy()
    return TrioDataset(
        x_m, x_f, mothers, fathers, np.ones(n, bool), np.ones(n, bool), y, gmap, HmmParams(0.0),
        [f"subject{i + 1}" for i in range(n)],
    )


CONFOUNDED_SITE = 2


def permutation_test(x, y, K: Optional[int] = None, rng=None) -> float:
    """Label-permutation p-value for ``T = sum_i x_i 1{y_i = 1}``.

    ``K=None`` enumerates every distinct placement of the case labels
    (exact p-value); otherwise ``(1 + #{T_k >= T}) / (K + 1)`` over ``K``
    random permutations.
    """
    from itertools import combinations

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InputError("genotype column and phenotype differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("permutation test needs a binary phenotype")
    t = float(x @ y)
    n, m = len(y), int(y.sum())
    if m in (0, n):
        return 1.0
    if K is None:
        total = 0
        hit = 0
        for cases in combinations(range(n), m):
            total += 1
            if x[list(cases)].sum() >= t - 1e-12:
                hit += 1
        return hit / total
    gen = as_keyed(rng).stream(PERMUTATION)
    tk = np.array([x @ gen.permutation(y) for _ in range(K)])
    return float((1 + np.count_nonzero(tk >= t - 1e-12)) / (K + 1))


def conditional_correlation(founders: Founders, gmap, params, site: int, reps: int = 20, rng=None):
    """Absolute correlation between offspring genotype at ``site`` and every
    other site, conditional on the parents.

    Offspring are redrawn ``reps`` times from the same parents; genotypes are
    centred by their per-trio averages over the redraws before correlating.
    """
    keyed = as_keyed(rng)
    draws = []
    for r in range(reps):
        x_m, x_f, _, _ = sample_offspring(founders.mothers, founders.fathers, gmap, params, keyed.child(r))
        draws.append((x_m + x_f).astype(float))
    G = np.stack(draws)  # (reps, n, p)
    G -= G.mean(axis=0, keepdims=True)
    a = G[..., site].ravel()
    B = G.reshape(-1, G.shape[-1])
    num = a @ B
    den = np.sqrt((a @ a) * np.einsum("ij,ij->j", B, B))
    return np.abs(np.divide(num, den, out=np.zeros_like(num), where=den > 0))


def max_frequency_difference_site(freqs) -> int:
    freqs = np.atleast_2d(freqs)
    return int(np.argmax(np.abs(freqs[0] - freqs[1])))


def recombination_flag_count(data: TrioDataset, partition: GroupPartition, ancestry=None):
    """Number of (trio, side) pairs whose ancestry differs across each group's ends."""
    out = np.zeros(len(partition), np.int64)
    for s, u in (ancestry or {}).items():
        out += np.sum(u[:, partition.starts] != u[:, partition.ends], axis=0)
    return out
