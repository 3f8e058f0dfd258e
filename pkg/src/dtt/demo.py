"""Desk-scale replication of the admixed-cohort experiment.

Parents are first-generation admixed (one founder from each of two
subpopulations), so transmitted haplotypes carry long ancestry tracts and
per-site TDT p-values pick up linked sites far from the single causal site.
The local test with independent p-values, ordered by an external lasso fit
and combined with Selective SeqStep, is run on the same data.
"""

from __future__ import annotations

import numpy as np

from .data import GroupPartition
from .hmm import GeneticMap, HmmParams
from .lasso import fit_penalized
from .multitest import combine, false_discovery_proportion
from .rng import KeyedRng
from .simulate import (
    ADMIXED_F2,
    PopulationModel,
    calibrate_trait,
    generate_binary_phenotype,
    max_frequency_difference_site,
    population_genotypes,
    random_frequencies,
    simulate_cohort,
)
from .statistics import LossStatistic, tdt_analytic
from .twin import local_dtt_independent

MAP_BIN = 0.01  # Morgans
GWS = 5e-8


def admixed_demo(
    n=1000, p=500, morgans=0.5, h2=0.5, prevalence=0.2, K=99, group_bins=2, n_external=None,
    divergence=0.2, ld_rate=50.0, seed=0, cv_folds=5, alpha=0.2, c=0.5,
) -> dict:
    keyed = KeyedRng(seed)
    gmap = GeneticMap.uniform(p, morgans, chrom=1)
    freqs = random_frequencies(p, keyed.child("freqs"), 2, divergence=divergence)
    model = PopulationModel(freqs, gmap, ld_rate, ADMIXED_F2, n)
    params = HmmParams()
    data = simulate_cohort(model, params, keyed.child("cohort"))
    causal = max_frequency_difference_site(freqs)
    trait = calibrate_trait(data.genotypes, [causal], h2, prevalence)
    data = data.with_phenotype(generate_binary_phenotype(data.genotypes, trait, keyed.child("pheno")))

    tdt_p = np.asarray(tdt_analytic(data), dtype=float)
    bins = np.floor(gmap.morgans / MAP_BIN).astype(np.int64)
    rejected_sites = np.flatnonzero(tdt_p <= GWS)
    far = rejected_sites[np.abs(bins[rejected_sites] - bins[causal]) > 10]

    ext_n = 2 * n if n_external is None else n_external
    G_ext = population_genotypes(model, ext_n, params, keyed.child("external"))
    y_ext = generate_binary_phenotype(G_ext, trait, keyed.child("external-pheno"))
    fit = fit_penalized(G_ext, y_ext, "logistic", n_lambda=50, cv_folds=cv_folds, rng=keyed.child("fit"))

    width = group_bins * MAP_BIN
    edges = np.floor(gmap.morgans / width).astype(np.int64)
    cut = np.flatnonzero(np.diff(edges)) + 1
    partition = GroupPartition.from_intervals(list(zip(np.r_[0, cut], np.r_[cut, p] - 1)), gmap)
    table = local_dtt_independent(data, partition, LossStatistic(fit), K, keyed.child("ldtt"))
    res = combine(table, "seqstep", alpha, c)
    is_null = partition.group_of([causal])[0] != np.arange(len(partition))
    return {
        "gmap": gmap,
        "data": data,
        "causal": causal,
        "tdt_p": tdt_p,
        "tdt_rejections": int(rejected_sites.size),
        "tdt_far": int(far.size),
        "model": fit,
        "partition": partition,
        "table": table,
        "dtt_rejected": res.rejected,
        "dtt_false": int(np.sum(is_null[res.rejected])),
        "dtt_fdp": false_discovery_proportion(res.rejected, is_null),
    }


def fdr_replicate(
    n=1000, p=5000, morgans=2.0, n_groups=20, n_causal=10, h2=0.5, prevalence=0.5, K=99,
    n_external=5000, ld_rate=50.0, seed=0, cv_folds=5, n_lambda=50, method="accumulation",
    alpha=0.2, c=None,
) -> dict:
    """One replicate of the homogeneous-population FDR experiment.

    Groups are equal site-count blocks; a group is null when it holds no
    causal site.  The lasso is fit on an external sample from the same
    population and orders the groups for the combiner.
    """
    keyed = KeyedRng(seed)
    gmap = GeneticMap.uniform(p, morgans, chrom=1)
    model = PopulationModel(random_frequencies(p, keyed.child("freqs")), gmap, ld_rate, n=n)
    params = HmmParams()
    data = simulate_cohort(model, params, keyed.child("cohort"))
    causal = np.sort(keyed.stream("support").choice(p, size=n_causal, replace=False))
    G_ext = population_genotypes(model, n_external, params, keyed.child("external"))
    trait = calibrate_trait(np.vstack([data.genotypes, G_ext]), causal, h2, prevalence)
    data = data.with_phenotype(generate_binary_phenotype(data.genotypes, trait, keyed.child("pheno")))
    y_ext = generate_binary_phenotype(G_ext, trait, keyed.child("external-pheno"))
    fit = fit_penalized(G_ext, y_ext, "logistic", n_lambda=n_lambda, cv_folds=cv_folds, rng=keyed.child("fit"))

    partition = GroupPartition.by_count(gmap, n_groups)
    table = local_dtt_independent(data, partition, LossStatistic(fit), K, keyed.child("ldtt"))
    res = combine(table, method, alpha, c)
    is_null = np.ones(len(partition), bool)
    is_null[partition.group_of(causal)] = False
    return {
        "causal": causal,
        "model": fit,
        "partition": partition,
        "table": table,
        "is_null": is_null,
        "rejected": res.rejected,
        "false": int(np.sum(is_null[res.rejected])),
        "fdp": false_discovery_proportion(res.rejected, is_null),
    }
