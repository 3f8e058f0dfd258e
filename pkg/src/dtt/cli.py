"""Command-line interface (``dtt``).

Exit codes: 0 success, 2 usage, 3 input validation, 4 degenerate evidence.
"""

from __future__ import annotations

import argparse
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import io
from .data import GroupPartition, PValueTable
from .errors import DegenerateEvidenceError, InputError
from .hmm import GeneticMap, HmmParams
from .multitest import METHODS, combine_arrays
from .rng import KeyedRng
from .statistics import FittedModel, LossStatistic, TDTStatistic, group_weights, tdt_analytic

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_DEGENERATE = 0, 2, 3, 4


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


# ---------------------------------------------------------------- shared options


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed for all random streams")
    p.add_argument("--threads", type=int, default=1, help="worker threads for compiled kernels")
    p.add_argument("--manifest", type=Path, help="run manifest path (default: <out>.manifest.json)")


def _add_data(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--data", help="prefix of <prefix>.hap/.map.tsv/.pheno.tsv/.ped.tsv")
    g.add_argument("--haplotypes", type=Path)
    g.add_argument("--map", type=Path)
    g.add_argument("--phenotype", type=Path)
    g.add_argument("--pedigree", type=Path)
    g.add_argument("--epsilon", type=float, default=1e-8, help="per-site mutation probability")


def _add_test(p: argparse.ArgumentParser, groups: bool) -> None:
    p.add_argument("--stat", choices=("tdt", "loss"), default="tdt")
    p.add_argument("--model", type=Path, help="fitted model file (required for --stat loss)")
    p.add_argument("-K", type=int, default=99, help="number of digital twins")
    p.add_argument("--tie-policy", choices=("randomized", "deterministic"), default="randomized")
    p.add_argument("--out", type=Path, required=True, help="result table (TSV)")
    p.add_argument("--manhattan", type=Path, help="also write a Manhattan CSV")
    if groups:
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--groups", type=Path, help="groups file (group_id, chrom, start_bp, end_bp)")
        g.add_argument("--group-size", type=float, help="split chromosomes into windows of this many bp")


def _dataset_files(args):
    if args.data:
        paths = io.dataset_paths(args.data)
        for key in paths:
            if getattr(args, key) is not None:
                paths[key] = getattr(args, key)
        return paths
    missing = [k for k in ("haplotypes", "map", "phenotype", "pedigree") if getattr(args, k) is None]
    if missing:
        raise _Usage("give --data PREFIX or all of --haplotypes --map --phenotype --pedigree")
    return {k: getattr(args, k) for k in ("haplotypes", "map", "phenotype", "pedigree")}


def _load(args):
    files = _dataset_files(args)
    data = io.load_dataset(
        files["haplotypes"], files["map"], files["phenotype"], files["pedigree"], HmmParams(args.epsilon)
    )
    inputs = list(files.values()) + [io.index_path(files["haplotypes"])]
    return data, inputs


def _statistic(args, data):
    if args.stat == "tdt":
        return TDTStatistic(), []
    if args.model is None:
        raise _Usage("--stat loss needs --model")
    model = FittedModel.load(args.model)
    if model.site_ids is not None and list(model.site_ids) != list(data.gmap.site_ids):
        raise InputError("model site ids do not match the map", file=args.model)
    return LossStatistic(model), [args.model]


class _Usage(Exception):
    pass


def _finish(args, command, params, inputs, outputs):
    manifest = args.manifest or Path(str(outputs[0]) + ".manifest.json")
    params = dict(params, seed=args.seed)
    io.write_manifest(manifest, command, sys.argv[1:] if args._argv is None else args._argv,
                      params, inputs, outputs, _version())


def _write_table(args, table: PValueTable, gmap: GeneticMap, procedure="none", rejected=None):
    rows = io.result_rows(table, gmap, rejected, procedure)
    io.write_results(rows, args.out)
    outs = [args.out]
    if args.manhattan:
        part = table.partition
        mid = (gmap.position[part.starts] + gmap.position[part.ends]) // 2
        io.write_manhattan_csv(part.chrom, mid, table.pvalues, args.manhattan)
        outs.append(args.manhattan)
    return outs


def _test_params(args):
    return {"stat": args.stat, "K": args.K, "tie_policy": args.tie_policy, "epsilon": args.epsilon}


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    from .simulate import (
        PopulationModel, calibrate_trait, generate_phenotype, population_genotypes,
        random_frequencies, simulate_cohort, max_frequency_difference_site,
    )

    if args.n < 1 or args.p < 2:
        raise InputError("need --n >= 1 and --p >= 2")
    keyed = KeyedRng(args.seed)
    gmap = GeneticMap.uniform(args.p, args.morgans, chrom=1)
    n_pop = 2 if args.pop_model == "admixed-F2" else 1
    freqs = random_frequencies(args.p, keyed.child("freqs"), n_pop, divergence=args.divergence)
    model = PopulationModel(freqs, gmap, args.ld_rate, args.pop_model, args.n)
    params = HmmParams(args.epsilon)
    data = simulate_cohort(model, params, keyed.child("cohort"))
    if args.pop_model == "admixed-F2":
        support = np.array([max_frequency_difference_site(freqs)])[: args.n_causal]
    else:
        support = np.sort(keyed.stream("support").choice(args.p, size=min(args.n_causal, args.p), replace=False))
    ext = population_genotypes(model, max(args.n_external, 1), params, keyed.child("external"))
    ref = np.vstack([data.genotypes, ext])
    trait = calibrate_trait(ref, support, args.h2, args.prevalence, args.family)
    data = data.with_phenotype(generate_phenotype(data.genotypes, trait, keyed.child("trio-pheno")))
    paths = io.save_dataset(data, args.out, packed=args.packed)
    truth = Path(str(args.out) + ".truth.tsv")
    io._write_table(truth, ["site_id", "beta"], (
        [("(intercept)", repr(trait.intercept))]
        + [(gmap.site_ids[j], repr(float(trait.beta[j]))) for j in trait.support]
    ))
    outs = list(paths.values()) + [io.index_path(paths["haplotypes"]), truth]
    if args.n_external > 0:
        gw = Path(str(args.out) + ".gwas.tsv")
        y_ext = generate_phenotype(ext, trait, keyed.child("external-pheno"))
        io.write_gwas(ext, y_ext, gmap.site_ids, gw)
        outs.append(gw)
    args.manifest = args.manifest or Path(str(args.out) + ".manifest.json")
    _finish(args, "simulate", {k: v for k, v in vars(args).items() if not k.startswith("_") and k != "func"}, [], outs)
    print(f"wrote {len(outs)} files with prefix {args.out}")


def cmd_fit(args):
    from .lasso import fit_penalized

    G, y, sites = io.read_gwas(args.gwas)
    model = fit_penalized(
        G, y, args.family, n_lambda=args.n_lambda, lambda_min_ratio=args.lambda_min_ratio,
        cv_folds=args.folds, rng=KeyedRng(args.seed), site_ids=sites,
    )
    model.save(args.out)
    _finish(args, "fit", {"family": args.family, "folds": args.folds, "n_lambda": args.n_lambda,
                          "lambda_min_ratio": args.lambda_min_ratio}, [args.gwas], [args.out])
    print(f"lambda={model.lam:.6g} nonzero={model.support.size} cv_deviance={model.cv_score:.6g}")


def cmd_dtt(args):
    from .twin import digital_twin_test

    data, inputs = _load(args)
    stat, extra = _statistic(args, data)
    chroms = sorted(data.gmap.chromosomes) if args.chrom is None else [args.chrom]
    keyed = KeyedRng(args.seed)
    pvals = []
    for c in chroms:
        if c not in data.gmap.chromosomes:
            raise InputError(f"chromosome {c} not in the map")
        pvals.append(digital_twin_test(data, c, stat, args.K, keyed, args.tie_policy))
    part = GroupPartition.from_intervals(
        [(data.gmap.chrom_range(c)[0], data.gmap.chrom_range(c)[1] - 1) for c in chroms], data.gmap,
        [f"chr{c}" for c in chroms],
    )
    w = group_weights(stat.model, part) if args.stat == "loss" else np.zeros(len(part))
    outs = _write_table(args, PValueTable(part, pvals, w, args.K), data.gmap)
    _finish(args, "dtt", dict(_test_params(args), chrom=args.chrom), inputs + extra, outs)
    for c, p in zip(chroms, pvals):
        print(f"chr{c}\tp={io.format_p(p)}")


def _grouped(args, runner, command):
    data, inputs = _load(args)
    stat, extra = _statistic(args, data)
    part = io.load_groups(data.gmap, args.groups, args.group_size)
    if args.groups:
        inputs.append(args.groups)
    table = runner(data, part, stat, KeyedRng(args.seed))
    outs = _write_table(args, table, data.gmap)
    params = dict(_test_params(args), groups=str(args.groups), group_size=args.group_size)
    _finish(args, command, params, inputs + extra, outs)
    print(f"{len(part)} groups; min p={io.format_p(table.pvalues.min())}")


def cmd_ldtt(args):
    from .twin import local_dtt_partition

    _grouped(args, lambda d, g, s, r: local_dtt_partition(d, g, s, args.K, r, args.tie_policy), "ldtt")


def cmd_ldtt_indep(args):
    from .twin import local_dtt_independent

    _grouped(
        args,
        lambda d, g, s, r: local_dtt_independent(d, g, s, args.K, r, args.tie_policy, point_weights=args.point_weights),
        "ldtt-indep",
    )


def cmd_tdt(args):
    data, inputs = _load(args)
    p = np.asarray(tdt_analytic(data), dtype=float)
    gmap = data.gmap
    part = GroupPartition(np.arange(gmap.p), np.arange(gmap.p), gmap.chrom, tuple(gmap.site_ids))
    p = np.clip(p, np.finfo(float).tiny, 1.0)
    outs = _write_table(args, PValueTable(part, p, np.zeros(gmap.p), 0), gmap)
    _finish(args, "tdt", {"epsilon": args.epsilon}, inputs, outs)
    print(f"{int(np.sum(p <= 5e-8))} sites below 5e-8")


def cmd_combine(args):
    rows = io.read_results(args.table)
    if not rows:
        raise InputError("result table is empty", file=args.table)
    rows = sorted(rows, key=lambda r: (r.chrom, r.start_bp))
    res = combine_arrays([r.p_value for r in rows], [r.weight for r in rows], args.method, args.alpha, args.c)
    mask = res.mask
    for r, m in zip(rows, mask):
        r.rejected = bool(m)
        r.procedure = f"{args.method}@{args.alpha:g}"
    io.write_results(rows, args.out)
    _finish(args, "combine", {"method": args.method, "alpha": args.alpha, "c": args.c,
                              "guarantee": res.guarantee}, [args.table], [args.out])
    print(f"{len(res)} of {len(rows)} rejected ({args.method}, alpha={args.alpha:g}, {res.guarantee})")


def cmd_demo_confounded(args):
    from .simulate import CONFOUNDED_SITE, make_confounded_example, permutation_test
    from .twin import GlobalTwinSampler, digital_twin_test

    data = make_confounded_example()
    keyed = KeyedRng(args.seed)
    j = CONFOUNDED_SITE
    x = data.genotypes[:, j]
    y = data.phenotype
    x_perm = keyed.stream("display").permutation(x)
    x_twin = GlobalTwinSampler(data, keyed.child("display")).block(1, np.array([j]), 0, 1)[0, :, 0]
    res = digital_twin_test(data, 1, TDTStatistic(), args.K, keyed, "deterministic", return_details=True)
    p_perm = permutation_test(x, y)
    print("subject\tpopulation\tY\tX_j\tX_j*\tX_j~")
    for i in range(data.n):
        pop = 1 if i < 4 else 2
        print(f"{i + 1}\t{pop}\t{int(y[i])}\t{int(x[i])}\t{int(x_perm[i])}\t{int(x_twin[i])}")
    print(f"permutation p (exhaustive) = {io.format_p(p_perm)}")
    print(f"digital twin p (K={args.K}) = {io.format_p(res.p_value)}")
    if args.out:
        part = GroupPartition.from_intervals([(j, j)], data.gmap, ["site_j"])
        table = PValueTable(part, [res.p_value], [0.0], args.K)
        io.write_results(io.result_rows(table, data.gmap, procedure="dtt"), args.out)
        _finish(args, "demo-confounded", {"K": args.K, "permutation_p": p_perm, "dtt_p": res.p_value}, [], [args.out])
    return p_perm, res.p_value


def cmd_demo_admixed(args):
    from .demo import admixed_demo

    out = admixed_demo(n=args.n, p=args.p, h2=args.h2, prevalence=args.prevalence, K=args.K,
                       group_bins=args.group_bins, seed=args.seed)
    print(f"causal site {out['causal']}; TDT rejections below 5e-8: {out['tdt_rejections']}, "
          f"of which >10 map-bins from the causal site: {out['tdt_far']}")
    print(f"ldtt-indep + SeqStep (c=0.5, alpha=0.2): {len(out['dtt_rejected'])} groups rejected, "
          f"false discoveries: {out['dtt_false']}")
    if args.out:
        io.write_results(io.result_rows(out["table"], out["gmap"], out["dtt_rejected"], "seqstep@0.2"), args.out)
        outs = [args.out]
        if args.manhattan:
            io.write_manhattan_csv(out["gmap"].chrom, out["gmap"].position, out["tdt_p"], args.manhattan)
            outs.append(args.manhattan)
        _finish(args, "demo-admixed", {k: v for k, v in vars(args).items() if k in
                                       ("n", "p", "h2", "prevalence", "K", "group_bins")}, [], outs)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtt", description="Digital twin tests for trio data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a trio cohort, trait and external GWAS")
    p.add_argument("--n", type=int, required=True, help="number of trios")
    p.add_argument("--p", type=int, required=True, help="number of sites")
    p.add_argument("--pop-model", choices=("homogeneous", "admixed-F2"), default="homogeneous")
    p.add_argument("--h2", type=float, default=0.0)
    p.add_argument("--prevalence", type=float, default=0.5)
    p.add_argument("--family", choices=("logistic", "gaussian"), default="logistic")
    p.add_argument("--n-causal", type=int, default=10)
    p.add_argument("--n-external", type=int, default=0, help="size of the external GWAS sample")
    p.add_argument("--morgans", type=float, default=1.0, help="chromosome length in Morgans")
    p.add_argument("--ld-rate", type=float, default=50.0)
    p.add_argument("--divergence", type=float, default=0.1, help="subpopulation drift (admixed-F2)")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--packed", action="store_true", help="write bit-packed haplotypes")
    p.add_argument("--out", required=True, help="output prefix")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="cross-validated lasso on an external GWAS table")
    p.add_argument("--gwas", type=Path, required=True)
    p.add_argument("--family", choices=("logistic", "gaussian"), default="logistic")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("dtt", help="full-chromosome digital twin test")
    _add_data(p)
    p.add_argument("--chrom", type=int, help="chromosome label (default: every chromosome)")
    _add_test(p, groups=False)
    _add_common(p)
    p.set_defaults(func=cmd_dtt)

    p = sub.add_parser("ldtt", help="local digital twin test per group")
    _add_data(p)
    _add_test(p, groups=True)
    _add_common(p)
    p.set_defaults(func=cmd_ldtt)

    p = sub.add_parser("ldtt-indep", help="local test with jointly independent group p-values")
    _add_data(p)
    _add_test(p, groups=True)
    p.add_argument("--point-weights", choices=("distance", "stay"), default="distance")
    _add_common(p)
    p.set_defaults(func=cmd_ldtt_indep)

    p = sub.add_parser("tdt", help="per-site analytic transmission disequilibrium test")
    _add_data(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--manhattan", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_tdt)

    p = sub.add_parser("combine", help="multiple-testing combination of a result table")
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--method", choices=sorted(METHODS), required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--c", type=float, help="accumulation shape (default 2) or SeqStep threshold (default 0.5)")
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("demo-confounded", help="eight-subject population structure example")
    p.add_argument("-K", type=int, default=99)
    p.add_argument("--out", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_demo_confounded)

    p = sub.add_parser("demo-admixed", help="admixed cohort: TDT against the independent local test")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--p", type=int, default=500)
    p.add_argument("--h2", type=float, default=0.5)
    p.add_argument("--prevalence", type=float, default=0.2)
    p.add_argument("-K", type=int, default=99)
    p.add_argument("--group-bins", type=int, default=1, help="group width in 0.01-Morgan bins")
    p.add_argument("--out", type=Path)
    p.add_argument("--manhattan", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_demo_admixed)
    return parser


def _set_threads(n: int) -> None:
    if n < 1:
        raise _Usage("--threads must be at least 1")
    import warnings

    import numba

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    args._argv = None if argv is None else list(argv)
    try:
        _set_threads(args.threads)
        args.func(args)
    except _Usage as e:
        parser.print_usage(sys.stderr)
        print(f"dtt: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as e:
        print(f"dtt: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateEvidenceError as e:
        print(f"dtt: degenerate evidence: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
