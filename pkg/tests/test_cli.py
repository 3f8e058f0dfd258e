from pathlib import Path

import numpy as np
import pytest

from dtt.cli import main
from dtt.data import GroupPartition, PValueTable
from dtt.hmm import GeneticMap
from dtt.io import read_manifest, read_results, result_rows, write_results

from test_io import FIXTURE, SUFFIXES, _copy_fixture
from test_multitest import brute_force_bh


def test_demo_confounded_output(capsys):
    assert main(["demo-confounded", "-K", "99"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].split("\t") == ["subject", "population", "Y", "X_j", "X_j*", "X_j~"]
    rows = [line.split("\t") for line in out[1:9]]
    assert [r[2] for r in rows] == ["1"] * 4 + ["0"] * 4
    assert [r[3] for r in rows] == ["1"] * 4 + ["0"] * 4
    assert [r[5] for r in rows] == [r[3] for r in rows]  # twins reproduce the truth
    assert "permutation p (exhaustive) = 0.0142857142857" in out
    assert "digital twin p (K=99) = 1" in out


def test_combine_bh_matches_brute_force(tmp_path):
    gen = np.random.default_rng(0)
    m = 30
    p = np.r_[gen.uniform(0, 0.01, 6), gen.uniform(size=m - 6)]
    gmap = GeneticMap.uniform(m, 0.3)
    part = GroupPartition.from_intervals([(k, k) for k in range(m)], gmap)
    table = PValueTable(part, p, np.zeros(m), 99)
    write_results(result_rows(table, gmap), tmp_path / "t.tsv")
    assert main(["combine", "--table", str(tmp_path / "t.tsv"), "--method", "bh", "--alpha", "0.2",
                 "--out", str(tmp_path / "c.tsv")]) == 0
    rows = read_results(tmp_path / "c.tsv")
    got = {k for k, r in enumerate(rows) if r.rejected}
    p_written = [r.p_value for r in rows]
    assert got == brute_force_bh(p_written, 0.2) and len(got) >= 6
    assert all(r.procedure == "bh@0.2" for r in rows)
    assert read_manifest(tmp_path / "c.tsv.manifest.json")["parameters"]["guarantee"].startswith("FDR")


def test_exit_code_usage(tmp_path, capsys):
    assert main(["ldtt", "--out", str(tmp_path / "x.tsv"), "--group-size", "1e6"]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["dtt", "--data", str(FIXTURE), "--stat", "loss", "--out", str(tmp_path / "x.tsv")]) == 2


def test_exit_code_input_error(tmp_path, capsys):
    prefix = _copy_fixture(tmp_path)
    ped = tmp_path / "tiny.ped.tsv"
    ped.write_text(ped.read_text().replace("dad2", "dad9"))
    code = main(["tdt", "--data", str(prefix), "--out", str(tmp_path / "t.tsv")])
    assert code == 3
    err = capsys.readouterr().err
    assert "line 3" in err and "dad9" in err
    assert not (tmp_path / "t.tsv").exists()


def test_exit_code_degenerate_evidence(tmp_path, capsys):
    prefix = _copy_fixture(tmp_path)
    hap = tmp_path / "tiny.hap"
    lines = hap.read_text().splitlines()
    lines[4] = "0 0 1"  # kid1 maternal allele at rs2 matches neither maternal strand
    hap.write_text("\n".join(lines) + "\n")
    args = ["ldtt", "--data", str(prefix), "--group-size", "1e9", "-K", "9", "--out", str(tmp_path / "l.tsv")]
    assert main(args + ["--epsilon", "0"]) == 4
    assert "degenerate" in capsys.readouterr().err
    assert main(args) == 0


def test_rerun_from_manifest_is_identical(tmp_path):
    args = ["ldtt", "--data", str(FIXTURE), "--group-size", "1000000", "-K", "19", "--seed", "7",
            "--out", str(tmp_path / "a.tsv")]
    assert main(args) == 0
    first = (tmp_path / "a.tsv").read_bytes()
    doc = read_manifest(tmp_path / "a.tsv.manifest.json")
    assert doc["argv"] == args and doc["seed"] == 7
    assert set(doc["inputs"]) >= {str(Path(str(FIXTURE) + s)) for s in SUFFIXES}
    (tmp_path / "a.tsv").unlink()
    assert main(doc["argv"]) == 0
    assert (tmp_path / "a.tsv").read_bytes() == first
    assert read_manifest(tmp_path / "a.tsv.manifest.json")["outputs"] == doc["outputs"]


@pytest.mark.slow
def test_simulate_fit_test_combine_pipeline(tmp_path, capsys):
    pre = str(tmp_path / "sim")
    assert main(["simulate", "--n", "150", "--p", "120", "--h2", "0.5", "--prevalence", "0.3",
                 "--n-causal", "3", "--n-external", "400", "--morgans", "0.5", "--seed", "1",
                 "--out", pre]) == 0
    for s in SUFFIXES + (".gwas.tsv", ".truth.tsv", ".manifest.json"):
        assert Path(pre + s).exists(), s
    assert main(["fit", "--gwas", pre + ".gwas.tsv", "--folds", "3", "--n-lambda", "20",
                 "--out", str(tmp_path / "model.txt")]) == 0
    assert main(["ldtt-indep", "--data", pre, "--stat", "loss", "--model", str(tmp_path / "model.txt"),
                 "--group-size", "5000000", "-K", "19", "--out", str(tmp_path / "g.tsv"),
                 "--manhattan", str(tmp_path / "g.csv")]) == 0
    rows = read_results(tmp_path / "g.tsv")
    assert len(rows) == 11 and all(0 < r.p_value <= 1 for r in rows)
    assert (tmp_path / "g.csv").read_text().startswith("chrom,pos,neg_log10_p\n")
    assert main(["combine", "--table", str(tmp_path / "g.tsv"), "--method", "accumulation",
                 "--alpha", "0.2", "--out", str(tmp_path / "c.tsv")]) == 0
    assert main(["tdt", "--data", pre, "--out", str(tmp_path / "tdt.tsv")]) == 0
    assert len(read_results(tmp_path / "tdt.tsv")) == 120
    assert main(["dtt", "--data", pre, "-K", "9", "--out", str(tmp_path / "d.tsv")]) == 0
    assert "sites below 5e-8" in capsys.readouterr().out
