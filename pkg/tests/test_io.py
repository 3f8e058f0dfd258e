import json
from pathlib import Path

import numpy as np
import pytest

from dtt.data import GroupPartition, PValueTable
from dtt.errors import InputError
from dtt.hmm import GeneticMap
from dtt.io import (
    HaplotypeFile,
    dataset_paths,
    format_p,
    index_path,
    load_dataset,
    load_groups,
    load_prefix,
    read_gwas,
    read_haplotypes,
    read_manifest,
    read_map,
    read_results,
    result_rows,
    save_dataset,
    sha256,
    write_groups,
    write_gwas,
    write_haplotypes,
    write_manhattan_csv,
    write_manifest,
    write_map,
    write_packed,
    write_results,
)

FIXTURE = Path(__file__).parent / "fixtures" / "tiny"
SUFFIXES = (".hap", ".hap.idx", ".map.tsv", ".ped.tsv", ".pheno.tsv")


def _copy_fixture(tmp_path):
    for s in SUFFIXES:
        (tmp_path / ("tiny" + s)).write_bytes(Path(str(FIXTURE) + s).read_bytes())
    return tmp_path / "tiny"


# ---------------------------------------------------------------- datasets


def test_fixture_contents():
    data = load_prefix(FIXTURE)
    assert data.ids == ["kid1", "kid2"]
    assert data.has_mother.tolist() == [True, False]
    assert data.has_father.tolist() == [True, True]
    assert data.x_m.tolist() == [[0, 1, 1], [1, 1, 1]]
    assert data.father[1].tolist() == [[1, 1, 1], [0, 0, 0]]
    assert data.phenotype.tolist() == [1.0, 0.0]
    assert np.allclose(data.gmap.morgans, [0.0, 0.005, 0.02])


def test_fixture_round_trip_is_byte_identical(tmp_path):
    save_dataset(load_prefix(FIXTURE), tmp_path / "out")
    for s in SUFFIXES:
        assert (tmp_path / ("out" + s)).read_bytes() == Path(str(FIXTURE) + s).read_bytes(), s


def test_packed_round_trip(tmp_path, cohort):
    paths = save_dataset(cohort, tmp_path / "c", packed=True)
    assert paths["haplotypes"].read_bytes()[:8] == b"DTTPACK1"
    back = load_prefix(tmp_path / "c", cohort.params)
    for name in ("x_m", "x_f", "mother", "father", "has_mother", "has_father", "phenotype"):
        assert np.array_equal(getattr(back, name), getattr(cohort, name)), name
    text = read_haplotypes(dataset_paths(tmp_path / "c")["haplotypes"])
    write_haplotypes(text, tmp_path / "t.hap")
    assert np.array_equal(read_haplotypes(tmp_path / "t.hap").rows, text.rows)


@pytest.mark.parametrize("p", [1, 63, 64, 65, 130])
def test_packed_widths(tmp_path, p):
    rows = np.random.default_rng(p).integers(0, 2, size=(5, p))
    hf = HaplotypeFile([f"s{j}" for j in range(p)], rows, [f"i{k}" for k in range(5)], ["offspring_m"] * 5)
    write_packed(hf, tmp_path / "x.bin")
    back = read_haplotypes(tmp_path / "x.bin")
    assert np.array_equal(back.rows, rows) and back.site_ids == hf.site_ids


def test_row_length_error_names_line(tmp_path):
    prefix = _copy_fixture(tmp_path)
    hap = tmp_path / "tiny.hap"
    lines = hap.read_text().splitlines()
    lines[6] = "0 1"
    hap.write_text("\n".join(lines) + "\n")
    with pytest.raises(InputError, match="line 7") as e:
        load_prefix(prefix)
    assert e.value.line == 7


def test_bad_allele_names_site(tmp_path):
    prefix = _copy_fixture(tmp_path)
    hap = tmp_path / "tiny.hap"
    hap.write_text(hap.read_text().replace("1 0 0\n", "1 2 0\n", 1))
    with pytest.raises(InputError) as e:
        load_prefix(prefix)
    assert e.value.field == "rs2" and e.value.line == 6


def test_missing_pedigree_individual(tmp_path):
    prefix = _copy_fixture(tmp_path)
    ped = tmp_path / "tiny.ped.tsv"
    ped.write_text(ped.read_text().replace("dad2", "dad9"))
    with pytest.raises(InputError, match="dad9") as e:
        load_prefix(prefix)
    assert e.value.line == 3 and e.value.field == "father_id"


def test_missing_phenotype(tmp_path):
    prefix = _copy_fixture(tmp_path)
    (tmp_path / "tiny.pheno.tsv").write_text("individual_id\tphenotype\nkid1\t1\n")
    with pytest.raises(InputError, match="kid2"):
        load_prefix(prefix)


def test_site_order_mismatch(tmp_path):
    prefix = _copy_fixture(tmp_path)
    m = tmp_path / "tiny.map.tsv"
    m.write_text(m.read_text().replace("rs1", "rsX").replace("rs2", "rs1").replace("rsX", "rs2"))
    with pytest.raises(InputError, match="site order"):
        load_prefix(prefix)


def test_map_errors(tmp_path):
    m = tmp_path / "m.tsv"
    m.write_text("site_id\tchrom\tposition_bp\tcM\na\t1\t10\tx\n")
    with pytest.raises(InputError) as e:
        read_map(m)
    assert e.value.line == 2 and e.value.field == "cM"
    m.write_text("wrong\n")
    with pytest.raises(InputError, match="header"):
        read_map(m)


def test_map_round_trip(tmp_path):
    gmap = GeneticMap.uniform(17, 0.37)
    write_map(gmap, tmp_path / "m.tsv")
    back = read_map(tmp_path / "m.tsv")
    assert np.allclose(back.morgans, gmap.morgans, rtol=0, atol=1e-15)
    assert back.site_ids == gmap.site_ids


def test_index_companion_required(tmp_path):
    prefix = _copy_fixture(tmp_path)
    index_path(tmp_path / "tiny.hap").unlink()
    with pytest.raises(InputError):
        load_prefix(prefix)


# ---------------------------------------------------------------- groups


def _map_63mb():
    pos = np.arange(1, 63_000_001, 500_000)
    pos[-1] = 63_000_000
    return GeneticMap([f"s{k}" for k in range(len(pos))], np.ones(len(pos), int), pos, pos / 1e8)


def test_group_width_arithmetic():
    gmap = _map_63mb()
    assert len(load_groups(gmap, group_size_bp=5_000_000)) == 13
    assert len(load_groups(gmap, group_size_bp=63_000_000)) == 1
    assert len(load_groups(gmap, group_size_bp=1e12)) == 1
    part = load_groups(gmap, group_size_bp=5_000_000)
    assert np.all(np.diff(gmap.position[[b for _, b in part]]) > 0)
    with pytest.raises(InputError):
        load_groups(gmap)


def test_groups_file_round_trip_and_overlap(tmp_path):
    gmap = _map_63mb()
    part = GroupPartition.by_width(gmap, 10_000_000)
    write_groups(part, gmap, tmp_path / "g.tsv")
    back = load_groups(gmap, tmp_path / "g.tsv")
    assert list(back) == list(part) and back.names == part.names
    (tmp_path / "o.tsv").write_text(
        "group_id\tchrom\tstart_bp\tend_bp\ng1\t1\t1\t2000000\ng2\t1\t1500000\t4000000\n"
    )
    with pytest.raises(InputError):
        load_groups(gmap, tmp_path / "o.tsv")
    (tmp_path / "e.tsv").write_text("group_id\tchrom\tstart_bp\tend_bp\ng1\t1\t5\t4\n")
    with pytest.raises(InputError) as e:
        load_groups(gmap, tmp_path / "e.tsv")
    assert e.value.field == "end_bp"


# ---------------------------------------------------------------- outputs


def test_manhattan_csv(tmp_path):
    path = tmp_path / "m.csv"
    write_manhattan_csv([2, 1, 1], [5, 30, 10], [1.0, 5e-8, 0.1], path)
    assert path.read_text().splitlines() == [
        "chrom,pos,neg_log10_p",
        "1,10,1.000000",
        "1,30,7.301030",
        "2,5,0.000000",
    ]
    with pytest.raises(InputError):
        write_manhattan_csv([1], [1], [0.0], path)


def test_format_p():
    assert format_p(0.01) == "0.01"
    assert format_p(1 / 70) == "0.0142857142857"
    assert format_p(1.0) == "1"


def test_results_round_trip(tmp_path):
    gmap = GeneticMap.uniform(6, 0.1)
    part = GroupPartition.from_intervals([(0, 1), (2, 4), (5, 5)], gmap)
    table = PValueTable(part, np.array([0.01, 1 / 3, 1.0]), np.array([2.0, 0.0, 0.5]), 99)
    rows = result_rows(table, gmap, rejected=[0], procedure="bh")
    write_results(rows, tmp_path / "r.tsv")
    back = read_results(tmp_path / "r.tsv")
    assert [r.rejected for r in back] == [True, False, False]
    assert back[1].p_value == pytest.approx(1 / 3, rel=1e-11)
    assert back[0].procedure == "bh" and back[2].weight == 0.5
    bad = (tmp_path / "r.tsv").read_text().replace("\t0.01\t", "\t0\t")
    (tmp_path / "b.tsv").write_text(bad)
    with pytest.raises(InputError) as e:
        read_results(tmp_path / "b.tsv")
    assert e.value.field == "p_value"


def test_gwas_round_trip(tmp_path):
    gen = np.random.default_rng(0)
    G = gen.integers(0, 3, size=(7, 4))
    y = gen.integers(0, 2, 7).astype(float)
    write_gwas(G, y, list("abcd"), tmp_path / "g.tsv")
    G2, y2, ids = read_gwas(tmp_path / "g.tsv")
    assert np.array_equal(G2, G) and np.array_equal(y2, y) and ids == list("abcd")
    (tmp_path / "g.tsv").write_text("sample_id\tphenotype\ta\ns1\t1\t3\n")
    with pytest.raises(InputError) as e:
        read_gwas(tmp_path / "g.tsv")
    assert e.value.field == "a"


def test_manifest(tmp_path):
    inp = tmp_path / "in.txt"
    inp.write_text("hello\n")
    write_manifest(tmp_path / "m.json", "dtt", ["dtt", "--seed", "3"], {"seed": 3, "K": 99},
                   inputs=[inp], outputs=[], version="0.1.0")
    doc = read_manifest(tmp_path / "m.json")
    assert doc["seed"] == 3 and doc["parameters"]["K"] == 99
    assert doc["inputs"][str(inp)] == sha256(inp)
    assert sha256(inp) == "5891b5b522d5df086d0ff0b110fbd9d21bb4fc7163af34d08286a2e846f6be03"
    assert json.loads((tmp_path / "m.json").read_text()) == doc


def test_load_dataset_explicit_paths():
    p = dataset_paths(FIXTURE)
    data = load_dataset(p["haplotypes"], p["map"], p["phenotype"], p["pedigree"])
    assert data.n == 2
