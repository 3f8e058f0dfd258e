"""File formats: genetic maps, haplotypes, pedigrees, phenotypes, groups,
external GWAS tables, result tables, Manhattan CSVs and run manifests.

Text files are tab-separated with a header line; numbers are written in a
locale-independent way (``repr`` for floats, 12 significant digits for
p-values).  Every parse error names the file, line and field.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import GroupPartition, PValueTable, TrioDataset
from .errors import InputError
from .hmm import GeneticMap, HmmParams

HAP_MAGIC = "# dtt-haplotypes v1"
PACKED_MAGIC = b"DTTPACK1"
ROLES = ("offspring_m", "offspring_f", "mother_a", "mother_b", "father_a", "father_b")
MISSING = "."
MAP_HEADER = ["site_id", "chrom", "position_bp", "cM"]
PED_HEADER = ["trio_id", "offspring_id", "mother_id", "father_id"]
PHENO_HEADER = ["individual_id", "phenotype"]
GROUP_HEADER = ["group_id", "chrom", "start_bp", "end_bp"]
RESULT_HEADER = ["group_id", "chrom", "start_bp", "end_bp", "p_value", "weight", "rejected", "procedure"]


def format_p(p: float) -> str:
    return f"{float(p):.12g}"


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_table(path, header):
    """Rows of a TSV with an exact header; yields ``(line_no, fields)``."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise InputError(f"cannot read file: {e.strerror}", file=path) from None
    if not lines or lines[0].split("\t") != header:
        raise InputError("expected header " + repr("\t".join(header)), file=path, line=1)
    out = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(header):
            raise InputError(f"expected {len(header)} fields, found {len(parts)}", file=path, line=ln)
        out.append((ln, parts))
    return out


def _parse(conv, value, path, line, field_name):
    try:
        return conv(value)
    except ValueError:
        raise InputError(f"cannot parse {value!r}", file=path, line=line, field=field_name) from None


def _write_table(path, header, rows) -> None:
    text = "\t".join(header) + "\n" + "".join("\t".join(r) + "\n" for r in rows)
    Path(path).write_text(text)


# ---------------------------------------------------------------- genetic map


def read_map(path) -> GeneticMap:
    rows = _read_table(path, MAP_HEADER)
    if not rows:
        raise InputError("map has no sites", file=path)
    ids, chrom, pos, cm = [], [], [], []
    for ln, (sid, c, bp, m) in rows:
        ids.append(sid)
        chrom.append(_parse(int, c, path, ln, "chrom"))
        pos.append(_parse(int, bp, path, ln, "position_bp"))
        cm.append(_parse(float, m, path, ln, "cM"))
    try:
        return GeneticMap.from_centimorgans(ids, chrom, pos, cm)
    except InputError as e:
        raise InputError(str(e), file=path) from None


def write_map(gmap: GeneticMap, path) -> None:
    rows = (
        (s, str(int(c)), str(int(b)), _fmt(m))
        for s, c, b, m in zip(gmap.site_ids, gmap.chrom, gmap.position, gmap.centimorgans)
    )
    _write_table(path, MAP_HEADER, rows)


# ---------------------------------------------------------------- haplotypes


@dataclass
class HaplotypeFile:
    """Haplotype rows with their ``(individual, role)`` labels."""

    site_ids: list
    rows: np.ndarray  # (N, p) uint8
    individuals: list
    roles: list

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.uint8)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.site_ids):
            raise InputError("haplotype rows must have one entry per site")
        if not (len(self.individuals) == len(self.roles) == self.rows.shape[0]):
            raise InputError("one (individual, role) label per haplotype row is required")


def index_path(path) -> Path:
    return Path(str(path) + ".idx")


def _write_index(hf: HaplotypeFile, path) -> None:
    _write_table(
        index_path(path), ["row", "individual_id", "role"],
        ((str(k), i, r) for k, (i, r) in enumerate(zip(hf.individuals, hf.roles))),
    )


def _read_index(path, n_rows):
    ipath = index_path(path)
    rows = _read_table(ipath, ["row", "individual_id", "role"])
    if len(rows) != n_rows:
        raise InputError(f"index lists {len(rows)} rows, haplotype file has {n_rows}", file=ipath)
    inds, roles = [], []
    seen = set()
    for k, (ln, (r, ind, role)) in enumerate(rows):
        if _parse(int, r, ipath, ln, "row") != k:
            raise InputError("rows must be listed in order", file=ipath, line=ln, field="row")
        if role not in ROLES:
            raise InputError(f"unknown role {role!r}", file=ipath, line=ln, field="role")
        if (ind, role) in seen:
            raise InputError(f"duplicate haplotype {ind}/{role}", file=ipath, line=ln, field="role")
        seen.add((ind, role))
        inds.append(ind)
        roles.append(role)
    return inds, roles


def write_haplotypes(hf: HaplotypeFile, path) -> None:
    lines = [HAP_MAGIC, f"n_haplotypes\t{hf.rows.shape[0]}", f"p\t{hf.rows.shape[1]}",
             "sites\t" + "\t".join(hf.site_ids)]
    table = np.where(hf.rows.astype(bool), "1", "0")
    lines += [" ".join(r) for r in table]
    Path(path).write_text("\n".join(lines) + "\n")
    _write_index(hf, path)


def read_haplotypes(path) -> HaplotypeFile:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(PACKED_MAGIC)) == PACKED_MAGIC:
            return read_packed(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != HAP_MAGIC:
        raise InputError("not a haplotype file (bad header)", file=path, line=1)
    if len(lines) < 4:
        raise InputError("truncated header", file=path)
    meta = {}
    for ln in (2, 3):
        key, _, val = lines[ln - 1].partition("\t")
        meta[key] = _parse(int, val, path, ln, key)
    if set(meta) != {"n_haplotypes", "p"}:
        raise InputError("header must give n_haplotypes and p", file=path, line=2)
    sites = lines[3].split("\t")
    if sites[0] != "sites" or len(sites) - 1 != meta["p"]:
        raise InputError(f"site list must name {meta['p']} sites", file=path, line=4, field="sites")
    body = [(ln, line) for ln, line in enumerate(lines[4:], start=5) if line.strip()]
    if len(body) != meta["n_haplotypes"]:
        raise InputError(f"header announces {meta['n_haplotypes']} rows, found {len(body)}", file=path)
    p = meta["p"]
    rows = np.empty((len(body), p), np.uint8)
    for k, (ln, line) in enumerate(body):
        tok = line.split()
        if len(tok) != p:
            raise InputError(f"row has {len(tok)} alleles, expected {p}", file=path, line=ln)
        arr = np.array(tok)
        bad = ~np.isin(arr, ("0", "1"))
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise InputError(f"allele {tok[j]!r} is not 0 or 1", file=path, line=ln, field=sites[j + 1])
        rows[k] = arr == "1"
    inds, roles = _read_index(path, len(body))
    return HaplotypeFile(sites[1:], rows, inds, roles)


def write_packed(hf: HaplotypeFile, path) -> None:
    """Bit-packed variant: magic, little-endian ``uint64`` row count and site
    count, the site ids (newline-joined, length-prefixed), then one row per
    haplotype packed least-significant-bit first and padded to 8 bytes."""
    n, p = hf.rows.shape
    stride = 8 * ((p + 63) // 64)
    packed = np.zeros((n, stride), np.uint8)
    if p:
        bits = np.packbits(hf.rows, axis=1, bitorder="little")
        packed[:, : bits.shape[1]] = bits
    ids = "\n".join(hf.site_ids).encode()
    with open(path, "wb") as fh:
        fh.write(PACKED_MAGIC)
        fh.write(struct.pack("<QQQ", n, p, len(ids)))
        fh.write(ids)
        fh.write(b"\0" * (-len(ids) % 8))
        fh.write(packed.tobytes())
    _write_index(hf, path)


def read_packed(path) -> HaplotypeFile:
    raw = Path(path).read_bytes()
    if raw[: len(PACKED_MAGIC)] != PACKED_MAGIC:
        raise InputError("not a packed haplotype file", file=path)
    off = len(PACKED_MAGIC)
    try:
        n, p, nid = struct.unpack_from("<QQQ", raw, off)
    except struct.error:
        raise InputError("truncated packed header", file=path) from None
    off += 24
    ids = raw[off : off + nid].decode().split("\n") if p else []
    off += nid + (-nid % 8)
    stride = 8 * ((p + 63) // 64)
    if len(raw) - off != n * stride or len(ids) != p:
        raise InputError("packed payload size does not match the header", file=path)
    packed = np.frombuffer(raw, np.uint8, offset=off).reshape(n, stride)
    rows = np.unpackbits(packed, axis=1, count=p, bitorder="little") if p else np.zeros((n, 0), np.uint8)
    inds, roles = _read_index(path, n)
    return HaplotypeFile(ids, rows, inds, roles)


# ---------------------------------------------------------------- datasets


def dataset_paths(prefix) -> dict:
    prefix = str(prefix)
    return {
        "haplotypes": Path(prefix + ".hap"),
        "map": Path(prefix + ".map.tsv"),
        "phenotype": Path(prefix + ".pheno.tsv"),
        "pedigree": Path(prefix + ".ped.tsv"),
    }


def _haplotype_file(data: TrioDataset) -> HaplotypeFile:
    rows, inds, roles = [], [], []
    written = {}

    def add(ind, role, hap):
        key = (ind, role)
        if key in written:
            if not np.array_equal(written[key], hap):
                raise InputError(f"individual {ind!r} appears with two different haplotypes")
            return
        written[key] = hap
        rows.append(hap)
        inds.append(ind)
        roles.append(role)

    for i, tid in enumerate(data.ids):
        mid, fid = data.parent_ids[i]
        add(tid, "offspring_m", data.x_m[i])
        add(tid, "offspring_f", data.x_f[i])
        if data.has_mother[i]:
            add(mid, "mother_a", data.mother[i, 0])
            add(mid, "mother_b", data.mother[i, 1])
        if data.has_father[i]:
            add(fid, "father_a", data.father[i, 0])
            add(fid, "father_b", data.father[i, 1])
    p = data.p
    mat = np.stack(rows) if rows else np.zeros((0, p), np.uint8)
    return HaplotypeFile(list(data.gmap.site_ids), mat, inds, roles)


def save_dataset(data: TrioDataset, prefix, packed: bool = False) -> dict:
    """Write the four dataset files next to ``prefix``; returns their paths."""
    paths = dataset_paths(prefix)
    write_map(data.gmap, paths["map"])
    hf = _haplotype_file(data)
    (write_packed if packed else write_haplotypes)(hf, paths["haplotypes"])
    _write_table(
        paths["pedigree"], PED_HEADER,
        ((t, t, m or MISSING, f or MISSING) for t, (m, f) in zip(data.ids, data.parent_ids)),
    )
    write_phenotype(data.ids, data.phenotype, paths["phenotype"])
    return paths


def write_phenotype(ids, y, path) -> None:
    y = np.asarray(y, dtype=float)
    binary = np.all((y == 0) | (y == 1))
    vals = (str(int(v)) if binary else _fmt(v) for v in y)
    _write_table(path, PHENO_HEADER, zip(ids, vals))


def read_phenotype(path) -> dict:
    out = {}
    for ln, (ind, val) in _read_table(path, PHENO_HEADER):
        if ind in out:
            raise InputError(f"duplicate individual {ind!r}", file=path, line=ln, field="individual_id")
        out[ind] = _parse(float, val, path, ln, "phenotype")
    return out


def load_dataset(haplotypes, map_file, phenotype, pedigree, params: Optional[HmmParams] = None) -> TrioDataset:
    """Read and cross-validate the four files; nothing is returned on error."""
    gmap = read_map(map_file)
    hf = read_haplotypes(haplotypes)
    if list(hf.site_ids) != list(gmap.site_ids):
        if len(hf.site_ids) != gmap.p:
            raise InputError(f"haplotype file has {len(hf.site_ids)} sites, map has {gmap.p}", file=haplotypes)
        j = next(k for k, (a, b) in enumerate(zip(hf.site_ids, gmap.site_ids)) if a != b)
        raise InputError(
            f"site order differs from the map at position {j + 1} ({hf.site_ids[j]!r} vs {gmap.site_ids[j]!r})",
            file=haplotypes, field="sites",
        )
    lookup = {(i, r): k for k, (i, r) in enumerate(zip(hf.individuals, hf.roles))}
    pheno = read_phenotype(phenotype)
    ped = _read_table(pedigree, PED_HEADER)
    if not ped:
        raise InputError("pedigree lists no trios", file=pedigree)
    n, p = len(ped), gmap.p
    x_m = np.empty((n, p), np.uint8)
    x_f = np.empty((n, p), np.uint8)
    mother = np.zeros((n, 2, p), np.uint8)
    father = np.zeros((n, 2, p), np.uint8)
    has_m = np.zeros(n, bool)
    has_f = np.zeros(n, bool)
    y = np.empty(n)
    ids, parent_ids = [], []

    def row(ind, role, ln, fieldname):
        try:
            return hf.rows[lookup[(ind, role)]]
        except KeyError:
            raise InputError(
                f"individual {ind!r} has no {role} haplotype", file=pedigree, line=ln, field=fieldname
            ) from None

    for i, (ln, (tid, off, mid, fid)) in enumerate(ped):
        if tid in ids:
            raise InputError(f"duplicate trio id {tid!r}", file=pedigree, line=ln, field="trio_id")
        x_m[i] = row(off, "offspring_m", ln, "offspring_id")
        x_f[i] = row(off, "offspring_f", ln, "offspring_id")
        if mid != MISSING:
            mother[i] = (row(mid, "mother_a", ln, "mother_id"), row(mid, "mother_b", ln, "mother_id"))
            has_m[i] = True
        if fid != MISSING:
            father[i] = (row(fid, "father_a", ln, "father_id"), row(fid, "father_b", ln, "father_id"))
            has_f[i] = True
        if not (has_m[i] or has_f[i]):
            raise InputError(f"trio {tid!r} has neither parent", file=pedigree, line=ln)
        if off not in pheno:
            raise InputError(f"no phenotype for {off!r}", file=phenotype, field="individual_id")
        y[i] = pheno[off]
        ids.append(tid)
        parent_ids.append((None if mid == MISSING else mid, None if fid == MISSING else fid))
    return TrioDataset(x_m, x_f, mother, father, has_m, has_f, y, gmap, params or HmmParams(), ids, parent_ids)


def load_prefix(prefix, params: Optional[HmmParams] = None) -> TrioDataset:
    p = dataset_paths(prefix)
    return load_dataset(p["haplotypes"], p["map"], p["phenotype"], p["pedigree"], params)


# ---------------------------------------------------------------- groups


def read_groups(path, gmap: GeneticMap) -> GroupPartition:
    """Groups given by physical interval; each holds the sites inside it."""
    rows = _read_table(path, GROUP_HEADER)
    if not rows:
        raise InputError("groups file is empty", file=path)
    intervals, names = [], []
    for ln, (gid, c, a, b) in rows:
        chrom = _parse(int, c, path, ln, "chrom")
        start = _parse(int, a, path, ln, "start_bp")
        end = _parse(int, b, path, ln, "end_bp")
        if end < start:
            raise InputError("end_bp precedes start_bp", file=path, line=ln, field="end_bp")
        if chrom not in gmap.chromosomes:
            raise InputError(f"chromosome {chrom} not in the map", file=path, line=ln, field="chrom")
        lo, hi = gmap.chrom_range(chrom)
        pos = gmap.position[lo:hi]
        i0 = lo + int(np.searchsorted(pos, start, side="left"))
        i1 = lo + int(np.searchsorted(pos, end, side="right")) - 1
        if i1 < i0:
            raise InputError(f"group {gid!r} contains no sites", file=path, line=ln)
        intervals.append((i0, i1))
        names.append(gid)
    try:
        return GroupPartition.from_intervals(intervals, gmap, names)
    except InputError as e:
        raise InputError(str(e), file=path) from None


def write_groups(partition: GroupPartition, gmap: GeneticMap, path) -> None:
    _write_table(path, GROUP_HEADER, (
        (name, str(int(c)), str(int(gmap.position[a])), str(int(gmap.position[b])))
        for name, c, (a, b) in zip(partition.names, partition.chrom, partition)
    ))


def load_groups(gmap: GeneticMap, path=None, group_size_bp=None) -> GroupPartition:
    if (path is None) == (group_size_bp is None):
        raise InputError("give exactly one of a groups file or a group size")
    if path is not None:
        return read_groups(path, gmap)
    return GroupPartition.by_width(gmap, group_size_bp)


# ---------------------------------------------------------------- external GWAS


def write_gwas(G, y, site_ids, path) -> None:
    G = np.asarray(G)
    y = np.asarray(y, dtype=float)
    binary = np.all((y == 0) | (y == 1))
    lines = ["sample_id\tphenotype\t" + "\t".join(site_ids)]
    ys = [str(int(v)) if binary else _fmt(v) for v in y]
    for i, (g, v) in enumerate(zip(G, ys)):
        lines.append(f"s{i + 1}\t{v}\t" + "\t".join(map(str, g.tolist())))
    Path(path).write_text("\n".join(lines) + "\n")


def read_gwas(path):
    """``(G, y, site_ids)`` from an external GWAS table."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise InputError("empty GWAS file", file=path)
    head = lines[0].split("\t")
    if head[:2] != ["sample_id", "phenotype"]:
        raise InputError("header must start with sample_id, phenotype", file=path, line=1)
    sites = head[2:]
    p = len(sites)
    body = [(ln, line) for ln, line in enumerate(lines[1:], start=2) if line.strip()]
    G = np.empty((len(body), p), np.int8)
    y = np.empty(len(body))
    for k, (ln, line) in enumerate(body):
        parts = line.split("\t")
        if len(parts) != p + 2:
            raise InputError(f"expected {p + 2} fields, found {len(parts)}", file=path, line=ln)
        y[k] = _parse(float, parts[1], path, ln, "phenotype")
        try:
            row = np.array(parts[2:], dtype=np.int64)
        except ValueError:
            raise InputError("genotypes must be integers", file=path, line=ln) from None
        if np.any((row < 0) | (row > 2)):
            j = int(np.flatnonzero((row < 0) | (row > 2))[0])
            raise InputError("genotype outside {0,1,2}", file=path, line=ln, field=sites[j])
        G[k] = row
    return G, y, sites


# ---------------------------------------------------------------- results


@dataclass
class ResultRow:
    group_id: str
    chrom: int
    start_bp: int
    end_bp: int
    p_value: float
    weight: float
    rejected: bool
    procedure: str


def result_rows(table: PValueTable, gmap: GeneticMap, rejected=None, procedure: str = "none") -> list:
    part = table.partition
    mask = np.zeros(len(part), bool)
    if rejected is not None:
        mask[np.asarray(rejected, dtype=np.int64)] = True
    rows = [
        ResultRow(name, int(c), int(gmap.position[a]), int(gmap.position[b]), float(p), float(w), bool(r), procedure)
        for name, c, (a, b), p, w, r in zip(part.names, part.chrom, part, table.pvalues, table.weights, mask)
    ]
    return sorted(rows, key=lambda r: (r.chrom, r.start_bp))


def write_results(rows, path) -> None:
    _write_table(path, RESULT_HEADER, (
        (r.group_id, str(r.chrom), str(r.start_bp), str(r.end_bp), format_p(r.p_value),
         _fmt(r.weight), "1" if r.rejected else "0", r.procedure)
        for r in rows
    ))


def read_results(path) -> list:
    out = []
    for ln, f in _read_table(path, RESULT_HEADER):
        p = _parse(float, f[4], path, ln, "p_value")
        if not 0 < p <= 1:
            raise InputError("p-value outside (0, 1]", file=path, line=ln, field="p_value")
        if f[6] not in ("0", "1"):
            raise InputError("rejected must be 0 or 1", file=path, line=ln, field="rejected")
        out.append(ResultRow(
            f[0], _parse(int, f[1], path, ln, "chrom"), _parse(int, f[2], path, ln, "start_bp"),
            _parse(int, f[3], path, ln, "end_bp"), p, _parse(float, f[5], path, ln, "weight"),
            f[6] == "1", f[7],
        ))
    return out


def write_manhattan_csv(chrom, position, pvalues, path) -> None:
    """``chrom,pos,neg_log10_p`` rows sorted by chromosome and position."""
    chrom = np.asarray(chrom, dtype=np.int64)
    position = np.asarray(position, dtype=np.int64)
    p = np.asarray(pvalues, dtype=float)
    if np.any(p <= 0) or np.any(p > 1):
        raise InputError("p-values must lie in (0, 1]")
    order = np.lexsort((position, chrom))
    score = -np.log10(p)
    lines = ["chrom,pos,neg_log10_p"]
    lines += [f"{chrom[k]},{position[k]},{score[k] + 0.0:.6f}" for k in order]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- manifests


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, argv: list, params: dict, inputs=(), outputs=(), version: str = "") -> None:
    def files(paths):
        return {str(p): sha256(p) for p in paths if p is not None and Path(p).exists()}

    doc = {
        "command": command,
        "argv": list(argv),
        "parameters": params,
        "seed": params.get("seed"),
        "version": version,
        "inputs": files(inputs),
        "outputs": files(outputs),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def read_manifest(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"invalid manifest: {e.msg}", file=path, line=e.lineno) from None
