"""Observed DPRS / DOHRS tables from an aligned coding region of two species.

Only columns with exactly two nucleotides and no gap or ``N`` are counted.
A variable column is classified as silent or replacement by translating the
two codons that differ at that column; codons with more than one variable
column (or touching an excluded column) are dropped, so each counted site
involves a single codon pair.  The mutant allele is taken to be the minor
one across both species, a convention reported with the output.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field

from .types import DOHRS, CountTable

NUCLEOTIDES = "ACGT"
ALPHABET = set("ACGT-N")

# standard genetic code, codons in TCAG order
_BASES = "TCAG"
_AMINO = "FFLLSSSSYY**CC*WLLLLPPPPHHQQRRRRIIIMTTTTNNKKSSRRVVVVAAAADDEEGGGG"
GENETIC_CODE = {
    a + b + c: _AMINO[16 * i + 4 * j + k]
    for i, a in enumerate(_BASES) for j, b in enumerate(_BASES) for k, c in enumerate(_BASES)
}

VARIATION = ("monomorphic", "fixed_difference", "polymorphic_one", "polymorphic_both", "excluded")
EFFECT = ("silent", "replacement", "excluded")
REASONS = ("invariant", "out_of_frame", "gap_or_N", "multiallelic", "codon_context", "multi_hit_codon")


class AlignmentError(ValueError):
    pass


def translate(codon: str) -> str:
    return GENETIC_CODE[codon]


@dataclass(frozen=True)
class Alignment:
    """Equal-length aligned sequences with a species label (1 or 2) each."""

    ids: tuple
    sequences: tuple
    species: tuple
    offset: int = 0

    def __post_init__(self):
        if not (len(self.ids) == len(self.sequences) == len(self.species)):
            raise AlignmentError("ids, sequences and species must have equal length")
        if len(self.sequences) < 2:
            raise AlignmentError("need at least two sequences")
        lengths = {len(s) for s in self.sequences}
        if len(lengths) != 1:
            by_len = {i: len(s) for i, s in zip(self.ids, self.sequences)}
            raise AlignmentError(f"sequences have unequal lengths: {by_len}")
        for i, s in zip(self.ids, self.sequences):
            bad = set(s) - ALPHABET
            if bad:
                raise AlignmentError(f"record {i!r} has unknown characters {sorted(bad)}")
        if set(self.species) - {1, 2}:
            raise AlignmentError("species labels must be 1 or 2")
        if self.m < 1 or self.n < 1:
            raise AlignmentError("each species needs at least one sequence")
        if not 0 <= self.offset < 3:
            raise AlignmentError("reading-frame offset must be 0, 1 or 2")

    @property
    def length(self) -> int:
        return len(self.sequences[0])

    @property
    def m(self) -> int:
        return sum(1 for s in self.species if s == 1)

    @property
    def n(self) -> int:
        return sum(1 for s in self.species if s == 2)

    def species_sequences(self, label: int) -> list:
        return [s for s, sp in zip(self.sequences, self.species) if sp == label]


def read_fasta(text: str) -> list:
    """``[(id, sequence)]`` in input order; ids are the first word of the header."""
    records = []
    cur_id, chunks = None, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith(">"):
            if cur_id is not None:
                records.append((cur_id, "".join(chunks)))
            header = line[1:].strip()
            if not header:
                raise AlignmentError("FASTA record with an empty header")
            cur_id, chunks = header.split()[0], []
        else:
            if cur_id is None:
                raise AlignmentError("sequence data before the first FASTA header")
            chunks.append(line.upper())
    if cur_id is not None:
        records.append((cur_id, "".join(chunks)))
    ids = [r[0] for r in records]
    dup = [k for k, v in Counter(ids).items() if v > 1]
    if dup:
        raise AlignmentError(f"duplicate record ids: {dup}")
    return records


def read_species_map(text: str) -> dict:
    """Two-column TSV ``id<TAB>species`` (species 1/2); ``#`` lines ignored."""
    out = {}
    for row in csv.reader(io.StringIO(text), delimiter="\t"):
        if not row or row[0].startswith("#"):
            continue
        if len(row) < 2:
            raise AlignmentError(f"species map row needs two columns: {row}")
        rid, sp = row[0].strip(), row[1].strip()
        if sp not in ("1", "2"):
            raise AlignmentError(f"species for {rid!r} must be 1 or 2, got {sp!r}")
        out[rid] = int(sp)
    return out


def species_map_from_lists(species1, species2) -> dict:
    out = {}
    for label, ids in ((1, species1), (2, species2)):
        for rid in ids:
            if rid in out and out[rid] != label:
                raise AlignmentError(f"record {rid!r} assigned to both species")
            out[rid] = label
    return out


def parse_alignment(text: str, species_map: dict, offset: int = 0) -> Alignment:
    records = read_fasta(text)
    if len(records) < 2:
        raise AlignmentError("need at least two FASTA records")
    ids, seqs, labels = [], [], []
    for rid, seq in records:
        if rid not in species_map:
            raise AlignmentError(f"record {rid!r} is not in the species map")
        ids.append(rid)
        seqs.append(seq)
        labels.append(int(species_map[rid]))
    al = Alignment(tuple(ids), tuple(seqs), tuple(labels), offset)
    if al.m < 1 or al.n < 1:
        raise AlignmentError("both species need at least one record")
    return al


@dataclass(frozen=True)
class SiteClassification:
    """Per-column classification on the variation and effect axes."""

    m: int
    n: int
    variation: tuple
    effect: tuple
    reason: tuple  # exclusion reason per column ('' when counted)
    mutant: tuple  # minor allele per counted column ('' otherwise)
    tie: tuple  # True when the minor allele was a tie broken alphabetically
    census: dict = field(default_factory=dict)

    def counts(self) -> dict:
        keys = {("fixed_difference", "silent"): "K_s", ("polymorphic_one", "silent"): "O_s",
                ("polymorphic_both", "silent"): "H_s", ("fixed_difference", "replacement"): "K_r",
                ("polymorphic_one", "replacement"): "O_r", ("polymorphic_both", "replacement"): "H_r"}
        out = {k: 0 for k in keys.values()}
        for v, e in zip(self.variation, self.effect):
            k = keys.get((v, e))
            if k:
                out[k] += 1
        return out


def _column(seqs, j):
    return [s[j] for s in seqs]


def classify_sites(a: Alignment) -> SiteClassification:
    L = a.length
    s1 = a.species_sequences(1)
    s2 = a.species_sequences(2)
    allseq = list(a.sequences)
    variation = ["excluded"] * L
    effect = ["excluded"] * L
    reason = [""] * L
    mutant = [""] * L
    tie = [False] * L
    ncod = (L - a.offset) // 3
    in_frame = [False] * L
    for c in range(ncod):
        for k in range(3):
            in_frame[a.offset + 3 * c + k] = True

    # per-column status
    alleles = []
    for j in range(L):
        col = _column(allseq, j)
        nts = set(col)
        alleles.append(nts)
        if not in_frame[j]:
            reason[j] = "out_of_frame"
        elif nts & {"-", "N"}:
            reason[j] = "gap_or_N"
        elif len(nts) > 2:
            reason[j] = "multiallelic"
        elif len(nts) == 1:
            variation[j] = "monomorphic"
            reason[j] = "invariant"

    for c in range(ncod):
        cols = [a.offset + 3 * c + k for k in range(3)]
        bad = any(reason[j] in ("gap_or_N", "multiallelic") for j in cols)
        var = [j for j in cols if reason[j] == ""]
        if not var:
            continue
        if bad:
            for j in var:
                reason[j] = "codon_context"
            continue
        if len(var) > 1:
            for j in var:
                reason[j] = "multi_hit_codon"
            continue
        j = var[0]
        pos = j - cols[0]
        base = allseq[0][cols[0]:cols[0] + 3]
        x, y = sorted(alleles[j])
        cx = base[:pos] + x + base[pos + 1:]
        cy = base[:pos] + y + base[pos + 1:]
        effect[j] = "silent" if translate(cx) == translate(cy) else "replacement"
        a1 = set(_column(s1, j))
        a2 = set(_column(s2, j))
        if len(a1) == 1 and len(a2) == 1:
            variation[j] = "fixed_difference"
        elif len(a1) == 2 and len(a2) == 2:
            variation[j] = "polymorphic_both"
        else:
            variation[j] = "polymorphic_one"
        freq = Counter(_column(allseq, j))
        if freq[x] == freq[y]:
            mutant[j], tie[j] = x, True
        else:
            mutant[j] = x if freq[x] < freq[y] else y

    for j in range(L):
        if reason[j] and reason[j] != "invariant":
            variation[j] = "excluded"
    census = {r: reason.count(r) for r in REASONS}
    return SiteClassification(a.m, a.n, tuple(variation), tuple(effect), tuple(reason),
                              tuple(mutant), tuple(tie), census)


@dataclass(frozen=True)
class ObservedTables:
    dohrs: CountTable
    dprs: CountTable
    census: dict
    polarization: dict

    def to_dict(self) -> dict:
        return {"dohrs": self.dohrs.to_dict(), "dprs": self.dprs.to_dict(),
                "excluded": self.census, "polarization": self.polarization}


def count_tables(c: SiteClassification, double_count_shared: bool = False) -> ObservedTables:
    dohrs = CountTable(DOHRS, c.m, c.n, c.counts())
    counted = [j for j, e in enumerate(c.effect) if e != "excluded"]
    pol = {"convention": "minor allele across both species is the mutant",
           "sites": len(counted), "ties": sum(1 for j in counted if c.tie[j])}
    return ObservedTables(dohrs, dohrs.to_dprs(double_count_shared), dict(c.census), pol)


def format_table_tsv(table: CountTable) -> str:
    """Tab-separated table; DOHRS header ``class K O H``, DPRS ``class K V``."""
    cnt = table.counts

    def fmt(v):
        return str(int(v)) if float(v).is_integer() else repr(float(v))

    if table.layout == DOHRS:
        lines = ["class\tK\tO\tH"]
        for c, name in (("s", "silent"), ("r", "replacement")):
            lines.append(f"{name}\t{fmt(cnt['K_' + c])}\t{fmt(cnt['O_' + c])}\t{fmt(cnt['H_' + c])}")
    else:
        lines = ["class\tK\tV"]
        for c, name in (("s", "silent"), ("r", "replacement")):
            lines.append(f"{name}\t{fmt(cnt['K_' + c])}\t{fmt(cnt['V_' + c])}")
    return "\n".join(lines) + "\n"


def parse_table_tsv(text: str, m: int, n: int) -> CountTable:
    """Inverse of :func:`format_table_tsv` (sample sizes supplied separately)."""
    rows = [r for r in csv.reader(io.StringIO(text), delimiter="\t") if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError("empty table")
    header = [h.strip() for h in rows[0]]
    cols = header[1:]
    if cols == ["K", "O", "H"]:
        layout = DOHRS
    elif cols == ["K", "V"]:
        layout = "DPRS"
    else:
        raise ValueError(f"unrecognised table header {header}")
    counts = {}
    for row in rows[1:]:
        name = row[0].strip()
        c = {"silent": "s", "replacement": "r"}.get(name)
        if c is None:
            raise ValueError(f"unknown class {name!r}")
        for h, v in zip(cols, row[1:]):
            val = float(v)
            counts[f"{h}_{c}"] = int(val) if val.is_integer() else val
    return CountTable(layout, m, n, counts)
