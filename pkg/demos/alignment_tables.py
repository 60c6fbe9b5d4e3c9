"""From an aligned coding region to observed and expected tables.

Counts fixed differences, one-sided and shared polymorphisms in a small
two-species alignment, shows why columns were left out, and puts the
expected table for a chosen parameter set next to it.

    python3 demos/alignment_tables.py
"""

from prfpoly import ScaledParams, classify_sites, count_tables, parse_alignment, table_means
from prfpoly.ingest import format_table_tsv, species_map_from_lists

fasta = """\
>a1
ATGGCAAAACTGGGTTTTCCC
>a2
ATGGCAAAGCTGGCTTTCCCC
>a3
ATGGCAAAACTGGGTTTTCCC
>b1
ATGGCGAAACTAGGTTTTCCA
>b2
ATGGCGAAACTAGGTTTTCCC
>b3
ATGGCGAGACTAGGTTTTCCC
"""

al = parse_alignment(fasta, species_map_from_lists(["a1", "a2", "a3"], ["b1", "b2", "b3"]))
sites = classify_sites(al)
for j, (v, e) in enumerate(zip(sites.variation, sites.effect)):
    if v != "monomorphic":
        print(f"column {j:2d}: {v:17s} {e:12s} {sites.reason[j]}")

obs = count_tables(sites)
print("\nobserved DOHRS\n" + format_table_tsv(obs.dohrs))
print("observed DPRS\n" + format_table_tsv(obs.dprs))
print("excluded columns:", {k: v for k, v in obs.census.items() if v})

et = table_means(al.m, al.n, ScaledParams(0.5, 1.0), ScaledParams(0.5, 0.5, -1.0))
print("\nexpected DOHRS at t=0.5, theta_s=1, theta_r=0.5, gamma=-1")
print({k: round(v, 4) for k, v in et.means().items()})
