"""Rebuild the duplication/noise, degradation and graph-stats tables from a
per-case counts file, and compare averages and degradations to reference values.

    python3 scripts/reproduce_tables.py
    python3 scripts/reproduce_tables.py --counts my_counts.csv --out reports/
"""

import argparse
import sys
from decimal import Decimal
from pathlib import Path

from legalkg.metrics import degradation_report
from legalkg.reporting import averages, degradation_table, fmt, read_reference_counts, render_text, write_reports

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"

# expected Avg rates and relative degradations (percent) for the bundled counts
EXPECTED_AVG = {
    "duplication_rate": {"graphrag": "30.53", "no_coref": "26.01", "no_structprompt": "21.15", "corekg": "20.27"},
    "noise_rate": {"graphrag": "27.43", "no_coref": "17.37", "no_structprompt": "28.86", "corekg": "16.65"},
}
EXPECTED_DEG = {
    ("duplication", "graphrag"): "50.54", ("duplication", "no_coref"): "28.25",
    ("duplication", "no_structprompt"): "4.29", ("noise", "graphrag"): "64.74",
    ("noise", "no_coref"): "4.32", ("noise", "no_structprompt"): "73.33",
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--counts", default=FIXTURES / "reference_case_counts.csv", type=Path)
    ap.add_argument("--errata", default=FIXTURES / "reference_case_counts.errata", type=Path)
    ap.add_argument("--out", type=Path, help="also write the report files here")
    ap.add_argument("--full-precision", action="store_true", help="average exact rates instead of displayed ones")
    args = ap.parse_args(argv)

    reference = read_reference_counts(args.counts, args.errata if args.errata.exists() else None)
    rows = [p.metrics for p in reference]
    precision = None if args.full_precision else 2

    mism = []
    for p in reference:
        m = p.metrics
        for label, got, printed in (("dup", m.duplication_percent(), p.dup_rate),
                                    ("noise", m.noise_percent(), p.noise_rate)):
            if abs(got - printed) > Decimal("0.01"):
                mism.append(f"  {m.case_id:8} {m.config_id:16} {label:5} recomputed {got}  listed {printed}")
    print(f"per-case rates: {2 * len(reference) - len(mism)}/{2 * len(reference)} agree with the listed values")
    print("\n".join(mism))

    avg = averages(rows, precision)
    print("\naverages (recomputed vs expected)")
    for col, exp in EXPECTED_AVG.items():
        for cfg, want in exp.items():
            print(f"  {col:17} {cfg:16} {fmt(avg[cfg][col], 4):>8}  {want:>6}")

    header, body = degradation_table(rows, displayed_precision=precision)
    print("\nrelative degradation")
    print(render_text(header, body), end="")
    worst = Decimal(0)
    for metric, col in (("duplication", "duplication_rate"), ("noise", "noise_rate")):
        rel = degradation_report(metric, {c: a[col] for c, a in avg.items()}).relative_degradation
        for cfg, r in rel.items():
            if (metric, cfg) in EXPECTED_DEG:
                worst = max(worst, abs(100 * r - Decimal(EXPECTED_DEG[metric, cfg])))
    print(f"max deviation from expected: {fmt(worst, 3)} pp")

    if args.out:
        for p in write_reports(rows, args.out, precision):
            print("wrote", p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
