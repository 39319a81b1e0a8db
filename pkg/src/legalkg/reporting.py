"""Per-case metrics files and the three comparison tables.

Every table is written twice: CSV for machines and aligned plain text for
people. Rendering depends only on the metrics rows, so re-running the report
from stored ``metrics.csv`` files reproduces the same bytes.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

from legalkg.errors import InvalidBaseError, LegalKGError
from legalkg.graph import CONFIG_IDS, write_csv
from legalkg.metrics import CaseMetrics, degradation_report, macro_average

METRICS_COLUMNS = (
    "case_id", "config_id", "total_nodes", "duplicate_count", "duplication_rate",
    "noisy_count", "noise_rate", "relationship_count", "unique_relationship_count",
    "isolated_node_count", "cluster_count", "rn_ratio",
)
REPORT_FILES = ("duplication_noise", "degradation", "graph_stats")
REFERENCE = "corekg"


def case_sort_key(case_id: str):
    """Natural order, so ``case2`` sorts before ``case10``."""
    return [int(p) if p.isdigit() else p for p in re.split(r"(\d+)", case_id)]


def fmt(value, places: int = 2, signed: bool = False) -> str:
    if value is None:
        return ""
    d = Decimal(str(value)).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    if d == 0:
        d = abs(d)
    return f"{d:+f}" if signed else f"{d:f}"


def _opt(v) -> str:
    return "" if v is None else str(v)


# --------------------------------------------------------------------------
# metrics files

def metrics_row(m: CaseMetrics) -> tuple:
    return (
        m.case_id, m.config_id, m.total_nodes, m.duplicate_count, fmt(m.duplication_percent()),
        m.noisy_count, fmt(m.noise_percent()), _opt(m.relationship_count),
        _opt(m.unique_relationship_count), _opt(m.isolated_node_count), _opt(m.cluster_count),
        fmt(m.rn_ratio),
    )


def write_metrics(path: str | Path, rows: Iterable[CaseMetrics]) -> Path:
    return write_csv(Path(path), METRICS_COLUMNS, [metrics_row(m) for m in rows])


def _int_or_none(s: str | None) -> int | None:
    return int(s) if s not in (None, "") else None


def read_metrics(path: str | Path) -> list[CaseMetrics]:
    """Counts are authoritative; stored rates are ignored and recomputed."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return [
            CaseMetrics(
                case_id=r["case_id"],
                config_id=r["config_id"],
                total_nodes=int(r["total_nodes"]),
                duplicate_count=int(r["duplicate_count"]),
                noisy_count=int(r["noisy_count"]),
                relationship_count=_int_or_none(r.get("relationship_count")),
                unique_relationship_count=_int_or_none(r.get("unique_relationship_count")),
                isolated_node_count=_int_or_none(r.get("isolated_node_count")),
                cluster_count=_int_or_none(r.get("cluster_count")),
            )
            for r in csv.DictReader(fh)
        ]


def collect_metrics(run_dir: str | Path) -> list[CaseMetrics]:
    """All ``<config>/<case>/metrics.csv`` rows under a run directory."""
    rows = []
    for p in sorted(Path(run_dir).glob("*/*/metrics.csv")):
        rows.extend(read_metrics(p))
    return rows


# --------------------------------------------------------------------------
# reference counts

@dataclass(frozen=True)
class ReferenceRow:
    metrics: CaseMetrics
    dup_rate: Decimal
    noise_rate: Decimal


def read_errata(path: str | Path) -> list[tuple[str, str, str, int]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            case_id, config_id, column, value = line.split()
            out.append((case_id, config_id, column, int(value)))
    return out


def read_reference_counts(path: str | Path, errata: str | Path | None = None) -> list[ReferenceRow]:
    """Load a transcribed counts table; ``errata`` patches individual count cells.

    Columns: ``case_id, config_id, dup_total, duplicate_count, dup_rate,
    noise_total, noisy_count, noise_rate``. After errata the two totals must
    agree, since both halves of the table describe the same graph.
    """
    with Path(path).open(encoding="utf-8", newline="") as fh:
        raw = list(csv.DictReader(fh))
    fixes = read_errata(errata) if errata else []
    index = {(r["case_id"], r["config_id"]): r for r in raw}
    for case_id, config_id, column, value in fixes:
        if (case_id, config_id) not in index:
            raise LegalKGError(f"errata refers to unknown row {case_id}/{config_id}")
        index[case_id, config_id][column] = str(value)
    out = []
    for r in raw:
        if r["dup_total"] != r["noise_total"]:
            raise LegalKGError(f"{r['case_id']}/{r['config_id']}: totals disagree ({r['dup_total']} vs {r['noise_total']})")
        m = CaseMetrics(r["case_id"], r["config_id"], int(r["dup_total"]),
                        int(r["duplicate_count"]), int(r["noisy_count"]))
        out.append(ReferenceRow(m, Decimal(r["dup_rate"]), Decimal(r["noise_rate"])))
    return out


# --------------------------------------------------------------------------
# tables

def _configs(rows: Sequence[CaseMetrics]) -> list[str]:
    present = {m.config_id for m in rows}
    return [c for c in CONFIG_IDS if c in present] + sorted(present - set(CONFIG_IDS))


def _by_config(rows):
    out: dict[str, list[CaseMetrics]] = {}
    for m in rows:
        out.setdefault(m.config_id, []).append(m)
    return out


def averages(rows: Sequence[CaseMetrics], displayed_precision: int | None = 2) -> dict[str, dict[str, Decimal]]:
    return {cfg: macro_average(ms, displayed_precision) for cfg, ms in _by_config(rows).items()}


def duplication_noise_table(rows: Sequence[CaseMetrics], displayed_precision: int | None = 2):
    configs = _configs(rows)
    header = ["case_id"]
    for c in configs:
        header += [f"{c}_total", f"{c}_dup", f"{c}_dup_rate"]
    for c in configs:
        header += [f"{c}_total", f"{c}_noisy", f"{c}_noise_rate"]
    cell = {(m.case_id, m.config_id): m for m in rows}
    cases = sorted({m.case_id for m in rows}, key=case_sort_key)
    body = []
    for case in cases:
        row = [case]
        for c in configs:
            m = cell.get((case, c))
            row += [m.total_nodes, m.duplicate_count, fmt(m.duplication_percent())] if m else ["", "", ""]
        for c in configs:
            m = cell.get((case, c))
            row += [m.total_nodes, m.noisy_count, fmt(m.noise_percent())] if m else ["", "", ""]
        body.append(row)
    avg = averages(rows, displayed_precision)
    row = ["Avg"]
    for c in configs:
        a = avg[c]
        row += [fmt(a["total_nodes"]), fmt(a["duplicate_count"]), fmt(a["duplication_rate"])]
    for c in configs:
        a = avg[c]
        row += [fmt(a["total_nodes"]), fmt(a["noisy_count"]), fmt(a["noise_rate"])]
    body.append(row)
    return header, body


def degradation_table(rows: Sequence[CaseMetrics], reference: str = REFERENCE, displayed_precision: int | None = 2):
    header = ["metric", "config_id", "average", "relative_degradation_pct"]
    avg = averages(rows, displayed_precision)
    if reference not in avg:
        return header, []
    body = []
    for metric, column in (("duplication", "duplication_rate"), ("noise", "noise_rate")):
        values = {c: avg[c][column] for c in _configs(rows)}
        try:
            rel = degradation_report(metric, values, reference).relative_degradation
        except InvalidBaseError:
            # undefined against a zero reference; leave the column blank
            rel = {}
        for c, v in values.items():
            r = rel.get(c)
            body.append([metric, c, fmt(v), "" if r is None else fmt(r * 100, signed=True)])
    return header, body


def graph_stats_table(rows: Sequence[CaseMetrics]):
    header = ["case_id", "config_id", "nodes", "relationships", "rn_ratio",
              "isolated_nodes", "unique_relationships"]
    order = {c: i for i, c in enumerate(_configs(rows))}
    body = [
        [m.case_id, m.config_id, m.total_nodes, _opt(m.relationship_count), fmt(m.rn_ratio),
         _opt(m.isolated_node_count), _opt(m.unique_relationship_count)]
        for m in sorted(rows, key=lambda m: (case_sort_key(m.case_id), order[m.config_id]))
    ]
    return header, body


def render_text(header, body) -> str:
    cells = [[str(x) for x in header]] + [[str(x) for x in r] for r in body]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for k, r in enumerate(cells):
        parts = [r[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_reports(rows: Sequence[CaseMetrics], out_dir: str | Path, displayed_precision: int | None = 2) -> list[Path]:
    """Write ``duplication_noise``, ``degradation`` and ``graph_stats`` as .csv and .txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = {
        "duplication_noise": duplication_noise_table(rows, displayed_precision),
        "degradation": degradation_table(rows, displayed_precision=displayed_precision),
        "graph_stats": graph_stats_table(rows),
    }
    written = []
    for name, (header, body) in tables.items():
        written.append(write_csv(out_dir / f"{name}.csv", header, body))
        p = out_dir / f"{name}.txt"
        p.write_bytes(render_text(header, body).encode("utf-8"))
        written.append(p)
    return written
