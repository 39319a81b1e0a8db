from decimal import Decimal

import pytest

from legalkg.errors import LegalKGError
from legalkg.metrics import CaseMetrics
from legalkg.reporting import (
    case_sort_key,
    degradation_table,
    duplication_noise_table,
    fmt,
    graph_stats_table,
    read_metrics,
    read_reference_counts,
    render_text,
    write_metrics,
    write_reports,
)


def rows():
    out = []
    for i, (t, d, n, r) in enumerate([(10, 2, 1, 20), (8, 1, 0, 8), (12, 4, 3, 30)], 1):
        for cfg, k in (("graphrag", 2), ("corekg", 1)):
            out.append(CaseMetrics(f"case{i * 5}", cfg, t * k, d * k, n * k, relationship_count=r,
                                   unique_relationship_count=r - 1, isolated_node_count=0, cluster_count=d))
    return out


def test_fmt():
    assert fmt(Decimal("2.875")) == "2.88"
    assert fmt(Decimal("-0.001")) == "0.00"
    assert fmt(Decimal("0.5059"), signed=True) == "+0.51"
    assert fmt(None) == ""


def test_natural_case_order():
    assert sorted(["case10", "case2", "case1"], key=case_sort_key) == ["case1", "case2", "case10"]


def test_single_case_average_equals_case():
    m = CaseMetrics("c1", "corekg", 7, 2, 1, relationship_count=9)
    _, body = duplication_noise_table([m])
    assert body[1][0] == "Avg" and body[1][3] == body[0][3] == "28.57" and body[1][6] == "14.29"


def test_tables_layout():
    header, body = duplication_noise_table(rows())
    assert header[:4] == ["case_id", "graphrag_total", "graphrag_dup", "graphrag_dup_rate"]
    assert [r[0] for r in body] == ["case5", "case10", "case15", "Avg"]
    h, b = degradation_table(rows())
    assert [r[1] for r in b] == ["graphrag", "corekg"] * 2
    assert b[1][3] == "+0.00"
    _, g = graph_stats_table(rows())
    assert g[0][:5] == ["case5", "graphrag", 20, "20", "1.00"]


def test_zero_reference_leaves_blank():
    rs = [CaseMetrics("c", "corekg", 5, 0, 0), CaseMetrics("c", "graphrag", 5, 1, 1)]
    _, body = degradation_table(rs)
    assert all(r[3] == "" for r in body)


def test_render_text_alignment():
    text = render_text(["a", "bb"], [["x", 1], ["yyy", 22]])
    assert text.splitlines() == ["a    bb", "---  --", "x     1", "yyy  22"]


def test_reports_reproducible_from_metrics(tmp_path):
    write_metrics(tmp_path / "m.csv", rows())
    back = read_metrics(tmp_path / "m.csv")
    assert back == rows()
    a = write_reports(rows(), tmp_path / "a")
    b = write_reports(back, tmp_path / "b")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
    assert len(a) == 6


def test_reference_counts_loader(fixtures_dir, tmp_path):
    reference = read_reference_counts(fixtures_dir / "reference_case_counts.csv",
                                      fixtures_dir / "reference_case_counts.errata")
    assert len(reference) == 80
    with pytest.raises(LegalKGError, match="totals disagree"):
        read_reference_counts(fixtures_dir / "reference_case_counts.csv")
    bad = tmp_path / "bad.errata"
    bad.write_text("case99 corekg dup_total 1\n")
    with pytest.raises(LegalKGError, match="unknown row"):
        read_reference_counts(fixtures_dir / "reference_case_counts.csv", bad)
