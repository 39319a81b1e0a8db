import random
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from legalkg.errors import EmptyGraphError, InvalidBaseError, OverrideError
from legalkg.extraction import RawEntityRecord
from legalkg.graph import build_graph
from legalkg.metrics import (
    CaseMetrics,
    Overrides,
    case_metrics,
    cluster_duplicates,
    degradation_report,
    duplicate_count,
    macro_average,
    percent,
    relative_degradation,
    score_noise,
)
from legalkg.schema import EntityType
from legalkg.similarity import partial_ratio
from oracles import components_oracle
from strategies import random_name_graph

P, L = EntityType.PERSON, EntityType.LOCATION


def g_of(*pairs):
    return build_graph([RawEntityRecord(n, t) for n, t in pairs], [], "c", "corekg")


def test_substring_chain_is_one_cluster():
    g = g_of(("STONE", P), ("DEFENDANT STONE", P), ("RICHARD STONE", P))
    clusters = cluster_duplicates(g)
    assert [c.members for c in clusters] == [("DEFENDANT STONE::Person", "RICHARD STONE::Person", "STONE::Person")]
    assert duplicate_count(clusters) == 2


def test_types_never_cluster():
    assert cluster_duplicates(g_of(("STONE", P), ("STONE", L))) == []


def test_representative_rule():
    g = build_graph([RawEntityRecord(n, P) for n in ["Stone", "Richard Stone", "Defendant Stone", "Stone"]],
                    [], "c", "x")
    (c,) = cluster_duplicates(g)
    assert c.representative == "STONE::Person"
    g = g_of(("STONE", P), ("RICHARD STONE", P))
    assert cluster_duplicates(g)[0].representative == "RICHARD STONE::Person"


def test_rate_examples():
    assert percent(32, 94) == Decimal("34.04")
    assert percent(28, 86) == Decimal("32.56")
    assert CaseMetrics("c", "corekg", 42, 0, 0).noise_percent() == Decimal("0.00")
    assert percent(1, 8) == Decimal("12.50") and percent(1, 3, None) > Decimal("33.333")


def test_singletons_give_zero():
    g = g_of(("ALPHA", P), ("ZULU", P))
    m = case_metrics(g, cluster_duplicates(g), 0)
    assert m.duplicate_count == 0 and m.duplication_rate == 0 and m.cluster_count == 0


def test_case_metrics_errors():
    with pytest.raises(EmptyGraphError):
        CaseMetrics("c", "x", 0, 0, 0)
    with pytest.raises(ValueError):
        CaseMetrics("c", "x", 3, 4, 0)


def test_noise():
    g = g_of(("COURT", L), ("NISSAN MAXIMA", EntityType.MEANS_OF_TRANSPORTATION), ("COURTNEY", P))
    ids, n = score_noise(g)
    assert ids == ["COURT::Location"] and n == 1
    ov = Overrides.parse("noisy COURTNEY::Person\nclean COURT::Location\n")
    assert score_noise(g, overrides=ov) == (["COURTNEY::Person"], 1)


def test_overrides_parse_and_apply():
    text = '# review\nmerge "ANA GOMEZ::Person" GOMEZ::Person  # same person\n\nsplit STONE::Person\n'
    ov = Overrides.parse(text)
    assert ov.directives == [("merge", ("ANA GOMEZ::Person", "GOMEZ::Person")), ("split", ("STONE::Person",))]
    g = g_of(("ANA GOMEZ", P), ("GOMEZ", P), ("STONE", P), ("RICHARD STONE", P), ("MARIA", P))
    clusters = cluster_duplicates(g, overrides=ov)
    assert [c.members for c in clusters] == [("ANA GOMEZ::Person", "GOMEZ::Person")]
    ov = Overrides.parse("merge MARIA::Person STONE::Person")
    _, c = cluster_duplicates(g, overrides=ov)
    assert set(c.members) == {"MARIA::Person", "STONE::Person", "RICHARD STONE::Person"}


@pytest.mark.parametrize("text", ["frobnicate X::Person", "merge X::Person", "noisy"])
def test_overrides_syntax_errors(text):
    with pytest.raises(OverrideError):
        Overrides.parse(text)


def test_overrides_unknown_and_cross_type():
    g = g_of(("STONE", P), ("STONE", L))
    with pytest.raises(OverrideError) as info:
        cluster_duplicates(g, overrides=Overrides.parse("split NOBODY::Person"))
    assert "NOBODY::Person" in str(info.value)
    with pytest.raises(OverrideError):
        cluster_duplicates(g, overrides=Overrides.parse("merge STONE::Person STONE::Location"))


def test_bad_threshold():
    with pytest.raises(ValueError):
        cluster_duplicates(g_of(("A", P)), threshold=0)


@pytest.mark.parametrize("seed", range(15))
def test_clusters_match_component_oracle(seed):
    rng = random.Random(seed)
    g = build_graph(random_name_graph(rng, rng.randint(2, 14)), [], "c", "x")
    threshold = rng.choice([60, 75, 90])
    names = {i: n.normalized_name for i, n in g.nodes.items()}
    comps = components_oracle(list(names), lambda a, b: partial_ratio(names[a], names[b]) >= threshold)
    expected = sorted(tuple(sorted(c)) for c in comps if len(c) >= 2)
    clusters = cluster_duplicates(g, threshold)
    assert sorted(c.members for c in clusters) == expected
    assert duplicate_count(clusters) == sum(len(c) - 1 for c in expected)


@given(st.randoms(use_true_random=False), st.integers(1, 12))
def test_threshold_monotone_and_bounded(rnd, n):
    g = build_graph(random_name_graph(rnd, n), [], "c", "x")
    counts = [duplicate_count(cluster_duplicates(g, t)) for t in (60, 75, 90)]
    assert counts[0] >= counts[1] >= counts[2]
    assert all(0 <= c <= len(g.nodes) - 1 for c in counts)


def test_macro_average():
    a = CaseMetrics("1", "x", 3, 1, 0, relationship_count=6)
    b = CaseMetrics("2", "x", 3, 2, 3, relationship_count=0)
    avg = macro_average([a, b])
    assert avg["duplication_rate"] == (Decimal("33.33") + Decimal("66.67")) / 2
    assert avg["noise_rate"] == 50 and avg["rn_ratio"] == 1
    exact = macro_average([a, b], None)
    assert exact["duplication_rate"] == 50
    assert macro_average([a])["duplication_rate"] == a.duplication_percent()
    with pytest.raises(ValueError):
        macro_average([])


def test_relative_degradation():
    assert relative_degradation(Decimal(3), Decimal(3)) == 0
    assert relative_degradation(30, 20) == 0.5
    with pytest.raises(InvalidBaseError):
        relative_degradation(1, 0)
    rep = degradation_report("noise", {"corekg": Decimal(10), "graphrag": Decimal(15)})
    assert rep.relative_degradation == {"corekg": 0, "graphrag": Decimal("0.5")}
    with pytest.raises(ValueError):
        degradation_report("speed", {"corekg": Decimal(1)})


@given(st.floats(0.01, 100), st.floats(0, 100), st.floats(0, 100))
def test_degradation_monotone(base, x, y):
    lo, hi = sorted((x, y))
    assert relative_degradation(lo, base) <= relative_degradation(hi, base)
