"""Graph quality measures: duplicate clusters, noisy nodes, rates, averages.

Duplicates: within each entity type, node pairs whose canonical names have
``partial_ratio >= threshold`` are linked, connected components of size >= 2
are clusters, and an override file then stands in for expert review. The
duplicate count is ``sum(|C| - 1)`` over clusters.

Rates are kept as exact fractions of counts; tables show percentages
rounded half-up to two decimals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, localcontext
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from legalkg.errors import EmptyGraphError, InvalidBaseError, OverrideError
from legalkg.graph import GraphStats, KnowledgeGraph, graph_stats
from legalkg.schema import TYPE_RANK, EntityType, TermMatcher, read_term_list
from legalkg.similarity import partial_ratio

DEFAULT_THRESHOLD = 75.0
TWO_PLACES = Decimal("0.01")
_TOKEN = re.compile(r'"([^"]*)"|(\S+)')


# --------------------------------------------------------------------------
# overrides

@dataclass
class Overrides:
    """Expert-review directives: ``merge``, ``split``, ``noisy``, ``clean``."""

    directives: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)

    @property
    def noisy(self) -> set[str]:
        return {i for op, ids in self.directives if op == "noisy" for i in ids}

    @property
    def clean(self) -> set[str]:
        return {i for op, ids in self.directives if op == "clean" for i in ids}

    @classmethod
    def parse(cls, text: str, source: str = "<overrides>") -> "Overrides":
        """One directive per line; ids with spaces go in double quotes."""
        out = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            op, _, rest = line.partition(" ")
            op = op.lower()
            ids = tuple(q or t for q, t in _TOKEN.findall(rest))
            if op not in ("merge", "split", "noisy", "clean"):
                raise OverrideError(f"{source}:{lineno}: unknown directive {op!r}")
            if len(ids) < (2 if op == "merge" else 1):
                raise OverrideError(f"{source}:{lineno}: {op} has too few ids")
            out.append((op, ids))
        return cls(out)

    @classmethod
    def from_file(cls, path: str | Path) -> "Overrides":
        path = Path(path)
        return cls.parse(path.read_text(encoding="utf-8"), str(path))

    def check_ids(self, g: KnowledgeGraph) -> None:
        unknown = sorted({i for _, ids in self.directives for i in ids if i not in g.nodes})
        if unknown:
            raise OverrideError(f"override ids not in graph {g.case_id}/{g.config_id}: {unknown}", unknown)


# --------------------------------------------------------------------------
# duplicates

@dataclass(frozen=True)
class DuplicateCluster:
    entity_type: EntityType
    members: tuple[str, ...]
    representative: str

    @property
    def size(self) -> int:
        return len(self.members)


class _DSU:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def similarity_components(names: dict[str, str], threshold: float) -> list[set[str]]:
    """Connected components of the ``partial_ratio >= threshold`` graph."""
    dsu = _DSU(sorted(names))
    for a, b in combinations(sorted(names), 2):
        if partial_ratio(names[a], names[b]) >= threshold:
            dsu.union(a, b)
    groups: dict[str, set[str]] = {}
    for x in names:
        groups.setdefault(dsu.find(x), set()).add(x)
    return list(groups.values())


def _representative(g: KnowledgeGraph, members) -> str:
    return min(members, key=lambda i: (-g.nodes[i].mention_count, -len(g.nodes[i].display_name), i))


def cluster_duplicates(
    g: KnowledgeGraph,
    threshold: float = DEFAULT_THRESHOLD,
    overrides: Overrides | None = None,
) -> list[DuplicateCluster]:
    if not 0 < threshold <= 100:
        raise ValueError(f"threshold must be in (0, 100], got {threshold}")
    by_type: dict[EntityType, dict[str, str]] = {}
    for n in g.nodes.values():
        by_type.setdefault(n.entity_type, {})[n.id] = n.normalized_name

    groups: list[set[str]] = []
    for names in by_type.values():
        groups.extend(c for c in similarity_components(names, threshold) if len(c) >= 2)

    if overrides is not None:
        overrides.check_ids(g)
        for op, ids in overrides.directives:
            if op == "merge":
                types = {g.nodes[i].entity_type for i in ids}
                if len(types) > 1:
                    raise OverrideError(f"merge across entity types: {list(ids)}", ids)
                merged = set(ids)
                keep = []
                for c in groups:
                    if c & merged:
                        merged |= c
                    else:
                        keep.append(c)
                groups = keep + [merged]
            elif op == "split":
                for c in groups:
                    c.difference_update(ids)
                groups = [c for c in groups if len(c) >= 2]

    clusters = [
        DuplicateCluster(g.nodes[next(iter(c))].entity_type, tuple(sorted(c)), _representative(g, c))
        for c in groups
        if len(c) >= 2
    ]
    clusters.sort(key=lambda c: (TYPE_RANK[c.entity_type], c.members))
    return clusters


def duplicate_count(clusters: Iterable[DuplicateCluster]) -> int:
    return sum(c.size - 1 for c in clusters)


# --------------------------------------------------------------------------
# noise

def default_noise_terms() -> list[str]:
    with resources.as_file(resources.files("legalkg").joinpath("data", "noise_lexicon.txt")) as p:
        return read_term_list(p)


def score_noise(
    g: KnowledgeGraph,
    lexicon: Sequence[str] | TermMatcher | None = None,
    overrides: Overrides | None = None,
) -> tuple[list[str], int]:
    """Noisy node ids (sorted) and their count.

    A node is noisy when its canonical name contains a lexicon term as a whole
    word, or an override marks it ``noisy``; ``clean`` overrides win.
    """
    if lexicon is None:
        lexicon = default_noise_terms()
    match = lexicon if isinstance(lexicon, TermMatcher) else TermMatcher(lexicon)
    forced, exempt = set(), set()
    if overrides is not None:
        overrides.check_ids(g)
        forced, exempt = overrides.noisy, overrides.clean
    noisy = sorted(
        nid for nid, n in g.nodes.items()
        if nid not in exempt and (nid in forced or match(n.normalized_name))
    )
    return noisy, len(noisy)


# --------------------------------------------------------------------------
# per-case figures

def percent(count: int, total: int, places: int | None = 2) -> Decimal:
    """``100 * count / total``; rounded half-up to ``places`` unless ``None``."""
    if total <= 0:
        raise EmptyGraphError("rate of an empty graph")
    with localcontext() as ctx:
        ctx.prec = 40
        value = Decimal(100 * count) / Decimal(total)
    if places is None:
        return value
    return value.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def round2(value) -> Decimal:
    return Decimal(str(value)).quantize(TWO_PLACES, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    config_id: str
    total_nodes: int
    duplicate_count: int
    noisy_count: int
    relationship_count: int | None = None
    unique_relationship_count: int | None = None
    isolated_node_count: int | None = None
    cluster_count: int | None = None

    def __post_init__(self):
        if self.total_nodes <= 0:
            raise EmptyGraphError(f"{self.case_id}/{self.config_id}: total_nodes must be positive")
        if not 0 <= self.duplicate_count <= self.total_nodes:
            raise ValueError("duplicate_count out of range")
        if not 0 <= self.noisy_count <= self.total_nodes:
            raise ValueError("noisy_count out of range")

    @property
    def duplication_rate(self) -> float:
        return self.duplicate_count / self.total_nodes

    @property
    def noise_rate(self) -> float:
        return self.noisy_count / self.total_nodes

    @property
    def rn_ratio(self) -> float | None:
        if self.relationship_count is None:
            return None
        return self.relationship_count / self.total_nodes

    def duplication_percent(self, places: int | None = 2) -> Decimal:
        return percent(self.duplicate_count, self.total_nodes, places)

    def noise_percent(self, places: int | None = 2) -> Decimal:
        return percent(self.noisy_count, self.total_nodes, places)


def case_metrics(
    g: KnowledgeGraph,
    clusters: Sequence[DuplicateCluster],
    noisy_count: int,
    stats: GraphStats | None = None,
) -> CaseMetrics:
    if not g.nodes:
        raise EmptyGraphError(f"graph {g.case_id}/{g.config_id} has no nodes")
    stats = stats or graph_stats(g)
    return CaseMetrics(
        case_id=g.case_id,
        config_id=g.config_id,
        total_nodes=stats.node_count,
        duplicate_count=duplicate_count(clusters),
        noisy_count=noisy_count,
        relationship_count=stats.relationship_count,
        unique_relationship_count=stats.unique_relationship_count,
        isolated_node_count=stats.isolated_node_count,
        cluster_count=len(clusters),
    )


def evaluate_graph(
    g: KnowledgeGraph,
    threshold: float = DEFAULT_THRESHOLD,
    lexicon=None,
    overrides: Overrides | None = None,
) -> tuple[CaseMetrics, list[DuplicateCluster], list[str]]:
    clusters = cluster_duplicates(g, threshold, overrides)
    noisy, n_noisy = score_noise(g, lexicon, overrides)
    return case_metrics(g, clusters, n_noisy), clusters, noisy


# --------------------------------------------------------------------------
# aggregates

AVERAGE_COLUMNS = ("total_nodes", "duplicate_count", "duplication_rate", "noisy_count", "noise_rate", "rn_ratio")


def macro_average(per_case: Sequence[CaseMetrics], displayed_precision: int | None = 2) -> dict[str, Decimal]:
    """Arithmetic mean of each column over cases (rates in percent).

    With ``displayed_precision`` set, the mean is taken over per-case rates as
    displayed (rounded half-up to that many places), the way averages are
    computed from a printed table. ``None`` averages exact rates. The result is
    not rounded either way.
    """
    if not per_case:
        raise ValueError("macro_average needs at least one case")
    n = Decimal(len(per_case))
    with localcontext() as ctx:
        ctx.prec = 40
        out = {
            "total_nodes": sum(Decimal(m.total_nodes) for m in per_case) / n,
            "duplicate_count": sum(Decimal(m.duplicate_count) for m in per_case) / n,
            "duplication_rate": sum(m.duplication_percent(displayed_precision) for m in per_case) / n,
            "noisy_count": sum(Decimal(m.noisy_count) for m in per_case) / n,
            "noise_rate": sum(m.noise_percent(displayed_precision) for m in per_case) / n,
        }
        rn = [m for m in per_case if m.relationship_count is not None]
        if len(rn) == len(per_case):
            out["rn_ratio"] = sum(Decimal(m.relationship_count) / Decimal(m.total_nodes) for m in rn) / n
    return out


def relative_degradation(value, base):
    """``(value - base) / base`` as a fraction; multiply by 100 for percent."""
    if base <= 0:
        raise InvalidBaseError(f"base must be positive, got {base}")
    return (value - base) / base


@dataclass(frozen=True)
class DegradationReport:
    metric: str
    averages: dict[str, Decimal]
    relative_degradation: dict[str, Decimal]


def degradation_report(metric: str, averages: dict[str, Decimal], reference: str = "corekg") -> DegradationReport:
    if metric not in ("duplication", "noise"):
        raise ValueError("metric must be 'duplication' or 'noise'")
    base = averages[reference]
    with localcontext() as ctx:
        ctx.prec = 40
        rel = {cfg: relative_degradation(v, base) for cfg, v in averages.items()}
    return DegradationReport(metric, dict(averages), rel)
