"""Merge per-chunk records into one knowledge graph, compute stats, export.

Entities merge on ``(normalized_name, entity_type)``. Relationship endpoints
resolve to merged nodes: first by exact name and type hint, then by exact
name across types (canonical type order breaks ties), and otherwise to an
UNTYPED placeholder node so no edge is ever silently dropped.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from legalkg.errors import EmptyGraphError
from legalkg.extraction import RawEntityRecord, RawRelationshipRecord
from legalkg.schema import TYPE_RANK, EntityType, node_id, normalize_name

log = logging.getLogger(__name__)

CONFIG_IDS = ("graphrag", "no_coref", "no_structprompt", "corekg")


@dataclass
class EntityNode:
    normalized_name: str
    display_name: str
    entity_type: EntityType
    # (chunk_id, description) per merged record, in (chunk_id, arrival) order
    mentions: list[tuple[int, str]] = field(default_factory=list)
    placeholder: bool = False
    degree: int = 0

    @property
    def id(self) -> str:
        return node_id(self.normalized_name, self.entity_type)

    @property
    def mention_chunks(self) -> list[int]:
        return sorted({c for c, _ in self.mentions})

    @property
    def mention_count(self) -> int:
        return len(self.mentions)

    @property
    def merged_descriptions(self) -> list[str]:
        out: list[str] = []
        for _, d in self.mentions:
            if d and d not in out:
                out.append(d)
        return out


@dataclass(frozen=True)
class RelationshipEdge:
    source: str
    target: str
    description: str = ""
    strength: float | None = None
    chunk_id: int = 0

    def sort_key(self):
        return (
            self.source,
            self.target,
            self.chunk_id,
            self.description,
            self.strength is not None,
            self.strength if self.strength is not None else 0.0,
        )


@dataclass
class KnowledgeGraph:
    case_id: str
    config_id: str
    nodes: dict[str, EntityNode] = field(default_factory=dict)
    edges: list[RelationshipEdge] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def node_list(self) -> list[EntityNode]:
        return [self.nodes[k] for k in sorted(self.nodes)]

    def recompute_degrees(self) -> None:
        for n in self.nodes.values():
            n.degree = 0
        for e in self.edges:
            self.nodes[e.source].degree += 1
            self.nodes[e.target].degree += 1


def build_graph(
    entities: Iterable[RawEntityRecord],
    relationships: Iterable[RawRelationshipRecord],
    case_id: str,
    config_id: str,
) -> KnowledgeGraph:
    ents = sorted(enumerate(entities), key=lambda p: (p[1].chunk_id, p[0]))
    rels = sorted(enumerate(relationships), key=lambda p: (p[1].chunk_id, p[0]))
    g = KnowledgeGraph(case_id=case_id, config_id=config_id)
    meta = Counter()

    surfaces: dict[str, Counter] = {}
    for _, rec in ents:
        norm = rec.normalized_name
        if not norm:
            meta["dropped_empty_entity"] += 1
            continue
        key = node_id(norm, rec.entity_type)
        node = g.nodes.get(key)
        if node is None:
            node = g.nodes[key] = EntityNode(norm, "", rec.entity_type)
            surfaces[key] = Counter()
        node.mentions.append((rec.chunk_id, rec.description))
        surfaces[key][" ".join(rec.name.split())] += 1
    for key, counts in surfaces.items():
        # most frequent surface form; ties -> lexicographically smallest
        g.nodes[key].display_name = min(counts, key=lambda s: (-counts[s], s))

    by_name: dict[str, list[EntityNode]] = {}
    for n in g.nodes.values():
        by_name.setdefault(n.normalized_name, []).append(n)
    for lst in by_name.values():
        lst.sort(key=lambda n: TYPE_RANK[n.entity_type])

    def resolve(name: str, hint: EntityType | None) -> str | None:
        norm = normalize_name(name)
        if not norm:
            return None
        if hint is not None:
            key = node_id(norm, hint)
            if key in g.nodes and not (hint is EntityType.UNTYPED and not g.nodes[key].placeholder):
                return key
        cands = by_name.get(norm)
        if cands:
            return cands[0].id
        return node_id(norm, EntityType.UNTYPED)

    def ensure(key: str, name: str) -> None:
        # placeholders are created only for edges that survive
        if key not in g.nodes:
            norm = key.rpartition("::")[0]
            g.nodes[key] = EntityNode(norm, " ".join(name.split()), EntityType.UNTYPED, placeholder=True)
            by_name.setdefault(norm, []).append(g.nodes[key])
            meta["placeholder_nodes"] += 1

    for _, rec in rels:
        src = resolve(rec.source_name, rec.source_type)
        tgt = resolve(rec.target_name, rec.target_type)
        if src is None or tgt is None:
            meta["dropped_empty_relationship"] += 1
            continue
        if src == tgt:
            meta["dropped_self_loop"] += 1
            log.warning("%s/%s: dropping self-loop on %s", case_id, config_id, src)
            continue
        ensure(src, rec.source_name)
        ensure(tgt, rec.target_name)
        g.edges.append(RelationshipEdge(src, tgt, rec.description, rec.strength, rec.chunk_id))

    g.edges.sort(key=RelationshipEdge.sort_key)
    g.nodes = {k: g.nodes[k] for k in sorted(g.nodes)}
    g.recompute_degrees()
    g.metadata = dict(meta)
    return g


def graph_to_records(g: KnowledgeGraph) -> tuple[list[RawEntityRecord], list[RawRelationshipRecord]]:
    """Records that rebuild ``g`` exactly through :func:`build_graph`."""
    ents = [
        RawEntityRecord(n.display_name, n.entity_type, desc, chunk)
        for n in g.node_list()
        if not n.placeholder
        for chunk, desc in n.mentions
    ]
    rels = []
    for e in g.edges:
        s, t = g.nodes[e.source], g.nodes[e.target]
        rels.append(
            RawRelationshipRecord(s.display_name, t.display_name, e.description, e.strength, e.chunk_id,
                                  s.entity_type, t.entity_type)
        )
    return ents, rels


# --------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class GraphStats:
    node_count: int
    relationship_count: int
    rn_ratio: float
    isolated_node_count: int
    unique_relationship_count: int = 0
    placeholder_count: int = 0


def graph_stats(g: KnowledgeGraph) -> GraphStats:
    if not g.nodes:
        raise EmptyGraphError(f"graph {g.case_id}/{g.config_id} has no nodes")
    n = len(g.nodes)
    m = len(g.edges)
    pairs = {tuple(sorted((e.source, e.target))) for e in g.edges}
    return GraphStats(
        node_count=n,
        relationship_count=m,
        rn_ratio=m / n,
        isolated_node_count=sum(1 for x in g.nodes.values() if x.degree == 0),
        unique_relationship_count=len(pairs),
        placeholder_count=sum(1 for x in g.nodes.values() if x.placeholder),
    )


# --------------------------------------------------------------------------
# GraphML

GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"
_XSI = "http://www.w3.org/2001/XMLSchema-instance"
_SCHEMA = "http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd"

# (key id, for, attr.name, attr.type)
_KEYS = [
    ("g_case", "graph", "case_id", "string"),
    ("g_config", "graph", "config_id", "string"),
    ("n_label", "node", "label", "string"),
    ("n_type", "node", "type", "string"),
    ("n_desc", "node", "description", "string"),
    ("n_degree", "node", "degree", "int"),
    ("n_count", "node", "mention_count", "int"),
    ("n_mentions", "node", "mentions", "string"),
    ("n_placeholder", "node", "placeholder", "boolean"),
    ("e_desc", "edge", "description", "string"),
    ("e_strength", "edge", "strength", "double"),
    ("e_chunk", "edge", "chunk_id", "int"),
]

_BAD_XML = re.compile("[^\t\n\r\u0020-\ud7ff\ue000-\ufffd\U00010000-\U0010ffff]")


def xml_safe(s: str) -> str:
    """Replace characters XML 1.0 cannot carry; fold CR/CRLF to LF."""
    return _BAD_XML.sub("\ufffd", s.replace("\r\n", "\n").replace("\r", "\n"))


def _data(parent: ET.Element, key: str, value) -> None:
    el = ET.SubElement(parent, "data", key=key)
    el.text = value if isinstance(value, str) else str(value)


def graphml_bytes(g: KnowledgeGraph) -> bytes:
    root = ET.Element("graphml", {"xmlns": GRAPHML_NS, "xmlns:xsi": _XSI, "xsi:schemaLocation": _SCHEMA})
    for kid, for_, name, typ in _KEYS:
        ET.SubElement(root, "key", {"id": kid, "for": for_, "attr.name": name, "attr.type": typ})
    graph = ET.SubElement(root, "graph", id="G", edgedefault="directed")
    _data(graph, "g_case", xml_safe(g.case_id))
    _data(graph, "g_config", xml_safe(g.config_id))

    for n in sorted(g.nodes.values(), key=lambda n: xml_safe(n.id)):
        el = ET.SubElement(graph, "node", id=xml_safe(n.id))
        _data(el, "n_label", xml_safe(n.display_name))
        _data(el, "n_type", n.entity_type.value)
        _data(el, "n_desc", xml_safe("\n".join(n.merged_descriptions)))
        _data(el, "n_degree", n.degree)
        _data(el, "n_count", n.mention_count)
        mentions = [[c, xml_safe(d)] for c, d in n.mentions]
        _data(el, "n_mentions", json.dumps(mentions, ensure_ascii=False, separators=(",", ":")))
        _data(el, "n_placeholder", "true" if n.placeholder else "false")

    edges = sorted(
        (RelationshipEdge(xml_safe(e.source), xml_safe(e.target), xml_safe(e.description), e.strength, e.chunk_id)
         for e in g.edges),
        key=RelationshipEdge.sort_key,
    )
    for i, e in enumerate(edges):
        el = ET.SubElement(graph, "edge", id=f"e{i}", source=e.source, target=e.target)
        _data(el, "e_desc", e.description)
        if e.strength is not None:
            _data(el, "e_strength", repr(float(e.strength)))
        _data(el, "e_chunk", e.chunk_id)

    ET.indent(root, space="  ")
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


def export_graphml(g: KnowledgeGraph, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(graphml_bytes(g))
    return path


def graph_digest(g: KnowledgeGraph) -> str:
    return hashlib.sha256(graphml_bytes(g)).hexdigest()


def read_graphml(path: str | Path) -> KnowledgeGraph:
    """Load a graph written by :func:`export_graphml`."""
    root = ET.parse(path).getroot()
    ns = {"g": GRAPHML_NS}
    keyname = {k.get("id"): k.get("attr.name") for k in root.findall("g:key", ns)}
    gel = root.find("g:graph", ns)

    def attrs(el):
        return {keyname[d.get("key")]: (d.text or "") for d in el.findall("g:data", ns)}

    gattr = attrs(gel)
    g = KnowledgeGraph(case_id=gattr.get("case_id", ""), config_id=gattr.get("config_id", ""))
    for el in gel.findall("g:node", ns):
        a = attrs(el)
        nid = el.get("id")
        norm, _, _ = nid.rpartition("::")
        etype = EntityType(a["type"])
        mentions = [(int(c), d) for c, d in json.loads(a.get("mentions", "[]"))]
        g.nodes[nid] = EntityNode(norm, a.get("label", ""), etype, mentions, a.get("placeholder") == "true")
    for el in gel.findall("g:edge", ns):
        a = attrs(el)
        strength = float(a["strength"]) if "strength" in a else None
        g.edges.append(RelationshipEdge(el.get("source"), el.get("target"), a.get("description", ""),
                                        strength, int(a.get("chunk_id", 0))))
    g.edges.sort(key=RelationshipEdge.sort_key)
    g.nodes = {k: g.nodes[k] for k in sorted(g.nodes)}
    g.recompute_degrees()
    return g


# --------------------------------------------------------------------------
# tables

NODE_COLUMNS = ("id", "label", "type", "degree", "mention_count")
EDGE_COLUMNS = ("source", "target", "description", "strength", "chunk_id")


def node_rows(g: KnowledgeGraph) -> list[tuple]:
    return [(n.id, n.display_name, n.entity_type.value, n.degree, n.mention_count) for n in g.node_list()]


def edge_rows(g: KnowledgeGraph) -> list[tuple]:
    return [
        (e.source, e.target, e.description, "" if e.strength is None else repr(float(e.strength)), e.chunk_id)
        for e in sorted(g.edges, key=RelationshipEdge.sort_key)
    ]


def write_csv(path: Path, header, rows) -> Path:
    """UTF-8, comma-separated, ``\\n`` line ends; fields containing a comma,
    quote or line break are double-quoted with inner quotes doubled."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(header)
        w.writerows(rows)
    return path


def _write_parquet(path: Path, header, rows) -> Path:
    import pyarrow as pa
    import pyarrow.parquet as pq

    cols = list(zip(*rows)) if rows else [[] for _ in header]
    table = pa.table({h: [str(v) for v in c] for h, c in zip(header, cols)})
    pq.write_table(table, path)
    return path


def export_tabular(g: KnowledgeGraph, directory: str | Path, stem: str = "", parquet: bool = False) -> list[Path]:
    """Write ``nodes.csv`` and ``edges.csv`` (``<stem>.nodes.csv`` when given).

    With ``parquet=True`` the same rows are also written as Parquet; this
    needs ``pyarrow``.
    """
    directory = Path(directory)
    prefix = f"{stem}." if stem else ""
    written = [
        write_csv(directory / f"{prefix}nodes.csv", NODE_COLUMNS, node_rows(g)),
        write_csv(directory / f"{prefix}edges.csv", EDGE_COLUMNS, edge_rows(g)),
    ]
    if parquet:
        written.append(_write_parquet(directory / f"{prefix}nodes.parquet", NODE_COLUMNS, node_rows(g)))
        written.append(_write_parquet(directory / f"{prefix}edges.parquet", EDGE_COLUMNS, edge_rows(g)))
    return written


def to_networkx(g: KnowledgeGraph):
    """A ``networkx.MultiDiGraph`` view with the GraphML attributes."""
    import networkx as nx

    G = nx.MultiDiGraph(case_id=g.case_id, config_id=g.config_id)
    for n in g.node_list():
        G.add_node(n.id, label=n.display_name, type=n.entity_type.value, degree=n.degree,
                   mention_count=n.mention_count, placeholder=n.placeholder)
    for e in g.edges:
        attrs = {"description": e.description, "chunk_id": e.chunk_id}
        if e.strength is not None:
            attrs["strength"] = e.strength
        G.add_edge(e.source, e.target, **attrs)
    return G
