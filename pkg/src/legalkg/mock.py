"""Deterministic stand-ins for the language model.

:class:`MockBackend` answers coreference prompts with an alias-table
rewrite and extraction prompts with a gazetteer-driven record list, so whole
pipeline runs are reproducible without a served model. A scenario JSON file
bundles the alias tables, gazetteer and any digest-keyed fixed responses::

    {
      "aliases": {"Person": {"the defendant": "Richard Stone"}},
      "gazetteer": [
        {"surface": "Richard Stone", "type": "Person", "description": "driver"},
        {"surface": "District Court", "type": "Organization", "government": true}
      ],
      "fixtures": {"<request digest>": "<response text>"}
    }
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from legalkg import templates
from legalkg.errors import BackendUnavailableError, InvalidConfigError
from legalkg.extraction import (
    DEFAULT_DELIMITERS,
    Delimiters,
    RawEntityRecord,
    RawRelationshipRecord,
    format_records,
)
from legalkg.gateway import CompletionRequest
from legalkg.schema import TYPE_RANK, EntityType


def find_surface_forms(text: str, forms) -> list[tuple[int, int, str]]:
    """Non-overlapping whole-word, case-insensitive occurrences of ``forms``.

    Returns ``(start, end, form_key)`` sorted by position, where ``form_key``
    is the lowercased form. Overlaps resolve to the longest form, then the
    leftmost.
    """
    keys = sorted({f.lower() for f in forms if f and f.strip()})
    candidates = []
    for key in keys:
        pat = re.compile(rf"(?<!\w)(?={re.escape(key)}(?!\w))", re.IGNORECASE)
        for m in pat.finditer(text):
            candidates.append((m.start(), m.start() + len(key), key))
    candidates.sort(key=lambda c: (-(c[1] - c[0]), c[0], c[2]))
    taken: list[tuple[int, int, str]] = []
    for c in candidates:
        if all(c[1] <= t[0] or c[0] >= t[1] for t in taken):
            taken.append(c)
    return sorted(taken)


def mock_alias_resolver(text: str, alias_table: dict[str, str], entity_type: EntityType | None = None) -> str:
    """Replace whole-word surface forms with their canonical form.

    ``entity_type`` only documents which pass the table belongs to; tables are
    already scoped per type by the caller.
    """
    if not alias_table:
        return text
    table = {k.lower(): v for k, v in alias_table.items()}
    # canonical forms already in the text win the longest-match and stay as written
    protected = {v.lower() for v in alias_table.values()} - set(table)
    out = []
    pos = 0
    for start, end, key in find_surface_forms(text, set(table) | protected):
        out.append(text[pos:start])
        out.append(text[start:end] if key in protected else table[key])
        pos = end
    out.append(text[pos:])
    return "".join(out)


@dataclass(frozen=True)
class GazetteerEntry:
    surface: str
    entity_type: EntityType
    name: str = ""
    description: str = ""
    government: bool = False
    # extracted only without structured guidance (over-extraction)
    generic: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "GazetteerEntry":
        t = EntityType.parse(d["type"])
        if t is None or t is EntityType.UNTYPED:
            raise InvalidConfigError(f"gazetteer entry {d.get('surface')!r}: unknown type {d['type']!r}")
        return cls(
            surface=d["surface"],
            entity_type=t,
            name=d.get("name", ""),
            description=d.get("description", ""),
            government=bool(d.get("government", False)),
            generic=bool(d.get("generic", False)),
        )


_SENTENCE = re.compile(r"(?<=[.!?])\s+")


class ScriptedExtractor:
    """Gazetteer lookup plus sentence co-occurrence relationships.

    Structured prompts (recognized by their FILTER_RULES / EXTRACTION_ORDER
    sections) drop government and generic entries and list entities in type
    order; baseline prompts keep everything in text order.
    """

    def __init__(self, gazetteer: list[GazetteerEntry], delimiters: Delimiters = DEFAULT_DELIMITERS):
        self.entries = {e.surface.lower(): e for e in gazetteer}
        self.delimiters = delimiters

    def respond(self, prompt: str) -> str:
        doc = templates.extract_input(prompt) or ""
        filtering = "# FILTER_RULES" in prompt
        ordered = "# EXTRACTION_ORDER" in prompt

        entities: list[RawEntityRecord] = []
        relationships: list[RawRelationshipRecord] = []
        seen = set()
        for sentence in _SENTENCE.split(doc):
            found = []
            for start, end, key in find_surface_forms(sentence, self.entries):
                e = self.entries[key]
                if filtering and (e.government or e.generic):
                    continue
                name = e.name or sentence[start:end]
                found.append((name, e))
            for name, e in found:
                k = (name.upper(), e.entity_type)
                if k not in seen:
                    seen.add(k)
                    entities.append(RawEntityRecord(name, e.entity_type, e.description))
            for (a, _), (b, _) in zip(found, found[1:]):
                if a.upper() != b.upper():
                    relationships.append(RawRelationshipRecord(a, b, f"{a} is mentioned with {b}", 1.0))
        if ordered:
            entities.sort(key=lambda r: TYPE_RANK[r.entity_type])
        return format_records(entities, relationships, self.delimiters)


class MockBackend:
    """Stateless scripted backend: fixtures, then stage handlers, then echo."""

    name = "mock"

    def __init__(
        self,
        fixtures: dict[str, str] | None = None,
        aliases: dict[EntityType, dict[str, str]] | None = None,
        extractor: ScriptedExtractor | None = None,
        echo: bool = True,
    ):
        self.fixtures = dict(fixtures or {})
        self.aliases = dict(aliases or {})
        self.extractor = extractor
        self.echo = echo

    def generate(self, request: CompletionRequest) -> str:
        hit = self.fixtures.get(request.digest)
        if hit is not None:
            return hit
        tag = request.stage_tag
        if tag.startswith("coref:"):
            etype = EntityType.parse(tag.split(":", 1)[1])
            doc = templates.extract_input(request.prompt)
            if doc is None:
                raise BackendUnavailableError("mock: coref prompt carries no fenced document")
            resolved = mock_alias_resolver(doc, self.aliases.get(etype, {}), etype)
            return f"{templates.OUTPUT_OPEN}\n{resolved}\n{templates.OUTPUT_CLOSE}"
        if tag in ("extraction", "baseline-extraction"):
            if self.extractor is not None:
                return self.extractor.respond(request.prompt)
            return DEFAULT_DELIMITERS.completion
        if self.echo:
            return request.prompt
        raise BackendUnavailableError(f"mock: no scripted answer for stage {tag!r}")


def load_scenario(path: str | Path, delimiters: Delimiters = DEFAULT_DELIMITERS) -> MockBackend:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    aliases = {}
    for type_name, table in data.get("aliases", {}).items():
        t = EntityType.parse(type_name)
        if t is None:
            raise InvalidConfigError(f"{path}: unknown alias type {type_name!r}")
        aliases[t] = dict(table)
    gazetteer = [GazetteerEntry.from_dict(d) for d in data.get("gazetteer", [])]
    extractor = ScriptedExtractor(gazetteer, delimiters) if gazetteer else None
    return MockBackend(fixtures=data.get("fixtures"), aliases=aliases, extractor=extractor)
