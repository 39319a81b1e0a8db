"""Chunk-level entity/relationship extraction and the tuple-delimited record format.

Model output follows the GraphRAG-style convention::

    ("entity"<|>NAME<|>TYPE<|>DESCRIPTION)##("relationship"<|>SRC<|>TGT<|>DESCRIPTION<|>STRENGTH)<|COMPLETE|>

Both prompt variants share the parser and everything downstream; only the
prompt text differs between them.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from legalkg import templates
from legalkg.errors import InvalidConfigError, TemplateInvalidError
from legalkg.gateway import DEFAULT_MODEL, CompletionRequest, Gateway
from legalkg.ingest import Chunk
from legalkg.schema import ENTITY_TYPES, EntityType, TermMatcher, normalize_name, read_term_list

log = logging.getLogger(__name__)

VARIANTS = ("structured", "baseline")
STRUCTURED_SECTIONS = ("EXTRACTION_ORDER", "TYPE_DEFINITIONS", "FILTER_RULES")


@dataclass(frozen=True)
class Delimiters:
    field_sep: str = "<|>"
    record_sep: str = "##"
    completion: str = "<|COMPLETE|>"

    def __post_init__(self):
        items = (self.field_sep, self.record_sep, self.completion)
        if not all(items):
            raise InvalidConfigError("delimiters must be non-empty")
        if len(set(items)) != 3:
            raise InvalidConfigError("delimiters must be pairwise distinct")


DEFAULT_DELIMITERS = Delimiters()


@dataclass(frozen=True)
class RawEntityRecord:
    name: str
    entity_type: EntityType
    description: str = ""
    chunk_id: int = 0

    @property
    def normalized_name(self) -> str:
        return normalize_name(self.name)


@dataclass(frozen=True)
class RawRelationshipRecord:
    source_name: str
    target_name: str
    description: str = ""
    strength: float | None = None
    chunk_id: int = 0
    # endpoint type hints; the parser leaves these unset
    source_type: EntityType | None = None
    target_type: EntityType | None = None


# --------------------------------------------------------------------------
# parsing

def _unquote(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        s = s[1:-1].strip()
    return s


def _parse_float(s: str) -> float | None:
    try:
        return float(s)
    except ValueError:
        return None


def parse_records(
    text: str,
    delimiters: Delimiters = DEFAULT_DELIMITERS,
    chunk_id: int = 0,
    strict: bool = True,
    fallback_type: EntityType | None = None,
) -> tuple[list[RawEntityRecord], list[RawRelationshipRecord], list[str]]:
    """Parse a delimiter-structured model response. Never raises on bad input.

    Entity names keep their original casing; compare via ``normalized_name``.
    In lenient mode (``strict=False``) unknown entity types map to
    ``fallback_type`` instead of being skipped.
    """
    d = delimiters
    entities: list[RawEntityRecord] = []
    relationships: list[RawRelationshipRecord] = []
    warnings: list[str] = []

    end = text.find(d.completion)
    if end < 0:
        warnings.append("no completion marker")
        body = text
    else:
        body = text[:end]

    for seg in body.split(d.record_sep):
        seg = seg.strip()
        if not seg:
            continue
        lo = seg.find("(")
        hi = seg.rfind(")")
        rec = seg[lo + 1: hi] if 0 <= lo < hi else seg
        fields = [f.strip() for f in rec.split(d.field_sep)]
        tag = _unquote(fields[0]).lower()

        if tag == "entity":
            if len(fields) < 3:
                warnings.append(f"entity record has too few fields: {seg[:80]!r}")
                continue
            name = _unquote(fields[1])
            if not normalize_name(name):
                warnings.append("entity record with empty name")
                continue
            raw_type = _unquote(fields[2])
            etype = EntityType.parse(raw_type)
            if etype is None or etype is EntityType.UNTYPED:
                if strict or fallback_type is None:
                    warnings.append(f"unknown entity type {raw_type!r} for {name!r}")
                    continue
                etype = fallback_type
            desc = _unquote(d.field_sep.join(fields[3:]))
            entities.append(RawEntityRecord(name, etype, desc, chunk_id))

        elif tag == "relationship":
            if len(fields) < 3:
                warnings.append(f"relationship record has too few fields: {seg[:80]!r}")
                continue
            src, tgt = _unquote(fields[1]), _unquote(fields[2])
            if not normalize_name(src) or not normalize_name(tgt):
                warnings.append("relationship record with empty endpoint")
                continue
            if normalize_name(src) == normalize_name(tgt):
                warnings.append(f"self-loop relationship on {src!r} skipped")
                continue
            rest = fields[3:]
            strength = None
            if len(rest) >= 2 and _parse_float(_unquote(rest[-1])) is not None:
                strength = _parse_float(_unquote(rest[-1]))
                rest = rest[:-1]
            desc = _unquote(d.field_sep.join(rest))
            relationships.append(RawRelationshipRecord(src, tgt, desc, strength, chunk_id))

        else:
            warnings.append(f"unrecognized record tag {tag!r}")

    return entities, relationships, warnings


def format_records(
    entities: list[RawEntityRecord],
    relationships: list[RawRelationshipRecord],
    delimiters: Delimiters = DEFAULT_DELIMITERS,
) -> str:
    """Inverse of :func:`parse_records` for well-formed records."""
    f = delimiters.field_sep
    out = [f'("entity"{f}{e.name}{f}{e.entity_type.value}{f}{e.description})' for e in entities]
    for r in relationships:
        fields = [r.source_name, r.target_name, r.description]
        if r.strength is not None:
            fields.append(repr(float(r.strength)))
        out.append('("relationship"' + f + f.join(fields) + ")")
    return f"\n{delimiters.record_sep}\n".join(out) + f"\n{delimiters.completion}"


# --------------------------------------------------------------------------
# prompt config

def _parse_order(body: str) -> tuple[EntityType, ...]:
    order = []
    for line in body.splitlines():
        line = re.sub(r"^\s*(?:\d+[.)]|[-*])\s*", "", line).strip()
        if not line:
            continue
        t = EntityType.parse(line.split(":", 1)[0])
        if t is None:
            raise TemplateInvalidError(f"unknown entity type in EXTRACTION_ORDER: {line!r}")
        order.append(t)
    return tuple(order)


def _parse_definitions(body: str) -> dict[EntityType, str]:
    defs: dict[EntityType, list[str]] = {}
    current = None
    for line in body.splitlines():
        m = re.match(r"^([A-Za-z][A-Za-z ]*?):\s*(.*)$", line)
        t = EntityType.parse(m.group(1)) if m else None
        if t is not None and t is not EntityType.UNTYPED:
            current = t
            defs[t] = [m.group(2).strip()]
        elif current is not None and line.strip():
            defs[current].append(line.strip())
    return {t: " ".join(p for p in parts if p) for t, parts in defs.items()}


def _parse_rules(body: str) -> tuple[str, ...]:
    return tuple(
        re.sub(r"^\s*(?:[-*]|\d+[.)])\s*", "", line).strip()
        for line in body.splitlines()
        if line.strip()
    )


@dataclass(frozen=True)
class ExtractionPromptConfig:
    variant: str
    layout: tuple[str, ...]
    blocks: dict[str, str] = field(default_factory=dict)
    extraction_order: tuple[EntityType, ...] = ()
    type_definitions: dict[EntityType, str] = field(default_factory=dict)
    filter_rules: tuple[str, ...] = ()
    delimiters: Delimiters = DEFAULT_DELIMITERS

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidConfigError(f"variant must be one of {VARIANTS}")
        if self.variant == "structured":
            if self.extraction_order != ENTITY_TYPES:
                raise InvalidConfigError("structured variant needs the canonical seven-type extraction order")
            missing = [t.value for t in ENTITY_TYPES if not self.type_definitions.get(t)]
            if missing:
                raise InvalidConfigError(f"structured variant lacks type definitions for {missing}")
            if not self.filter_rules:
                raise InvalidConfigError("structured variant needs at least one filter rule")
        else:
            if self.extraction_order or self.type_definitions or self.filter_rules:
                raise InvalidConfigError("baseline variant must not carry order, definitions or filter rules")
            if any(s in self.layout for s in STRUCTURED_SECTIONS):
                raise InvalidConfigError("baseline template must not contain structured sections")

    @classmethod
    def from_sections(cls, variant: str, sections: dict[str, str],
                      delimiters: Delimiters = DEFAULT_DELIMITERS) -> "ExtractionPromptConfig":
        blocks = {k: v for k, v in sections.items() if k not in STRUCTURED_SECTIONS}
        return cls(
            variant=variant,
            layout=tuple(sections),
            blocks=blocks,
            extraction_order=_parse_order(sections.get("EXTRACTION_ORDER", "")),
            type_definitions=_parse_definitions(sections.get("TYPE_DEFINITIONS", "")),
            filter_rules=_parse_rules(sections.get("FILTER_RULES", "")),
            delimiters=delimiters,
        )

    @classmethod
    def from_file(cls, path: str | Path, variant: str | None = None,
                  delimiters: Delimiters = DEFAULT_DELIMITERS) -> "ExtractionPromptConfig":
        path = Path(path)
        return cls.from_sections(variant or path.stem, templates.read_sections(path), delimiters)

    @classmethod
    def default(cls, variant: str, delimiters: Delimiters = DEFAULT_DELIMITERS) -> "ExtractionPromptConfig":
        text = resources.files("legalkg").joinpath("prompts", "extraction", f"{variant}.txt").read_text("utf-8")
        return cls.from_sections(variant, templates.parse_sections(text), delimiters)

    def _section(self, name: str) -> str:
        if name == "EXTRACTION_ORDER":
            return "\n".join(f"{i}. {t.label}" for i, t in enumerate(self.extraction_order, 1))
        if name == "TYPE_DEFINITIONS":
            return "\n".join(f"{t.label}: {self.type_definitions[t]}" for t in self.extraction_order)
        if name == "FILTER_RULES":
            return "\n".join(f"- {r}" for r in self.filter_rules)
        return self.blocks[name]

    def render(self, text: str) -> str:
        d = self.delimiters
        parts = []
        for name in self.layout:
            body = self._section(name)
            body = (
                body.replace("{{TUPLE_DELIMITER}}", d.field_sep)
                .replace("{{RECORD_DELIMITER}}", d.record_sep)
                .replace("{{COMPLETION_DELIMITER}}", d.completion)
                .replace("{{ENTITY_TYPES}}", ", ".join(t.label for t in ENTITY_TYPES))
            )
            parts.append(f"# {name}\n{body}")
        return templates.insert_document("\n\n".join(parts), text)

    @property
    def stage_tag(self) -> str:
        return "extraction" if self.variant == "structured" else "baseline-extraction"


# --------------------------------------------------------------------------
# extraction

@dataclass
class ChunkExtraction:
    chunk_id: int
    entities: list[RawEntityRecord]
    relationships: list[RawRelationshipRecord]
    warnings: list[str]
    prompt: str
    response: str


def extract_chunk(
    chunk: Chunk,
    config: ExtractionPromptConfig,
    gateway: Gateway,
    model_name: str = DEFAULT_MODEL,
    max_output: int = 4096,
    strict: bool = True,
    fallback_type: EntityType | None = None,
) -> ChunkExtraction:
    if not chunk.text.strip():
        raise ValueError(f"chunk {chunk.chunk_id} of {chunk.case_id!r} is empty")
    prompt = config.render(chunk.text)
    resp = gateway.complete(
        CompletionRequest(
            prompt=prompt,
            max_output=max_output,
            model_name=model_name,
            stage_tag=config.stage_tag,
            terminator=config.delimiters.completion,
        )
    )
    ents, rels, warns = parse_records(resp.text, config.delimiters, chunk.chunk_id, strict, fallback_type)
    if not ents and not rels:
        warns.append("chunk-extraction-empty")
        log.warning("%s chunk %d: no parseable records", chunk.case_id, chunk.chunk_id)
    return ChunkExtraction(chunk.chunk_id, ents, rels, warns, prompt, resp.text)


def post_filter_entities(
    entities: list[RawEntityRecord],
    lexicon,
    enabled: bool = False,
) -> list[RawEntityRecord]:
    """Optional safety net dropping government/legal entities by lexicon.

    Off by default: filtering is expected to happen inside the prompt.
    """
    if not enabled:
        return list(entities)
    match = lexicon if isinstance(lexicon, TermMatcher) else TermMatcher(lexicon)
    return [e for e in entities if not match(e.name)]


def default_government_terms() -> list[str]:
    with resources.as_file(resources.files("legalkg").joinpath("data", "government_terms.txt")) as p:
        return read_term_list(p)


# --------------------------------------------------------------------------
# records file

def _type_or_none(v):
    return None if v is None else EntityType(v)


def dump_records(entities, relationships, path: str | Path) -> Path:
    """JSON lines; entities first, then relationships, each in arrival order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for e in entities:
            fh.write(json.dumps({"kind": "entity", "chunk_id": e.chunk_id, "name": e.name,
                                 "type": e.entity_type.value, "description": e.description},
                                ensure_ascii=False) + "\n")
        for r in relationships:
            fh.write(json.dumps({"kind": "relationship", "chunk_id": r.chunk_id, "source": r.source_name,
                                 "target": r.target_name, "description": r.description,
                                 "strength": r.strength,
                                 "source_type": r.source_type.value if r.source_type else None,
                                 "target_type": r.target_type.value if r.target_type else None},
                                ensure_ascii=False) + "\n")
    return path


def load_records(path: str | Path) -> tuple[list[RawEntityRecord], list[RawRelationshipRecord]]:
    ents, rels = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        if d["kind"] == "entity":
            ents.append(RawEntityRecord(d["name"], EntityType(d["type"]), d.get("description", ""), d["chunk_id"]))
        else:
            rels.append(RawRelationshipRecord(d["source"], d["target"], d.get("description", ""),
                                              d.get("strength"), d["chunk_id"],
                                              _type_or_none(d.get("source_type")),
                                              _type_or_none(d.get("target_type"))))
    return ents, rels
