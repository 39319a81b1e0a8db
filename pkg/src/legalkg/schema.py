"""Entity type vocabulary and name canonicalization shared by every stage."""

from __future__ import annotations

import enum
import re
from pathlib import Path


class EntityType(str, enum.Enum):
    PERSON = "Person"
    LOCATION = "Location"
    ROUTES = "Routes"
    ORGANIZATION = "Organization"
    MEANS_OF_TRANSPORTATION = "MeansOfTransportation"
    MEANS_OF_COMMUNICATION = "MeansOfCommunication"
    SMUGGLED_ITEMS = "SmuggledItems"
    # Placeholder for relationship endpoints never extracted as entities.
    UNTYPED = "UNTYPED"

    def __str__(self) -> str:
        return self.value

    @property
    def label(self) -> str:
        """Human-readable name, e.g. ``Means of Transportation``."""
        return _LABELS[self]

    @classmethod
    def parse(cls, text: str) -> "EntityType | None":
        """Map a model-emitted type string onto the enum; ``None`` if unknown."""
        key = re.sub(r"[^A-Z]", "", text.upper())
        return _ALIASES.get(key)


# Resolution and extraction order; UNTYPED is deliberately excluded.
ENTITY_TYPES: tuple[EntityType, ...] = (
    EntityType.PERSON,
    EntityType.LOCATION,
    EntityType.ROUTES,
    EntityType.ORGANIZATION,
    EntityType.MEANS_OF_TRANSPORTATION,
    EntityType.MEANS_OF_COMMUNICATION,
    EntityType.SMUGGLED_ITEMS,
)

TYPE_RANK = {t: i for i, t in enumerate(ENTITY_TYPES)}
TYPE_RANK[EntityType.UNTYPED] = len(ENTITY_TYPES)

_LABELS = {
    EntityType.PERSON: "Person",
    EntityType.LOCATION: "Location",
    EntityType.ROUTES: "Routes",
    EntityType.ORGANIZATION: "Organization",
    EntityType.MEANS_OF_TRANSPORTATION: "Means of Transportation",
    EntityType.MEANS_OF_COMMUNICATION: "Means of Communication",
    EntityType.SMUGGLED_ITEMS: "Smuggled Items",
    EntityType.UNTYPED: "Untyped",
}

_ALIASES: dict[str, EntityType] = {}
for _t in ENTITY_TYPES:
    _ALIASES[re.sub(r"[^A-Z]", "", _t.value.upper())] = _t
    _ALIASES[re.sub(r"[^A-Z]", "", _t.label.upper())] = _t
_ALIASES.update(
    {
        "ROUTE": EntityType.ROUTES,
        "SMUGGLEDITEM": EntityType.SMUGGLED_ITEMS,
        "MEANSOFTRANSPORT": EntityType.MEANS_OF_TRANSPORTATION,
        "TRANSPORTATION": EntityType.MEANS_OF_TRANSPORTATION,
        "COMMUNICATION": EntityType.MEANS_OF_COMMUNICATION,
        "UNTYPED": EntityType.UNTYPED,
    }
)

_WS = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    """Trim, collapse internal whitespace, uppercase.

    This is the canonical form behind "exact string" matching.
    """
    return _WS.sub(" ", name).strip().upper()


def node_id(normalized: str, entity_type: EntityType) -> str:
    return f"{normalized}::{entity_type.value}"


class TermMatcher:
    """Case-insensitive whole-word containment against a term list.

    Terms may span several words; matching happens on canonical names.
    """

    def __init__(self, terms):
        self.terms = tuple(sorted({normalize_name(t) for t in terms if t and t.strip()}))
        if self.terms:
            alts = "|".join(re.escape(t) for t in sorted(self.terms, key=len, reverse=True))
            self._re = re.compile(rf"(?<!\w)(?:{alts})(?!\w)")
        else:
            self._re = None

    def __call__(self, name: str) -> bool:
        return bool(self._re and self._re.search(normalize_name(name)))

    def __len__(self) -> int:
        return len(self.terms)


def read_term_list(path) -> list[str]:
    """One term per line; ``#`` starts a comment."""
    terms = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            terms.append(line)
    return terms
