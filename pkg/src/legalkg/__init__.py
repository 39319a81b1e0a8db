"""Knowledge-graph construction from legal case text, with ablation tooling.

Pipeline: opinion text -> optional type-wise coreference passes -> overlapping
chunks -> prompt-based entity/relationship extraction -> merged graph ->
duplication / noise / connectivity metrics.
"""

from legalkg.schema import ENTITY_TYPES, EntityType, normalize_name

__version__ = "0.1.0"

__all__ = ["ENTITY_TYPES", "EntityType", "normalize_name", "__version__"]
