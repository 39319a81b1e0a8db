"""End-to-end runs: one configuration over one case, and the four-way ablation.

Run layout::

    <out>/<run_id>/
        manifest.json
        ingest/<case>.txt
        <config_id>/<case_id>/
            input.txt  coref/  chunks/chunks.jsonl  responses/
            records.jsonl  graph.graphml  nodes.csv  edges.csv
            metrics.csv  clusters.txt  noisy.txt
        reports/{duplication_noise,degradation,graph_stats}.{csv,txt}
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from legalkg import coref
from legalkg.errors import InvalidConfigError, LegalKGError
from legalkg.extraction import (
    ExtractionPromptConfig,
    default_government_terms,
    dump_records,
    extract_chunk,
    post_filter_entities,
)
from legalkg.gateway import DEFAULT_MODEL, Gateway
from legalkg.graph import CONFIG_IDS, KnowledgeGraph, build_graph, export_graphml, export_tabular
from legalkg.ingest import DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP, CaseDocument, chunk_text, dump_chunks
from legalkg.metrics import (
    DEFAULT_THRESHOLD,
    CaseMetrics,
    DuplicateCluster,
    Overrides,
    default_noise_terms,
    evaluate_graph,
)
from legalkg.reporting import collect_metrics, write_metrics, write_reports
from legalkg.schema import EntityType, read_term_list

log = logging.getLogger(__name__)

# config_id -> (coref_enabled, prompt_variant)
VARIANT_TABLE = {
    "graphrag": (False, "baseline"),
    "no_coref": (False, "structured"),
    "no_structprompt": (True, "baseline"),
    "corekg": (True, "structured"),
}


@dataclass
class PipelineConfig:
    config_id: str
    coref_enabled: bool | None = None
    prompt_variant: str | None = None
    chunk_size: int = DEFAULT_CHUNK_SIZE
    overlap: int = DEFAULT_OVERLAP
    threshold: float = DEFAULT_THRESHOLD
    model_name: str = DEFAULT_MODEL
    max_output: int = 4096
    coref_max_output: int = 8192
    context_budget: int = coref.DEFAULT_CONTEXT_BUDGET
    coref_policy: str = "keep"
    strict: bool = True
    post_filter: bool = False
    noise_lexicon: str | None = None
    government_terms: str | None = None
    overrides_dir: str | None = None
    coref_templates: str | None = None
    extraction_template: str | None = None
    output_dir: str = "runs"
    parquet: bool = False

    def __post_init__(self):
        if self.config_id not in VARIANT_TABLE:
            raise InvalidConfigError(f"unknown config_id {self.config_id!r}; choose from {CONFIG_IDS}")
        coref_on, variant = VARIANT_TABLE[self.config_id]
        if self.coref_enabled is None:
            self.coref_enabled = coref_on
        if self.prompt_variant is None:
            self.prompt_variant = variant
        if (self.coref_enabled, self.prompt_variant) != (coref_on, variant):
            raise InvalidConfigError(
                f"{self.config_id} requires coref_enabled={coref_on}, prompt_variant={variant}"
            )
        if self.chunk_size < 1 or not 0 <= self.overlap < self.chunk_size:
            raise InvalidConfigError("need chunk_size >= 1 and 0 <= overlap < chunk_size")
        if not 0 < self.threshold <= 100:
            raise InvalidConfigError("threshold must be in (0, 100]")
        if self.coref_policy not in coref.POLICIES:
            raise InvalidConfigError(f"coref_policy must be one of {coref.POLICIES}")

    @classmethod
    def for_variant(cls, config_id: str, **options) -> "PipelineConfig":
        """Build a config, silently ignoring option keys it does not define."""
        known = {f.name for f in fields(cls)} - {"config_id", "coref_enabled", "prompt_variant"}
        return cls(config_id, **{k: v for k, v in options.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Resources:
    """Templates and term lists, loaded once per configuration."""

    coref_templates: dict | None
    extraction: ExtractionPromptConfig
    noise_terms: list[str]
    government_terms: list[str]

    @classmethod
    def load(cls, cfg: PipelineConfig) -> "Resources":
        templates = None
        if cfg.coref_enabled:
            templates = coref.load_templates(cfg.coref_templates) if cfg.coref_templates else coref.default_templates()
        if cfg.extraction_template:
            extraction = ExtractionPromptConfig.from_file(cfg.extraction_template, cfg.prompt_variant)
        else:
            extraction = ExtractionPromptConfig.default(cfg.prompt_variant)
        noise = read_term_list(cfg.noise_lexicon) if cfg.noise_lexicon else default_noise_terms()
        gov = read_term_list(cfg.government_terms) if cfg.government_terms else default_government_terms()
        return cls(templates, extraction, noise, gov)


@dataclass
class PipelineResult:
    graph: KnowledgeGraph
    metrics: CaseMetrics
    clusters: list[DuplicateCluster]
    noisy: list[str]
    artifacts: dict[str, str]
    warnings: list[str] = field(default_factory=list)
    coref_passes: int = 0


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("utf-8"))
    return path


def overrides_for(cfg: PipelineConfig, case_id: str) -> Overrides | None:
    if not cfg.overrides_dir:
        return None
    p = Path(cfg.overrides_dir) / f"{case_id}.{cfg.config_id}.overrides"
    return Overrides.from_file(p) if p.is_file() else None


def stage_coref(text, case_id, cfg, gateway, case_dir, res, art, warnings) -> tuple[str, int]:
    text, trace = coref.resolve_document(
        text, res.coref_templates, gateway, case_id=case_id, out_dir=case_dir / "coref",
        policy=cfg.coref_policy, model_name=cfg.model_name, max_output=cfg.coref_max_output,
        context_budget=cfg.context_budget,
    )
    warnings.extend(trace.warnings)
    record = trace.to_dict()
    for p in record["passes"]:
        p["output_path"] = Path(p["output_path"]).name
    art["coref_trace"] = str(_write(case_dir / "coref" / "trace.json", json.dumps(record, indent=2) + "\n"))
    for k, p in enumerate(trace.passes, 1):
        art[f"coref_pass{k}"] = p.output_path
    return text, len(trace.passes)


def stage_extract(text, case_id, cfg, gateway, case_dir, res, art, warnings):
    """Chunk ``text`` and extract every chunk; prompts and replies are kept."""
    chunks = chunk_text(text, cfg.chunk_size, cfg.overlap, case_id=case_id)
    art["chunks"] = str(dump_chunks(chunks, case_dir / "chunks" / "chunks.jsonl"))
    (case_dir / "responses").mkdir(parents=True, exist_ok=True)
    art["responses"] = str(case_dir / "responses")

    entities, relationships = [], []
    for ch in chunks:
        out = extract_chunk(ch, res.extraction, gateway, cfg.model_name, cfg.max_output, cfg.strict,
                            None if cfg.strict else EntityType.UNTYPED)
        stem = f"{case_id}.chunk{ch.chunk_id}"
        _write(case_dir / "responses" / f"{stem}.prompt.txt", out.prompt)
        _write(case_dir / "responses" / f"{stem}.response.txt", out.response)
        warnings.extend(f"chunk {ch.chunk_id}: {w}" for w in out.warnings)
        entities.extend(out.entities)
        relationships.extend(out.relationships)

    entities = post_filter_entities(entities, res.government_terms, cfg.post_filter)
    art["records"] = str(dump_records(entities, relationships, case_dir / "records.jsonl"))
    return entities, relationships


def stage_graph(entities, relationships, case_id, cfg, case_dir, art) -> KnowledgeGraph:
    g = build_graph(entities, relationships, case_id, cfg.config_id)
    art["graph"] = str(export_graphml(g, case_dir / "graph.graphml"))
    for p in export_tabular(g, case_dir, parquet=cfg.parquet):
        art[p.name] = str(p)
    return g


def stage_metrics(g, cfg, case_dir, res, art, overrides=None):
    if overrides is None:
        overrides = overrides_for(cfg, g.case_id)
    metrics, clusters, noisy = evaluate_graph(g, cfg.threshold, res.noise_terms, overrides)
    art["metrics"] = str(write_metrics(case_dir / "metrics.csv", [metrics]))
    art["clusters"] = str(_write(case_dir / "clusters.txt", format_clusters(clusters)))
    art["noisy"] = str(_write(case_dir / "noisy.txt", "".join(f"{i}\n" for i in noisy)))
    return metrics, clusters, noisy


def run_pipeline(
    doc: CaseDocument,
    cfg: PipelineConfig,
    gateway: Gateway,
    case_dir: str | Path,
    resources: Resources | None = None,
) -> PipelineResult:
    """text -> (coref) -> chunks -> per-chunk extraction -> graph -> metrics.

    Every stage writes its output under ``case_dir`` before the next starts.
    """
    res = resources or Resources.load(cfg)
    case_dir = Path(case_dir)
    case = doc.case_id
    art: dict[str, str] = {}
    warnings = list(doc.warnings)

    text = doc.opinion_text
    art["input"] = str(_write(case_dir / "input.txt", text))
    passes = 0
    if cfg.coref_enabled:
        text, passes = stage_coref(text, case, cfg, gateway, case_dir, res, art, warnings)
    entities, relationships = stage_extract(text, case, cfg, gateway, case_dir, res, art, warnings)
    g = stage_graph(entities, relationships, case, cfg, case_dir, art)
    metrics, clusters, noisy = stage_metrics(g, cfg, case_dir, res, art)
    return PipelineResult(g, metrics, clusters, noisy, art, warnings, passes)


def format_clusters(clusters: Sequence[DuplicateCluster]) -> str:
    lines = []
    for c in clusters:
        others = [m for m in c.members if m != c.representative]
        lines.append("\t".join([c.entity_type.value, c.representative, *others]))
    return "".join(f"{x}\n" for x in lines)


# --------------------------------------------------------------------------
# ablation

def corpus_digest(docs: Sequence[CaseDocument]) -> str:
    h = hashlib.sha256()
    for d in sorted(docs, key=lambda d: d.case_id):
        h.update(d.case_id.encode("utf-8") + b"\0")
        h.update(hashlib.sha256(d.opinion_text.encode("utf-8")).digest())
    return h.hexdigest()


@dataclass
class CaseOutcome:
    case_id: str
    config_id: str
    status: str
    artifacts: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    error: dict | None = None
    coref_passes: int = 0
    seconds: float = 0.0


@dataclass
class RunManifest:
    run_id: str
    run_dir: str
    configs: list[str]
    corpus_digest: str
    cases: list[CaseOutcome] = field(default_factory=list)
    reports: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def failures(self) -> list[CaseOutcome]:
        return [c for c in self.cases if c.status != "ok"]

    def warning_summary(self) -> dict[str, int]:
        return {f"{c.config_id}/{c.case_id}": len(c.warnings) for c in self.cases if c.warnings}

    def to_dict(self) -> dict:
        base = Path(self.run_dir)

        def rel(p: str) -> str:
            try:
                return Path(p).relative_to(base).as_posix()
            except ValueError:
                return p

        return {
            "run_id": self.run_id,
            "configs": self.configs,
            "corpus_digest": self.corpus_digest,
            "cases": [
                {
                    "case_id": c.case_id,
                    "config_id": c.config_id,
                    "status": c.status,
                    "coref_passes": c.coref_passes,
                    "artifacts": {k: rel(v) for k, v in sorted(c.artifacts.items())},
                    "warnings": c.warnings,
                    "error": c.error,
                    "seconds": round(c.seconds, 3),
                }
                for c in self.cases
            ],
            "warning_summary": self.warning_summary(),
            "reports": [rel(p) for p in self.reports],
            "seconds": round(self.seconds, 3),
        }

    def write(self) -> Path:
        for c in self.cases:
            missing = [p for p in c.artifacts.values() if not Path(p).exists()]
            if missing:
                raise LegalKGError(f"{c.config_id}/{c.case_id}: manifest lists missing artifacts {missing}")
        p = Path(self.run_dir) / "manifest.json"
        p.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return p


def error_summary(exc: BaseException) -> dict:
    out = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("digest", "stage_tag", "ids"):
        if getattr(exc, attr, None):
            v = getattr(exc, attr)
            out[attr] = list(v) if isinstance(v, (tuple, set)) else v
    return out


def _run_case(doc, cfg, gateway, run_dir, res) -> CaseOutcome:
    t0 = time.perf_counter()
    try:
        r = run_pipeline(doc, cfg, gateway, Path(run_dir) / cfg.config_id / doc.case_id, res)
    except (LegalKGError, ValueError, OSError) as exc:
        log.error("%s/%s failed: %s", cfg.config_id, doc.case_id, exc)
        return CaseOutcome(doc.case_id, cfg.config_id, "error", error=error_summary(exc),
                           seconds=time.perf_counter() - t0)
    return CaseOutcome(doc.case_id, cfg.config_id, "ok", r.artifacts, r.warnings, None,
                       r.coref_passes, time.perf_counter() - t0)


def run_configs(
    docs: Sequence[CaseDocument],
    configs: Sequence[PipelineConfig],
    gateway: Gateway,
    run_dir: str | Path,
    run_id: str = "",
    workers: int = 1,
    reports: bool = True,
) -> RunManifest:
    """Run every (case, config) pair; a failing case is recorded, not raised."""
    t0 = time.perf_counter()
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    docs = sorted(docs, key=lambda d: d.case_id)
    # shared inputs: every configuration reads the same opinion texts
    for d in docs:
        _write(run_dir / "ingest" / f"{d.case_id}.txt", d.opinion_text)

    manifest = RunManifest(run_id or run_dir.name, str(run_dir), [c.config_id for c in configs], corpus_digest(docs))
    for cfg in configs:
        res = Resources.load(cfg)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(lambda d: _run_case(d, cfg, gateway, run_dir, res), docs))
        else:
            outcomes = [_run_case(d, cfg, gateway, run_dir, res) for d in docs]
        manifest.cases.extend(outcomes)

    if reports:
        rows = collect_metrics(run_dir)
        if rows:
            manifest.reports = [str(p) for p in write_reports(rows, run_dir / "reports")]
    manifest.seconds = time.perf_counter() - t0
    manifest.write()
    return manifest


def run_ablation(
    docs: Sequence[CaseDocument],
    gateway: Gateway,
    run_dir: str | Path,
    run_id: str = "",
    workers: int = 1,
    **options,
) -> RunManifest:
    configs = [PipelineConfig.for_variant(c, **options) for c in CONFIG_IDS]
    return run_configs(docs, configs, gateway, run_dir, run_id, workers)
