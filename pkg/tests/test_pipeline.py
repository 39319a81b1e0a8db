import json

import pytest

from legalkg.errors import InvalidConfigError
from legalkg.gateway import Gateway, ReplayStore
from legalkg.graph import CONFIG_IDS, read_graphml
from legalkg.ingest import CaseDocument
from legalkg.pipeline import VARIANT_TABLE, PipelineConfig, run_ablation, run_pipeline

STRUCTURED_MARKERS = ("# EXTRACTION_ORDER", "# TYPE_DEFINITIONS", "# FILTER_RULES")


def test_config_gating_table():
    for cid, (coref_on, variant) in VARIANT_TABLE.items():
        cfg = PipelineConfig(cid)
        assert (cfg.coref_enabled, cfg.prompt_variant) == (coref_on, variant)
    with pytest.raises(InvalidConfigError):
        PipelineConfig("no_coref", coref_enabled=True)
    with pytest.raises(InvalidConfigError):
        PipelineConfig("corekg", prompt_variant="baseline")
    with pytest.raises(InvalidConfigError):
        PipelineConfig("best")
    with pytest.raises(InvalidConfigError):
        PipelineConfig("corekg", chunk_size=10, overlap=10)
    cfg = PipelineConfig.for_variant("graphrag", chunk_size=100, colour="blue")
    assert cfg.chunk_size == 100 and cfg.to_dict()["config_id"] == "graphrag"


@pytest.mark.parametrize("config_id", CONFIG_IDS)
def test_artifacts_follow_config(config_id, corpus_docs, scenario_backend, tmp_path):
    cfg = PipelineConfig(config_id, chunk_size=120, overlap=20)
    r = run_pipeline(corpus_docs[0], cfg, Gateway(scenario_backend), tmp_path)
    assert (tmp_path / "coref").exists() == cfg.coref_enabled
    assert r.coref_passes == (7 if cfg.coref_enabled else 0)
    prompts = sorted((tmp_path / "responses").glob("*.prompt.txt"))
    assert len(prompts) == len((tmp_path / "chunks" / "chunks.jsonl").read_text().splitlines()) > 1
    for p in prompts:
        text = p.read_text()
        for marker in STRUCTURED_MARKERS:
            assert (marker in text) == (cfg.prompt_variant == "structured")
    for name in ("graph.graphml", "nodes.csv", "edges.csv", "metrics.csv", "clusters.txt", "noisy.txt",
                 "records.jsonl", "input.txt"):
        assert (tmp_path / name).is_file()
    assert read_graphml(tmp_path / "graph.graphml").nodes.keys() == r.graph.nodes.keys()
    if cfg.coref_enabled:
        trace = json.loads((tmp_path / "coref" / "trace.json").read_text())
        assert [p["entity_type"] for p in trace["passes"]][0] == "Person"


def test_structured_prompt_filters_government(corpus_docs, scenario_backend, tmp_path):
    gw = Gateway(scenario_backend)
    base = run_pipeline(corpus_docs[0], PipelineConfig("graphrag"), gw, tmp_path / "a")
    full = run_pipeline(corpus_docs[0], PipelineConfig("corekg"), gw, tmp_path / "b")
    assert full.metrics.noisy_count < base.metrics.noisy_count
    assert full.metrics.duplicate_count <= base.metrics.duplicate_count


def test_ablation_isolation_and_failures(corpus_docs, scenario_backend, tmp_path):
    bad = CaseDocument("case99", "", opinion_text="   ")
    m = run_ablation(corpus_docs + [bad], Gateway(scenario_backend), tmp_path / "run", chunk_size=120, overlap=20)
    assert len(m.cases) == 16
    assert {(c.case_id, c.status) for c in m.failures} == {("case99", "error")}
    ok = [c for c in m.cases if c.status == "ok"]
    assert len(ok) == 12
    run = tmp_path / "run"
    # every configuration sees the same input text and, without coref, the same chunks
    for d in corpus_docs:
        inputs = {(run / c / d.case_id / "input.txt").read_bytes() for c in CONFIG_IDS}
        assert inputs == {(run / "ingest" / f"{d.case_id}.txt").read_bytes()}
        assert (run / "graphrag" / d.case_id / "chunks" / "chunks.jsonl").read_bytes() == \
            (run / "no_coref" / d.case_id / "chunks" / "chunks.jsonl").read_bytes()
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["cases"][0]["artifacts"]["graph"].endswith("graph.graphml")
    assert not manifest["cases"][0]["artifacts"]["graph"].startswith("/")
    assert sorted(p.name for p in (run / "reports").iterdir()) == sorted(
        f"{n}.{e}" for n in ("degradation", "duplication_noise", "graph_stats") for e in ("csv", "txt"))


def test_record_replay_same_outputs(corpus_docs, scenario_backend, tmp_path):
    doc = corpus_docs[1]
    cfg = PipelineConfig("corekg")
    run_pipeline(doc, cfg, Gateway(scenario_backend, ReplayStore(tmp_path / "store"), "record"), tmp_path / "a")
    run_pipeline(doc, cfg, Gateway(None, ReplayStore(tmp_path / "store"), "replay"), tmp_path / "b")
    for name in ("graph.graphml", "metrics.csv", "records.jsonl", "coref/trace.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class OddTypes:
    name = "odd"

    def generate(self, request):
        return '("entity"<|>Judge Ames<|>Official<|>x)##("entity"<|>Ana<|>Person<|>y)##<|COMPLETE|>'


@pytest.mark.parametrize("strict,expected", [(True, ["ANA::Person"]), (False, ["ANA::Person", "JUDGE AMES::UNTYPED"])])
def test_lenient_keeps_unknown_types(corpus_docs, tmp_path, strict, expected):
    r = run_pipeline(corpus_docs[0], PipelineConfig("graphrag", strict=strict), Gateway(OddTypes()), tmp_path)
    assert sorted(r.graph.nodes) == expected
