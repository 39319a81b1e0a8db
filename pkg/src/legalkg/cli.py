"""``legalkg`` command line.

Each subcommand runs one stage (``ingest``, ``coref``, ``extract``, ``build``,
``eval``), one configuration end to end (``run``), all four (``ablate``), or
re-renders the tables (``report``). Failures print a JSON summary on stderr
and exit 1; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from legalkg.config import GatewaySettings, Settings, build_gateway, load_settings
from legalkg.errors import LegalKGError
from legalkg.extraction import load_records
from legalkg.graph import CONFIG_IDS, graph_stats, read_graphml
from legalkg.ingest import CaseDocument, extract_opinion, load_corpus
from legalkg.metrics import Overrides, default_noise_terms, evaluate_graph
from legalkg.pipeline import (
    PipelineConfig,
    Resources,
    error_summary,
    run_configs,
    stage_coref,
    stage_extract,
    stage_graph,
    stage_metrics,
)
from legalkg.reporting import (
    METRICS_COLUMNS,
    collect_metrics,
    metrics_row,
    read_metrics,
    read_reference_counts,
    write_reports,
)
from legalkg.schema import read_term_list

log = logging.getLogger("legalkg")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="INI config file (or a directory holding legalkg.ini)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--backend", choices=("http", "mock", "replay"), help="completion backend")
    mode = g.add_mutually_exclusive_group()
    mode.add_argument("--record", metavar="DIR", help="record responses into DIR (reusing any already there)")
    mode.add_argument("--replay", metavar="DIR", help="answer only from responses stored in DIR")
    g.add_argument("--mock-scenario", metavar="JSON", help="scenario file for the mock backend")
    g.add_argument("--strict", dest="strict", action="store_true", default=None,
                   help="skip records with unknown entity types (default)")
    g.add_argument("--lenient", dest="strict", action="store_false",
                   help="keep records with unknown entity types as UNTYPED")
    g.add_argument("--run-id", help="run directory name (default: timestamp)")
    g.add_argument("--workers", type=int, default=1, help="cases processed concurrently")
    g.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="legalkg", description="Legal-case knowledge graph construction")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        _common(p)
        return p

    p = add("ingest", "load a corpus and write each case's opinion text")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", help="'filename = case_id' mapping file")
    p.add_argument("--whole-text", action="store_true", help="skip opinion-section isolation")

    p = add("coref", "run the seven coreference passes over text files")
    p.add_argument("--input", required=True, help="a .txt file or a directory of them")

    p = add("extract", "chunk text files and extract entity/relationship records")
    p.add_argument("--input", required=True, help="a .txt file or a directory of them")
    p.add_argument("--prompt", choices=("structured", "baseline"), default="structured")

    p = add("build", "build a graph from a records.jsonl file")
    p.add_argument("--records", required=True)
    p.add_argument("--case-id")
    p.add_argument("--config-id", choices=CONFIG_IDS, default="corekg")

    p = add("eval", "compute duplication/noise metrics for a stored graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--overrides", help="expert override file")
    p.add_argument("--lexicon", help="noise term list")
    p.add_argument("--threshold", type=float)

    p = add("run", "run one configuration over a corpus")
    p.add_argument("--variant", required=True, choices=CONFIG_IDS)
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest")
    p.add_argument("--whole-text", action="store_true")

    p = add("ablate", "run all four configurations over a corpus and write reports")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest")
    p.add_argument("--whole-text", action="store_true")

    p = add("report", "re-render the comparison tables")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--run", help="run directory holding <config>/<case>/metrics.csv")
    src.add_argument("--metrics", nargs="+", help="metrics CSV files")
    src.add_argument("--counts", help="reference per-case counts CSV")
    p.add_argument("--errata", help="corrections applied to --counts")
    p.add_argument("--full-precision", action="store_true",
                   help="average exact rates instead of displayed (2-decimal) rates")
    return parser


# --------------------------------------------------------------------------

def _settings(args) -> Settings:
    s = load_settings(args.config)
    gw = s.gateway
    backend = args.backend or gw.backend
    store, mode = gw.store, gw.mode
    if args.record:
        store, mode = args.record, "record"
    if args.replay:
        store, mode, backend = args.replay, "replay", "replay"
    if backend == "replay" and not args.replay and mode != "replay":
        mode = "replay"
    s.gateway = GatewaySettings(
        backend=backend, base_url=gw.base_url, adapter=gw.adapter, path=gw.path, auth_header=gw.auth_header,
        model=gw.model, timeout=gw.timeout, attempts=gw.attempts, backoff=gw.backoff, mode=mode, store=store,
        mock_scenario=args.mock_scenario or gw.mock_scenario,
    )
    s.pipeline.setdefault("model_name", gw.model)
    if args.strict is not None:
        s.pipeline["strict"] = args.strict
    return s


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def _text_inputs(path: str) -> list[CaseDocument]:
    p = Path(path)
    files = sorted(p.glob("*.txt")) if p.is_dir() else [p]
    if not files:
        raise LegalKGError(f"no .txt files under {p}")
    return [CaseDocument(f.stem, f.read_text(encoding="utf-8"), source_path=str(f)) for f in files]


def _corpus(args) -> list[CaseDocument]:
    errors = []
    docs = load_corpus(args.corpus, manifest=args.manifest, errors=errors)
    for e in errors:
        log.warning("skipped %s: %s", e.path, e.message)
    if not args.whole_text:
        docs = [extract_opinion(d) for d in docs]
    return docs


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, ensure_ascii=False))


def cmd_ingest(args, s: Settings) -> int:
    out = _out(args, "opinions")
    out.mkdir(parents=True, exist_ok=True)
    docs = _corpus(args)
    for d in docs:
        (out / f"{d.case_id}.txt").write_bytes(d.opinion_text.encode("utf-8"))
    _emit({"cases": len(docs), "out": str(out),
           "warnings": {d.case_id: list(d.warnings) for d in docs if d.warnings}})
    return 0


def cmd_coref(args, s: Settings) -> int:
    cfg = PipelineConfig.for_variant("corekg", **s.pipeline)
    res = Resources.load(cfg)
    gw = build_gateway(s.gateway)
    out = _out(args, "coref_out")
    summary = {}
    for d in _text_inputs(args.input):
        art, warns = {}, []
        text, passes = stage_coref(d.opinion_text, d.case_id, cfg, gw, out / d.case_id, res, art, warns)
        (out / f"{d.case_id}.resolved.txt").write_bytes(text.encode("utf-8"))
        summary[d.case_id] = {"passes": passes, "warnings": warns}
    _emit(summary)
    return 0


def cmd_extract(args, s: Settings) -> int:
    config_id = "no_coref" if args.prompt == "structured" else "graphrag"
    cfg = PipelineConfig.for_variant(config_id, **s.pipeline)
    res = Resources.load(cfg)
    gw = build_gateway(s.gateway)
    out = _out(args, "extract_out")
    summary = {}
    for d in _text_inputs(args.input):
        art, warns = {}, []
        ents, rels = stage_extract(d.opinion_text, d.case_id, cfg, gw, out / d.case_id, res, art, warns)
        summary[d.case_id] = {"entities": len(ents), "relationships": len(rels),
                              "records": art["records"], "warnings": warns}
    _emit(summary)
    return 0


def cmd_build(args, s: Settings) -> int:
    ents, rels = load_records(args.records)
    case_id = args.case_id or Path(args.records).resolve().parent.name
    cfg = PipelineConfig.for_variant(args.config_id, **s.pipeline)
    out = _out(args, ".")
    art = {}
    g = stage_graph(ents, rels, case_id, cfg, out, art)
    st = graph_stats(g)
    _emit({"case_id": case_id, "config_id": cfg.config_id, "nodes": st.node_count,
           "relationships": st.relationship_count, "rn_ratio": round(st.rn_ratio, 4),
           "isolated_nodes": st.isolated_node_count, "files": sorted(art.values())})
    return 0


def cmd_eval(args, s: Settings) -> int:
    g = read_graphml(args.graph)
    options = dict(s.pipeline)
    if args.threshold is not None:
        options["threshold"] = args.threshold
    if args.lexicon:
        options["noise_lexicon"] = args.lexicon
    cfg = PipelineConfig.for_variant(g.config_id if g.config_id in CONFIG_IDS else "corekg", **options)
    noise = read_term_list(cfg.noise_lexicon) if cfg.noise_lexicon else default_noise_terms()
    overrides = Overrides.from_file(args.overrides) if args.overrides else None
    if args.out:
        res = Resources(None, None, noise, [])
        m, _, _ = stage_metrics(g, cfg, Path(args.out), res, {}, overrides)
    else:
        m, _, _ = evaluate_graph(g, cfg.threshold, noise, overrides)
    print(",".join(METRICS_COLUMNS))
    print(",".join(str(x) for x in metrics_row(m)))
    return 0


def _run(args, s: Settings, config_ids) -> int:
    docs = _corpus(args)
    configs = [PipelineConfig.for_variant(c, **s.pipeline) for c in config_ids]
    run_id = args.run_id or time.strftime("%Y%m%d-%H%M%S")
    root = _out(args, s.pipeline.get("output_dir", "runs"))
    gw = build_gateway(s.gateway)
    manifest = run_configs(docs, configs, gw, root / run_id, run_id, args.workers)
    failures = manifest.failures
    _emit({"run_id": run_id, "run_dir": str(root / run_id), "cases": len(manifest.cases),
           "failed": len(failures), "reports": manifest.reports})
    if failures:
        _fail({"error": "CaseFailures", "message": f"{len(failures)} case run(s) failed",
               "failures": [{"case_id": f.case_id, "config_id": f.config_id, **f.error} for f in failures]})
        return 1
    return 0


def cmd_run(args, s: Settings) -> int:
    return _run(args, s, [args.variant])


def cmd_ablate(args, s: Settings) -> int:
    return _run(args, s, CONFIG_IDS)


def cmd_report(args, s: Settings) -> int:
    if args.run:
        rows = collect_metrics(args.run)
        default_out = Path(args.run) / "reports"
    elif args.metrics:
        rows = [m for p in args.metrics for m in read_metrics(p)]
        default_out = Path("reports")
    else:
        rows = [r.metrics for r in read_reference_counts(args.counts, args.errata)]
        default_out = Path("reports")
    if not rows:
        raise LegalKGError("no metrics rows found")
    out = Path(args.out) if args.out else default_out
    files = write_reports(rows, out, None if args.full_precision else 2)
    _emit({"rows": len(rows), "files": [str(f) for f in files]})
    return 0


COMMANDS = {
    "ingest": cmd_ingest, "coref": cmd_coref, "extract": cmd_extract, "build": cmd_build,
    "eval": cmd_eval, "run": cmd_run, "ablate": cmd_ablate, "report": cmd_report,
}


def _fail(summary: dict) -> None:
    print(json.dumps(summary, ensure_ascii=False), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = _settings(args)
        return COMMANDS[args.command](args, settings)
    except (LegalKGError, ValueError, OSError) as exc:
        _fail({"error": type(exc).__name__, **{k: v for k, v in error_summary(exc).items() if k != "type"}})
        return 1


if __name__ == "__main__":
    sys.exit(main())
