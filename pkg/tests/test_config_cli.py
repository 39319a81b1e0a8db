import json

import pytest

from legalkg.cli import main
from legalkg.config import GatewaySettings, build_gateway, load_settings
from legalkg.errors import InvalidConfigError


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    import os

    for k in list(os.environ):
        if k.startswith("LEGALKG_"):
            monkeypatch.delenv(k)


def test_ini_and_env(tmp_path):
    (tmp_path / "legalkg.ini").write_text(
        "[pipeline]\nchunk_size = 200\nstrict = no\n\n[gateway]\nmodel = small  ; inline note\ntimeout = 5\n"
    )
    s = load_settings(tmp_path, env={})
    assert s.pipeline == {"chunk_size": 200, "strict": False}
    assert s.gateway.model == "small" and s.gateway.timeout == 5.0
    s = load_settings(tmp_path, env={"LEGALKG_PIPELINE_CHUNK_SIZE": "90", "LEGALKG_BASE_URL": "http://h:1",
                                     "LEGALKG_MODEL": "big"})
    assert s.pipeline["chunk_size"] == 90
    assert (s.gateway.base_url, s.gateway.model) == ("http://h:1", "big")


@pytest.mark.parametrize("ini", ["[pipeline]\ncolour = red\n", "[pipeline]\nconfig_id = corekg\n",
                                 "[engine]\nx = 1\n", "[pipeline]\nchunk_size = many\n",
                                 "[gateway]\nmode = sometimes\n", "[gateway]\nmode = record\n"])
def test_bad_config(tmp_path, ini):
    p = tmp_path / "c.ini"
    p.write_text(ini)
    with pytest.raises(InvalidConfigError):
        load_settings(p, env={})


def test_missing_config_file(tmp_path):
    with pytest.raises(InvalidConfigError):
        load_settings(tmp_path / "nope.ini", env={})


def test_replay_backend_forces_replay(tmp_path):
    gs = GatewaySettings(backend="replay", store=str(tmp_path))
    assert gs.mode == "replay" and build_gateway(gs).mode == "replay"


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["report", "--run", "x", "--counts", "y"])
    assert info.value.code == 2


def test_cli_ablate_and_report(fixtures_dir, tmp_path, capsys):
    common = ["--corpus", str(fixtures_dir / "corpus"), "--out", str(tmp_path), "--backend", "mock",
              "--mock-scenario", str(fixtures_dir / "scenario.json")]
    assert main(["ablate", *common, "--record", str(tmp_path / "store"), "--run-id", "a"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["cases"] == 12 and summary["failed"] == 0
    assert main(["ablate", *common, "--replay", str(tmp_path / "store"), "--run-id", "b", "--workers", "2"]) == 0
    capsys.readouterr()
    for name in ("duplication_noise.txt", "degradation.csv"):
        assert (tmp_path / "a" / "reports" / name).read_bytes() == (tmp_path / "b" / "reports" / name).read_bytes()

    assert main(["report", "--run", str(tmp_path / "b"), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "graph_stats.csv").read_bytes() == \
        (tmp_path / "b" / "reports" / "graph_stats.csv").read_bytes()

    capsys.readouterr()
    graph = tmp_path / "b" / "corekg" / "case01" / "graph.graphml"
    assert main(["eval", "--graph", str(graph)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == (tmp_path / "b" / "corekg" / "case01" / "metrics.csv").read_text().splitlines()[1]


def test_cli_replay_miss_exits_1(fixtures_dir, tmp_path, capsys):
    code = main(["run", "--variant", "corekg", "--corpus", str(fixtures_dir / "corpus"),
                 "--out", str(tmp_path), "--replay", str(tmp_path / "empty"), "--run-id", "r"])
    assert code == 1
    # log lines come first; the JSON summary is the last line
    err = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert err["error"] == "CaseFailures"
    assert {f["type"] for f in err["failures"]} == {"CacheMissError"}


def test_cli_errors_are_json(tmp_path, capsys):
    assert main(["eval", "--graph", str(tmp_path / "missing.graphml")]) == 1
    assert "error" in json.loads(capsys.readouterr().err.splitlines()[-1])


def test_cli_report_counts(fixtures_dir, tmp_path, capsys):
    assert main(["report", "--counts", str(fixtures_dir / "reference_case_counts.csv"),
                 "--errata", str(fixtures_dir / "reference_case_counts.errata"), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "degradation.txt").read_text()
    assert "+50.59" in text and "+73.29" in text
