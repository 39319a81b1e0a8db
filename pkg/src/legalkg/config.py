"""INI-style run configuration with environment overrides.

Sections ``[pipeline]``, ``[gateway]`` and ``[paths]`` hold ``key = value``
lines. ``LEGALKG_<SECTION>_<KEY>`` in the environment replaces any file
value; ``LEGALKG_BASE_URL`` and ``LEGALKG_MODEL`` are accepted as short forms.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

from legalkg.errors import InvalidConfigError
from legalkg.gateway import DEFAULT_MODEL, MODES, Gateway, HttpBackend, ReplayStore
from legalkg.mock import MockBackend, load_scenario
from legalkg.pipeline import PipelineConfig

SECTIONS = ("pipeline", "gateway", "paths")
BACKENDS = ("http", "mock", "replay")
SHORT_ENV = {"LEGALKG_BASE_URL": ("gateway", "base_url"), "LEGALKG_MODEL": ("gateway", "model")}


@dataclass
class GatewaySettings:
    backend: str = "http"
    base_url: str = "http://localhost:11434"
    adapter: str = "ollama"
    path: str | None = None
    auth_header: str | None = None
    model: str = DEFAULT_MODEL
    timeout: float = 600.0
    attempts: int = 3
    backoff: float = 1.0
    mode: str = "off"
    store: str | None = None
    mock_scenario: str | None = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise InvalidConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.mode not in MODES:
            raise InvalidConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.backend == "replay":
            self.mode = "replay"
        if self.mode != "off" and not self.store:
            raise InvalidConfigError(f"gateway mode {self.mode!r} needs a store directory")


@dataclass
class Settings:
    pipeline: dict = field(default_factory=dict)
    gateway: GatewaySettings = field(default_factory=GatewaySettings)
    paths: dict = field(default_factory=dict)


def _coerce(value: str, kind):
    kind = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    if "bool" in kind:
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise InvalidConfigError(f"not a boolean: {value!r}")
    if "None" in kind and value.strip().lower() in ("", "none"):
        return None
    try:
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except ValueError:
        raise InvalidConfigError(f"cannot read {value!r} as {kind}") from None
    return value


def read_raw(path: str | Path | None, env: Mapping[str, str] | None = None) -> dict[str, dict[str, str]]:
    raw: dict[str, dict[str, str]] = {s: {} for s in SECTIONS}
    if path is not None:
        p = Path(path)
        if p.is_dir():
            p = p / "legalkg.ini"
        if not p.is_file():
            raise InvalidConfigError(f"config file not found: {p}")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
        parser.read(p, encoding="utf-8")
        for section in parser.sections():
            if section not in SECTIONS:
                raise InvalidConfigError(f"{p}: unknown section [{section}]")
            raw[section].update(parser[section])
    env = os.environ if env is None else env
    for var, (section, key) in SHORT_ENV.items():
        if var in env:
            raw[section][key] = env[var]
    for var, value in env.items():
        for section in SECTIONS:
            prefix = f"LEGALKG_{section.upper()}_"
            if var.startswith(prefix):
                raw[section][var[len(prefix):].lower()] = value
    return raw


def load_settings(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> Settings:
    raw = read_raw(path, env)
    pipe_types = {f.name: f.type for f in fields(PipelineConfig)}
    pipeline = {}
    for k, v in raw["pipeline"].items():
        if k not in pipe_types or k in ("config_id", "coref_enabled", "prompt_variant"):
            raise InvalidConfigError(f"unknown or fixed [pipeline] key {k!r}")
        pipeline[k] = _coerce(v, pipe_types[k])
    gw_types = {f.name: f.type for f in fields(GatewaySettings)}
    gw = {}
    for k, v in raw["gateway"].items():
        if k not in gw_types:
            raise InvalidConfigError(f"unknown [gateway] key {k!r}")
        gw[k] = _coerce(v, gw_types[k])
    # [paths] entries feed pipeline path options
    for k, v in raw["paths"].items():
        if k in pipe_types:
            pipeline[k] = v
    return Settings(pipeline, GatewaySettings(**gw), dict(raw["paths"]))


def build_gateway(gs: GatewaySettings) -> Gateway:
    store = ReplayStore(gs.store) if gs.store else None
    if gs.backend == "replay":
        return Gateway(None, store, "replay")
    if gs.backend == "mock":
        backend = load_scenario(gs.mock_scenario) if gs.mock_scenario else MockBackend()
    else:
        backend = HttpBackend(gs.base_url, gs.adapter, gs.path, gs.auth_header, gs.model,
                              gs.timeout, gs.attempts, gs.backoff)
    return Gateway(backend, store, gs.mode)
