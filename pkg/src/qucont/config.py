"""Run configuration: loading, schema validation, defaults and overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .errors import ConfigurationError

ENV_PREFIX = "QUCONT_"
_PI = re.compile(r"^(-?)([0-9]+(?:\.[0-9]*)?)?\*?pi$")


def _data(name: str) -> dict:
    return json.loads(resources.files("qucont").joinpath("data", name).read_text())


def default_config() -> dict:
    return _data("default_config.json")


def config_schema() -> dict:
    return _data("config.schema.json")


def report_schema() -> dict:
    return _data("report.schema.json")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("weight", "metric"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_length(x) -> float:
    """Numbers pass through; ``"pi"``, ``"2pi"``, ``"-0.5*pi"`` are multiples of pi."""
    if isinstance(x, (int, float)):
        return float(x)
    m = _PI.match(str(x).strip())
    if not m:
        raise ConfigurationError(f"cannot read length {x!r}")
    sign = -1.0 if m.group(1) else 1.0
    return sign * float(m.group(2) or 1.0) * math.pi


@dataclass(frozen=True)
class RunConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["sampling"]["seed"])

    @property
    def workers(self) -> int:
        return int(self.data["workers"])

    @property
    def extents(self) -> list:
        return [[parse_length(a), parse_length(b)] for a, b in self.data["grid"]["extents"]]

    @property
    def horizon(self) -> float:
        return float(self.data["time"]["horizon"])

    @property
    def steps(self) -> int:
        return int(self.data["time"]["steps"])

    def digest(self) -> str:
        """Hash of everything that can change results (not paths or worker count)."""
        data = {k: v for k, v in self.data.items() if k not in ("output", "workers")}
        data["fields"] = self.data["output"]["fields"]
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def validate(raw: dict) -> None:
    try:
        jsonschema.validate(raw, config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"invalid config at {where}: {exc.message}") from exc


def load_config(path=None, seed=None, workers=None, out=None) -> RunConfig:
    """Read ``path`` (or the shipped default), merge onto defaults, apply overrides."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    validate(raw)
    data = _merge(default_config(), raw)
    if seed is not None:
        data["sampling"]["seed"] = int(seed)
    if workers is not None:
        data["workers"] = int(workers)
    if out is not None:
        data["output"]["dir"] = str(out)
    validate(data)

    g = data["grid"]
    if not (len(g["extents"]) == len(g["n"]) == g["dim"]):
        raise ConfigurationError("grid extents and n must have one entry per dimension")
    for a, b in g["extents"]:
        if not parse_length(b) > parse_length(a):
            raise ConfigurationError(f"degenerate extent [{a}, {b}]")
    return RunConfig(data)


def env_overrides(environ=None) -> dict:
    """Flag defaults taken from ``QUCONT_CONFIG``, ``QUCONT_OUT``, ``QUCONT_SEED``, ``QUCONT_WORKERS``."""
    env = os.environ if environ is None else environ
    out = {}
    for key in ("config", "out", "seed", "workers"):
        v = env.get(ENV_PREFIX + key.upper())
        if v:
            out[key] = v
    try:
        for key in ("seed", "workers"):
            if key in out:
                out[key] = int(out[key])
    except ValueError as exc:
        raise ConfigurationError(f"bad environment override: {exc}") from exc
    return out
