"""Experiment configuration: sectioned ``key = value`` files or JSON."""
from __future__ import annotations

import configparser
import dataclasses
import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .kernels import KernelFamily
from .testfunctions import get_benchmark

__all__ = ["ConfigError", "Experiment", "ExperimentConfig", "parse_config", "load_config",
           "METHODS"]

METHODS = ("AlgA", "AlgB", "MaximinLhs", "Sobol")
_METHOD_ALIASES = {m.lower(): m for m in METHODS}
_METHOD_ALIASES.update({"a": "AlgA", "b": "AlgB", "lhs": "MaximinLhs",
                        "maximin_lhs": "MaximinLhs"})


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class Experiment(enum.Enum):
    EDM_COMPARE = "edm-compare"
    DTV = "dtv"
    CONTOUR_LENGTH = "contour-length"
    VOLUME = "volume"
    NONE = "none"

    @classmethod
    def parse(cls, value) -> "Experiment":
        key = str(value).strip().lower().replace("_", "-")
        for member in cls:
            if key in (member.value, member.value.replace("-", "")):
                return member
        raise ValueError(f"unknown experiment {value!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment = Experiment.NONE
    benchmark: str = "branin"
    n_obs: int | None = None
    family: KernelFamily | None = None
    seed: int = 0
    m_list: tuple[int, ...] = (10, 30, 50, 100)
    methods: tuple[str, ...] = METHODS
    N: int = 2000
    reps: int = 10
    grid_q: int = 50
    nodes: int = 2048
    eval_nodes: int = 16384
    sim_nodes: int = 4096
    population: int = 40
    generations: int = 15
    polish_evals: int = 50
    multistarts: int = 5
    start_points: int = 4096
    lhs_restarts: int = 10
    threads: int = 1
    out: str = "out"
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        def fail(key, msg):
            raise ConfigError(f"{key}: {msg}", self.lines.get(key))

        try:
            get_benchmark(self.benchmark)
        except ValueError as exc:
            fail("benchmark", str(exc))
        for key in ("N", "reps", "grid_q", "nodes", "eval_nodes", "sim_nodes", "population",
                    "generations", "multistarts", "start_points", "lhs_restarts", "threads"):
            if getattr(self, key) < 1:
                fail(key, "must be positive")
        if self.polish_evals < 0:
            fail("polish_evals", "must be nonnegative")
        if self.n_obs is not None and self.n_obs < 1:
            fail("n_obs", "must be positive")
        if self.seed < 0 or self.seed >= 2**64:
            fail("seed", "must be an unsigned 64-bit integer")
        if not self.m_list or any(m < 1 for m in self.m_list):
            fail("m_list", "counts must be positive")
        if list(self.m_list) != sorted(set(self.m_list)):
            fail("m_list", "must be strictly ascending")
        for m in self.methods:
            if m not in METHODS:
                fail("methods", f"unknown method {m!r}")

    @property
    def bench(self):
        return get_benchmark(self.benchmark)

    def canonical(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("lines", "threads", "out"):
                continue
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, enum.Enum) else (
                list(v) if isinstance(v, tuple) else v)
        return out

    def digest(self) -> str:
        """Hash of the settings that affect results (threads and paths excluded)."""
        text = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_INT_KEYS = {"n_obs", "seed", "N", "reps", "grid_q", "nodes", "eval_nodes", "sim_nodes",
             "population", "generations", "polish_evals", "multistarts", "start_points",
             "lhs_restarts", "threads"}
_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"lines"}
_KEY_ALIASES = {"n": "N", "name": "experiment", "kernel": "family", "q": "grid_q",
                "m": "m_list", "method": "methods", "repetitions": "reps"}


def _coerce(key: str, raw, line):
    try:
        if key in _INT_KEYS:
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError
            return int(raw)
        if key == "experiment":
            return Experiment.parse(raw)
        if key == "family":
            return KernelFamily.parse(raw)
        if key == "m_list":
            items = raw if isinstance(raw, list) else str(raw).split(",")
            return tuple(int(str(v).strip()) for v in items if str(v).strip())
        if key == "methods":
            items = raw if isinstance(raw, list) else str(raw).split(",")
            names = [str(v).strip() for v in items if str(v).strip()]
            return tuple(_METHOD_ALIASES.get(n.lower(), n) for n in names)
        return str(raw).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: invalid value {raw!r}", line) from exc


def _build(pairs, defaults: dict | None = None) -> ExperimentConfig:
    """``pairs`` is a list of (key, raw value, line number or None)."""
    values, lines = dict(defaults or {}), {}
    for key, raw, line in pairs:
        key = _KEY_ALIASES.get(key, key)
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", line)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r}", line)
        values[key] = _coerce(key, raw, line)
        lines[key] = line
    return ExperimentConfig(**values, lines=lines)


_SECTION_RE = re.compile(r"^\s*\[[^\]]*\]\s*$")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _parse_ini(text: str) -> list:
    lines = text.splitlines()
    first = next((ln for ln in lines if ln.strip() and not ln.lstrip().startswith(("#", ";"))),
                 "")
    offset = 0
    if first and not _SECTION_RE.match(first):
        text = "[experiment]\n" + text
        offset = 1
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno - offset) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section {exc.section!r}", exc.lineno - offset) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header", exc.lineno - offset) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] - offset if exc.errors else None
        raise ConfigError("malformed line (expected key = value)", lineno) from None
    # configparser does not keep positions; recover them for validation messages
    positions, section = {}, None
    for i, ln in enumerate(text.splitlines(), start=1 - offset):
        if _SECTION_RE.match(ln):
            section = ln.strip()[1:-1].strip()
            continue
        m = _KEY_RE.match(ln)
        if m and section is not None and not ln[0].isspace():
            positions[(section, m.group(1))] = i
    pairs = []
    for section in parser.sections():
        for key, raw in parser.items(section):
            pairs.append((key, raw, positions.get((section, key))))
    return pairs


def _parse_json(text: str) -> list:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("JSON config must be an object", 1)
    pairs = []
    for key, val in data.items():
        if isinstance(val, dict):
            pairs.extend((k, v, None) for k, v in val.items())
        else:
            pairs.append((key, val, None))
    return pairs


def parse_config(text: str, defaults: dict | None = None) -> ExperimentConfig:
    """Parse either JSON (text starting with ``{``) or sectioned key-value text."""
    pairs = _parse_json(text) if text.lstrip().startswith("{") else _parse_ini(text)
    return _build(pairs, defaults)


def load_config(path, defaults: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, defaults)
