"""Run configuration: ``[section]`` headers with flat ``key = value`` lines.

::

    [run]
    scenario = field          ; field | localization
    seed = 1
    methods = sp-proximity, lmmse-stream
    monitor = center          ; center | mean | node index

    [field]
    T = 500
    n_runs = 20

Keys under ``[field]`` and ``[localization]`` are the fields of
:class:`~proxopt.experiments.FieldScenario` and
:class:`~proxopt.experiments.LocalizationScenario`; unset keys keep their
defaults.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, fields

from .errors import InvalidArgument
from .experiments import (FIELD_METHODS, LOCALIZATION_METHODS, FieldScenario,
                          LocalizationScenario)

SCENARIOS = {"field": (FieldScenario, FIELD_METHODS),
             "localization": (LocalizationScenario, LOCALIZATION_METHODS)}


class ConfigError(InvalidArgument):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass
class RunConfig:
    scenario: str
    seed: int
    params: dict
    methods: tuple
    monitor: object = "center"
    paper_lmmse_formula: bool = False

    def build_scenario(self):
        cls, _ = SCENARIOS[self.scenario]
        return cls(**self.params)

    def to_ini(self) -> str:
        """Fully resolved configuration that reproduces this run."""
        cls, _ = SCENARIOS[self.scenario]
        lines = ["[run]", f"scenario = {self.scenario}", f"seed = {self.seed}",
                 f"methods = {', '.join(self.methods)}", f"monitor = {self.monitor}",
                 f"paper_lmmse_formula = {str(self.paper_lmmse_formula).lower()}",
                 "", f"[{self.scenario}]"]
        for f in fields(cls):
            lines.append(f"{f.name} = {_format(self.params[f.name])}")
        return "\n".join(lines) + "\n"


def _format(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(raw: str, default, key):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        kind = type(default).__name__
        raise InvalidArgument(f"key '{key}': cannot parse {raw!r} as {kind}") from None
    return raw


def _line_of(text, section, key):
    """1-based line of ``key`` inside ``[section]``, if present."""
    if text is None:
        return None
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[(.+)\]$", stripped)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", stripped, re.I):
            return n
    return None


def parse_monitor(raw):
    raw = str(raw).strip().lower()
    if raw in ("center", "centre", "mean"):
        return "center" if raw.startswith("cent") else "mean"
    try:
        node = int(raw)
    except ValueError:
        raise InvalidArgument(f"monitor must be center, mean or a node index, got {raw!r}") from None
    if node < 0:
        raise InvalidArgument("monitor node index must be nonnegative")
    return node


def load_config(path=None, text=None, overrides=None, seed=None, methods=None,
                monitor=None, paper_lmmse_formula=None) -> RunConfig:
    """Parse a config file (or text), apply overrides and validate.

    ``overrides`` maps ``"section.key"`` to raw string values. Explicit
    keyword arguments take precedence over file values.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    label = path or "<config>"
    try:
        parser.read_string(text or "", source=str(label))
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", label, line) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message if hasattr(exc, "message") else str(exc),
                          label, getattr(exc, "lineno", None)) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], label) from None

    for spec, value in (overrides or {}).items():
        if "." not in spec:
            raise ConfigError(f"override '{spec}' must look like section.key=value")
        section, key = spec.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)

    def fail(message, section, key):
        raise ConfigError(message, label, _line_of(text, section, key))

    run = parser["run"] if parser.has_section("run") else {}
    known_run = {"scenario", "seed", "methods", "monitor", "paper_lmmse_formula"}
    for key in run:
        if key not in known_run:
            fail(f"unknown key '{key}' in [run]", "run", key)
    scenario = run.get("scenario", "field").strip()
    if scenario not in SCENARIOS:
        fail(f"key 'scenario': expected field or localization, got {scenario!r}", "run", "scenario")
    cls, allowed = SCENARIOS[scenario]
    for other in SCENARIOS:
        if other != scenario and parser.has_section(other):
            fail(f"section [{other}] does not apply to scenario {scenario}", other, "")
    for section in parser.sections():
        if section not in ("run",) + tuple(SCENARIOS):
            raise ConfigError(f"unknown section [{section}]", label)

    if seed is None:
        if "seed" not in run:
            raise ConfigError("a seed is required (key 'seed' in [run] or --seed)", label)
        try:
            seed = int(run["seed"])
        except ValueError:
            fail(f"key 'seed': cannot parse {run['seed']!r} as int", "run", "seed")
    if seed < 0:
        fail("key 'seed' must be nonnegative", "run", "seed")

    if methods is None:
        methods = run.get("methods")
    if methods is None:
        methods = allowed
    elif isinstance(methods, str):
        methods = tuple(m.strip() for m in methods.split(",") if m.strip())
    bad = [m for m in methods if m not in allowed]
    if bad or not methods:
        fail(f"key 'methods': unknown {bad}; {scenario} supports {', '.join(allowed)}",
             "run", "methods")

    try:
        mon = parse_monitor(monitor if monitor is not None else run.get("monitor", "center"))
    except InvalidArgument as exc:
        fail(f"key 'monitor': {exc}", "run", "monitor")

    if paper_lmmse_formula is None:
        try:
            paper_lmmse_formula = _coerce(run.get("paper_lmmse_formula", "false"), False,
                                          "paper_lmmse_formula")
        except InvalidArgument as exc:
            fail(str(exc), "run", "paper_lmmse_formula")

    defaults = {f.name: f.default for f in fields(cls)}
    params = dict(defaults)
    if parser.has_section(scenario):
        for key, raw in parser[scenario].items():
            if key not in defaults:
                fail(f"unknown key '{key}' in [{scenario}]", scenario, key)
            try:
                params[key] = _coerce(raw, defaults[key], key)
            except InvalidArgument as exc:
                fail(str(exc), scenario, key)
    try:
        cls(**params)
    except InvalidArgument as exc:
        key = next((k for k in params if str(exc).startswith(k + " ")
                    or f"'{k}'" in str(exc)), "")
        fail(f"key '{key}': {exc}" if key else str(exc), scenario, key)

    return RunConfig(scenario, int(seed), params, tuple(methods), mon,
                     paper_lmmse_formula=bool(paper_lmmse_formula))
