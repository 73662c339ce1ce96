"""Flat key-value experiment configs.

A pac-curve config has two sections::

    [distribution]
    family = zipf
    alpha = 0.5

    [experiment]
    estimator = good_turing
    eps = 0.5
    delta = 0.1
    n_grid = 2^10, 2^11, 2^12
    reps = 1000
    seed = 7

Errors are raised as ConfigError carrying the offending line number.
"""

from __future__ import annotations

import configparser
import re
from importlib import resources
from pathlib import Path

from .distributions import dist_from_spec
from .pac_harness import PacConfig

MIN_CONFIG_REPS = 100


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.fullmatch(r"\[(.+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", line, re.I):
            return i
    return None


def parse_grid(value: str) -> list[int]:
    """Comma/space separated integers; ``2^e`` is accepted for powers of two."""
    out = []
    for tok in re.split(r"[,\s]+", value.strip()):
        if not tok:
            continue
        m = re.fullmatch(r"(\d+)\^(\d+)", tok)
        out.append(int(m.group(1)) ** int(m.group(2)) if m else int(tok))
    return out


def shipped_config(name: str) -> Path | None:
    """Path of a config bundled with the package, or None."""
    ref = resources.files("missmass") / "configs" / name
    return Path(str(ref)) if ref.is_file() else None


def load_pac_config(text: str, source: str = "<config>") -> PacConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("missing section header", exc.lineno, source) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("unparseable line", line, source) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None), source) from None

    for section in ("distribution", "experiment"):
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]", None, source)

    try:
        dist = dist_from_spec(dict(parser["distribution"]))
    except ValueError as exc:
        bad = next((k for k in parser["distribution"] if k in str(exc)), None)
        raise ConfigError(str(exc), _line_of(text, "distribution", bad) or _line_of(text, "distribution", None),
                          source) from None

    exp = parser["experiment"]

    def get(key, conv, default=None):
        if key not in exp:
            if default is None:
                raise ConfigError(f"[experiment] requires {key!r}", _line_of(text, "experiment", None), source)
            return default
        try:
            return conv(exp[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", _line_of(text, "experiment", key), source) from None

    reps = get("reps", int)
    if reps < MIN_CONFIG_REPS:
        raise ConfigError(f"reps must be >= {MIN_CONFIG_REPS}", _line_of(text, "experiment", "reps"), source)
    fields = dict(
        dist=dist,
        estimator_id=get("estimator", str.strip),
        eps=get("eps", float),
        n_grid=get("n_grid", parse_grid),
        reps=reps,
        seed=get("seed", int, 0),
        delta=get("delta", float, 0.1),
    )
    try:
        return PacConfig(**fields)
    except ValueError as exc:
        key = next((k for k in ("estimator", "eps", "n_grid") if k.split("_")[0] in str(exc)), None)
        raise ConfigError(str(exc), _line_of(text, "experiment", key), source) from None


def load_pac_config_file(path: str | Path) -> PacConfig:
    p = Path(path)
    if not p.is_file():
        bundled = shipped_config(p.name)
        if bundled is None:
            raise ConfigError("no such file", None, str(path))
        p = bundled
    return load_pac_config(p.read_text(encoding="utf-8"), str(p))
