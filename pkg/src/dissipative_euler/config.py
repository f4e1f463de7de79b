"""Run configuration: INI-style ``key = value`` text with ``[section]`` headers.

Lists are comma separated. Every key is optional; unknown sections or keys
are rejected. Errors carry the line and column of the offending text.

Schema (defaults in brackets)::

    [grid]        dim [1]  cells [256]
    [eos]         a [1.0]  gamma [1.4]
    [solver]      cfl [0.4]  end_time [0.2]  flux [rusanov]  time_scheme [rk2]
                  output_stride [10]  reconstruction [constant]  output_times []
    [viscosity]   epsilon [0.01]  shear_mu [1.0]  bulk_eta [1.0]  inviscid [false]
    [sweep]       epsilons [0.1, 0.05, 0.025]  refine [true]
    [initial]     kind [acoustic]  amplitude [0.01]  rho [1.0]  velocity [0.0]
                  left_rho [2.0]  left_u [0.0]  right_rho [1.0]  right_u [0.0]
                  mach [2.0]  position [0.0]  ramp_width []  modes [3]
    [defects]     block [cells/16]
    [bank]        modes [3]  envelopes [quad, cubic, half]
    [oscillation] dim [2]  cells [128]  rho_bar [1.0]  delta [0.5]  n_max [6]
    [run]         seed [0]  threads [1]
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None, path=None):
        self.line, self.column, self.path = line, column, path
        where = ":".join(str(p) for p in (path, line, column) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _strs(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _opt_float(text: str):
    return None if not text.strip() else float(text)


def _opt_int(text: str):
    return None if not text.strip() else int(text)


SCHEMA = {
    "grid": {"dim": (int, 1), "cells": (int, 256)},
    "eos": {"a": (float, 1.0), "gamma": (float, 1.4)},
    "solver": {
        "cfl": (float, 0.4), "end_time": (float, 0.2), "flux": (str, "rusanov"),
        "time_scheme": (str, "rk2"), "output_stride": (int, 10), "reconstruction": (str, "constant"),
        "output_times": (_floats, ()),
    },
    "viscosity": {"epsilon": (float, 1.0e-2), "shear_mu": (float, 1.0), "bulk_eta": (float, 1.0),
                  "inviscid": (_bool, False)},
    "sweep": {"epsilons": (_floats, (0.1, 0.05, 0.025)), "refine": (_bool, True)},
    "initial": {
        "kind": (str, "acoustic"), "amplitude": (float, 1.0e-2), "rho": (float, 1.0),
        "velocity": (_floats, (0.0,)), "left_rho": (float, 2.0), "left_u": (float, 0.0),
        "right_rho": (float, 1.0), "right_u": (float, 0.0), "mach": (float, 2.0),
        "position": (float, 0.0), "ramp_width": (_opt_float, None), "modes": (int, 3),
    },
    "defects": {"block": (_opt_int, None)},
    "bank": {"modes": (int, 3), "envelopes": (_strs, ("quad", "cubic", "half"))},
    "oscillation": {"dim": (int, 2), "cells": (int, 128), "rho_bar": (float, 1.0), "delta": (float, 0.5),
                    "n_max": (int, 6)},
    "run": {"seed": (int, 0), "threads": (int, 1)},
}

INITIAL_KINDS = ("constant", "acoustic", "riemann", "stationary_shock", "random")


@dataclass
class RunConfig:
    values: dict
    path: str | None = None

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def echo(self) -> dict:
        return {s: dict(v) for s, v in self.values.items()}


def _locate(text: str, section: str, key: str) -> tuple[int | None, int | None]:
    """1-based line and column of the value of ``key`` in ``section``."""
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if current != section:
            continue
        m = re.match(rf"(\s*){re.escape(key)}\s*[=:]\s*", line)
        if m:
            return n, m.end() + 1
    return None, None


def _syntax_error(text: str, exc: configparser.Error, path) -> ConfigError:
    line = getattr(exc, "lineno", None)
    col = None
    if line is not None:
        raw = text.splitlines()[line - 1] if 0 < line <= len(text.splitlines()) else ""
        col = len(raw) - len(raw.lstrip()) + 1
    msg = exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc)
    return ConfigError(msg, line, col, path)


def parse_config(text: str, path=None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path) if path else "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header before the first key", exc.lineno, 1, path) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raw = text.splitlines()[lineno - 1] if lineno else ""
        raise ConfigError(f"cannot parse line {raw.strip()!r}", lineno,
                          len(raw) - len(raw.lstrip()) + 1 if lineno else None, path) from None
    except configparser.Error as exc:
        raise _syntax_error(text, exc, path) from None

    values = {s: {k: default for k, (_, default) in keys.items()} for s, keys in SCHEMA.items()}
    for section in cp.sections():
        if section not in SCHEMA:
            line, _ = _locate_section(text, section)
            raise ConfigError(f"unknown section [{section}]", line, 1, path)
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                line, col = _locate(text, section, key)
                raise ConfigError(f"unknown key {key!r} in [{section}]", line,
                                  None if col is None else 1, path)
            conv = SCHEMA[section][key][0]
            if "\n" in raw:
                line, _ = _locate(text, section, key)
                raise ConfigError(f"indented continuation line after {section}.{key}",
                                  None if line is None else line + 1, 1, path)
            try:
                values[section][key] = conv(raw)
            except ValueError as exc:
                line, col = _locate(text, section, key)
                raise ConfigError(f"bad value for {section}.{key}: {exc}", line, col, path) from None
    _check(values, text, path)
    return RunConfig(values, None if path is None else str(path))


def _locate_section(text: str, section: str):
    for n, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*\[{re.escape(section)}\]", line):
            return n, 1
    return None, None


def _check(values: dict, text: str, path) -> None:
    def fail(section, key, msg):
        line, col = _locate(text, section, key)
        raise ConfigError(f"{section}.{key}: {msg}", line, col, path)

    if values["grid"]["dim"] not in (1, 2):
        fail("grid", "dim", "must be 1 or 2")
    if values["grid"]["cells"] < 2:
        fail("grid", "cells", "must be at least 2")
    if values["initial"]["kind"] not in INITIAL_KINDS:
        fail("initial", "kind", f"must be one of {', '.join(INITIAL_KINDS)}")
    if not values["sweep"]["epsilons"]:
        fail("sweep", "epsilons", "must list at least one viscosity")
    block = values["defects"]["block"]
    if block is not None and (block < 1 or values["grid"]["cells"] % block):
        fail("defects", "block", "must divide grid.cells")
    if values["run"]["threads"] < 1:
        fail("run", "threads", "must be positive")


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return parse_config(p.read_text(), p)


def default_config() -> RunConfig:
    return parse_config("")
