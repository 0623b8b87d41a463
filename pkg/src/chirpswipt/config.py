"""Experiment files: INI-style sections mapped onto the simulation dataclasses."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .channel import SystemConfig
from .harvester import DiodeModel
from .simkit import AXES, SweepSpec


class ConfigError(ValueError):
    def __init__(self, msg, line=None, col=None):
        self.line, self.col = line, col
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + msg)


SECTIONS = {
    "system": {"M", "N", "Ntil", "K", "B", "Ptx", "Pp", "sigma2", "tau_ch", "eps_pilot",
               "distances", "distance_range"},
    "diode": {"Is", "Vt", "theta", "psi"},
    "waveform": {"xi", "modes", "f0"},
    "policy": {"name", "weights"},
    "sweep": {"axis", "values", "series_param", "series_values", "realizations", "seed"},
    "output": {"dir", "metrics", "rate_threshold"},
}
INT_KEYS = {"M", "N", "Ntil", "K", "eps_pilot", "xi", "realizations", "seed"}
LIST_KEYS = {"distances", "distance_range", "modes", "weights", "values", "series_values", "metrics"}
STR_KEYS = {"modes", "name", "axis", "series_param", "dir", "metrics"}


def _number(text, key, as_int):
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    v = float(t)
    if as_int:
        if v != int(v):
            raise ValueError(f"{key} must be an integer")
        return int(v)
    return v


def _parse_value(key, raw):
    if key in LIST_KEYS:
        items = [s.strip() for s in raw.replace("\n", ",").split(",") if s.strip()]
        if key in STR_KEYS:
            return tuple(items)
        return tuple(_number(s, key, False) for s in items)
    if key in STR_KEYS:
        return raw.strip()
    return _number(raw, key, key in INT_KEYS)


def _locate(text, section, key):
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
        elif cur == section and s.split("=")[0].split(":")[0].strip() == key:
            return i, line.index(s[0]) + 1
    return None, None


def _counts(name, vals):
    # antenna and user counts print as integers in tags and CSV rows
    if name in ("M", "K"):
        return tuple(int(v) if v is not None and float(v).is_integer() else v for v in vals)
    return vals


@dataclass
class ExperimentConfig:
    """Parsed experiment document; missing keys keep the dataclass defaults."""

    values: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError("expected a [section] header", exc.lineno, 1) from None
        except configparser.ParsingError as exc:
            lineno, line = exc.errors[0] if exc.errors else (None, "")
            raise ConfigError(f"cannot parse {line!r}", lineno, 1) from None
        except configparser.Error as exc:
            lineno = getattr(exc, "lineno", None)
            raise ConfigError(str(exc).splitlines()[0], lineno, 1) from None
        values = {}
        for sec in cp.sections():
            if sec not in SECTIONS:
                line, col = None, None
                for i, l in enumerate(text.splitlines(), 1):
                    if l.strip() == f"[{sec}]":
                        line, col = i, l.index("[") + 1
                raise ConfigError(f"unknown section [{sec}]", line, col)
            for key, raw in cp.items(sec):
                if key not in SECTIONS[sec]:
                    line, col = _locate(text, sec, key)
                    raise ConfigError(f"unknown key {key!r} in [{sec}]", line, col)
                try:
                    values[(sec, key)] = _parse_value(key, raw)
                except ValueError as exc:
                    line, col = _locate(text, sec, key)
                    raise ConfigError(f"bad value for {key}: {exc}", line, col) from None
        if "system" not in cp.sections():
            raise ConfigError("missing required section [system]", 1, 1)
        return cls(values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def get(self, section, key, default=None):
        return self.values.get((section, key), default)

    def serialize(self) -> str:
        lines = []
        for sec in SECTIONS:
            keys = [k for (s, k) in self.values if s == sec]
            if not keys and sec != "system":
                continue
            lines.append(f"[{sec}]")
            for k in keys:
                v = self.values[(sec, k)]
                if isinstance(v, tuple):
                    txt = ", ".join(x if isinstance(x, str) else repr(x) for x in v)
                else:
                    txt = v if isinstance(v, str) else repr(v)
                lines.append(f"{k} = {txt}")
            lines.append("")
        return "\n".join(lines)

    # -- conversion to simulation objects

    def system(self) -> SystemConfig:
        kw = {k: v for (s, k), v in self.values.items() if s == "system" and k != "distance_range"}
        xi = self.get("waveform", "xi")
        if xi is not None:
            kw["xi"] = xi
        K = kw.get("K", 1)
        rng = self.get("system", "distance_range")
        if "distances" not in kw:
            if rng is not None:
                from .simkit import evenly_spaced
                kw["distances"] = evenly_spaced(rng, K)
            else:
                kw["distances"] = (10.0,)
        return SystemConfig(**kw)

    def diode(self) -> DiodeModel:
        return DiodeModel(**{k: v for (s, k), v in self.values.items() if s == "diode"})

    def sweep(self) -> SweepSpec:
        axis = self.get("sweep", "axis", "M")
        values = self.get("sweep", "values")
        base = self.system()
        if values is None:
            values = (getattr(base, axis),) if axis in ("M", "K") else (base.distances[0],) if axis == "distance" else ()
        sp = self.get("sweep", "series_param")
        sv = self.get("sweep", "series_values", (None,)) if sp else (None,)
        values, sv = _counts(axis, values), _counts(sp, sv)
        return SweepSpec(
            base=base,
            diode=self.diode(),
            axis=axis,
            values=list(values),
            modes=tuple(self.get("waveform", "modes", ("chirp", "fixed"))),
            policy=self.get("policy", "name", "proportional"),
            weights=self.get("policy", "weights"),
            series_param=sp,
            series_values=list(sv),
            realizations=int(self.get("sweep", "realizations", 10000)),
            seed=int(self.get("sweep", "seed", 1)),
            metrics=tuple(self.get("output", "metrics", ("harvest",))),
            distance_range=self.get("system", "distance_range"),
        )
