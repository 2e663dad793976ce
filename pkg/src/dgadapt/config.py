"""Run configuration: ``key = value`` files plus command-line overrides.

Unknown keys are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .adaptivity import AdaptConfig
from .solver import SolverConfig


class ConfigError(ValueError):
    pass


_FLOAT_KEYS = {
    "epsilon", "gamma", "initol", "ttol", "stola", "stolb",
    "ref_pct", "coar_pct", "m", "T", "rtol",
}
_INT_KEYS = {"p", "mesh0", "n_steps", "levels", "time_rule", "maxiter",
             "restart", "seed"}
_STR_KEYS = {"problem", "preconditioner", "outdir"}
_BOOL_KEYS = {"track_error"}
KNOWN_KEYS = _FLOAT_KEYS | _INT_KEYS | _STR_KEYS | _BOOL_KEYS

DEFAULTS = {
    "gamma": 10.0,
    "p": 1,
    "mesh0": 8,
    "n_steps": 10,
    "levels": 1,
    "initol": math.inf,
    "ttol": math.inf,
    "stola": math.inf,
    "stolb": None,
    "ref_pct": 6.25,
    "coar_pct": 10.0,
    "m": 1.0,
    "time_rule": 3,
    "rtol": 1e-10,
    "maxiter": 5000,
    "restart": 60,
    "preconditioner": "block",
    "outdir": ".",
    "seed": 0,
    "track_error": False,
    "T": None,
}

REQUIRED_KEYS = ("problem", "epsilon", "p")


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _BOOL_KEYS:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigError("malformed value for %r: %r" % (key, raw)) from exc


def parse_config_file(path: str) -> dict:
    """Read a ``key = value`` file; '#' starts a comment."""
    out: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("%s:%d: expected 'key = value'" % (path, lineno))
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in KNOWN_KEYS:
                raise ConfigError("%s:%d: unknown key %r" % (path, lineno, key))
            out[key] = _parse_value(key, raw)
    return out


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = dict(DEFAULTS)
        for k, v in self.values.items():
            if k not in KNOWN_KEYS:
                raise ConfigError("unknown key %r" % k)
            if v is not None:
                merged[k] = v
        for k in REQUIRED_KEYS:
            if k not in merged or merged[k] is None:
                raise ConfigError("missing required key %r" % k)
        self.values = merged

    def __getitem__(self, key):
        return self.values[key]

    def adapt_config(self) -> AdaptConfig:
        v = self.values
        return AdaptConfig(
            p=v["p"], gamma=v["gamma"], n0=v["mesh0"], n_steps=v["n_steps"],
            initol=v["initol"], ttol=v["ttol"], stola=v["stola"],
            stolb=v["stolb"], ref_pct=v["ref_pct"], coar_pct=v["coar_pct"],
            m=v["m"], time_rule=v["time_rule"], solver=self.solver_config(),
            track_error=v["track_error"],
        )

    def solver_config(self) -> SolverConfig:
        v = self.values
        return SolverConfig(rtol=v["rtol"], maxiter=v["maxiter"],
                            restart=v["restart"],
                            preconditioner=v["preconditioner"])

    def problem(self):
        from .problems import by_name

        prob = by_name(self.values["problem"], self.values["epsilon"])
        if self.values["T"] is not None:
            import dataclasses

            prob = dataclasses.replace(prob, T=self.values["T"])
        return prob


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    values = parse_config_file(path) if path else {}
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return RunConfig(values)
