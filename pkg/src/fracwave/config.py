"""INI experiment configs: parsing, validation and the echoed header block."""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .params import SystemParams

COMMANDS = ("spectrum", "simulate", "verify", "sweep")
OUT_ENV = "FRACWAVE_OUT"

# Documented keys per section with defaults; anything else is rejected.
DEFAULTS = {
    "params": {"a": "1.0", "b": "1.0", "alpha": "0.5", "eta": "1.0", "gamma": "1.0"},
    "spectrum": {
        "n_min": "20", "n_max": "200", "branch": "auto", "tol": "1e-10",
        "k_max": "50", "n0": "10",
    },
    "simulate": {
        "n_cells": "200", "dt": "", "t_end": "100.0", "xi_tol": "1e-6",
        "initial": "smooth", "mode": "1", "seed": "0", "k1": "2", "k2": "1",
        "record_every": "1", "fit_t_lo": "", "fit_t_hi": "", "plot_points": "400",
    },
    "verify": {"n_cells": "32", "t_end": "1.0", "seed": "0", "kappa_override": ""},
    "sweep": {"command": "spectrum", "parameter": "alpha", "values": "0.3, 0.5, 0.7", "workers": "2"},
    "output": {"dir": "out"},
}

INITIAL_KINDS = ("zero", "smooth", "mode", "random", "exceptional")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    params: SystemParams
    sections: dict = field(default_factory=dict)  # raw string values, defaults filled
    out_dir: Path = Path("out")

    def get(self, section, key) -> str:
        return self.sections[section][key]

    def getint(self, section, key) -> int:
        return _as_int(section, key, self.get(section, key))

    def getfloat(self, section, key, optional=False):
        raw = self.get(section, key)
        if optional and raw == "":
            return None
        return _as_float(section, key, raw)

    def header_lines(self) -> list[str]:
        lines = [f"command = {self.command}"]
        for sec in sorted(self.sections):
            for key in sorted(self.sections[sec]):
                lines.append(f"{sec}.{key} = {self.sections[sec][key]}")
        return lines

    def as_dict(self) -> dict:
        return {"command": self.command, **{s: dict(v) for s, v in sorted(self.sections.items())}}

    def sweep_child(self, value, out_dir=None) -> "ExperimentConfig":
        """The sweep's sub-command config with the swept parameter set to ``value``."""
        secs = {s: dict(v) for s, v in self.sections.items()}
        secs["params"][secs["sweep"]["parameter"]] = repr(float(value))
        return build_config(secs["sweep"]["command"], secs, out_dir or self.out_dir)


def _as_float(section, key, raw) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from None
    if not math.isfinite(v):
        raise ConfigError(f"[{section}] {key} must be finite")
    return v


def _as_int(section, key, raw) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not an integer") from None


def _in_range(section, key, v, lo, hi):
    if not (lo <= v <= hi):
        raise ConfigError(f"[{section}] {key} = {v} outside [{lo:g}, {hi:g}]")


def _params(command, secs) -> SystemParams:
    s = secs["params"]
    vals = {k: _as_float("params", k, s[k]) for k in ("a", "b", "alpha", "eta", "gamma")}
    # gamma = 0 is the conservative check run of the simulator
    zero_gamma = command == "simulate" and vals["gamma"] == 0.0
    try:
        return SystemParams.make(**vals, allow_zero_gamma=zero_gamma)
    except ValueError as exc:
        raise ConfigError(f"[params] {exc}") from None


def _validate(cfg: ExperimentConfig):
    c = cfg.command
    if c == "spectrum":
        n0 = cfg.getint("spectrum", "n0")
        n_min, n_max = cfg.getint("spectrum", "n_min"), cfg.getint("spectrum", "n_max")
        if n0 < 1 or n_min < n0 or n_max < n_min + 5:
            raise ConfigError("[spectrum] need 1 <= n0 <= n_min and n_max >= n_min + 5")
        _in_range("spectrum", "tol", cfg.getfloat("spectrum", "tol"), 1e-15, 1e-2)
        _in_range("spectrum", "k_max", cfg.getint("spectrum", "k_max"), 1, 10_000)
        if cfg.get("spectrum", "branch") not in ("auto", "1", "2"):
            raise ConfigError("[spectrum] branch must be auto, 1 or 2")
    elif c == "simulate":
        _in_range("simulate", "n_cells", cfg.getint("simulate", "n_cells"), 16, 100_000)
        dt = cfg.getfloat("simulate", "dt", optional=True)
        if dt is not None and not dt > 0:
            raise ConfigError("[simulate] dt must be positive")
        if not cfg.getfloat("simulate", "t_end") > 0:
            raise ConfigError("[simulate] t_end must be positive")
        _in_range("simulate", "xi_tol", cfg.getfloat("simulate", "xi_tol"), 1e-12, 1e-2)
        if cfg.get("simulate", "initial") not in INITIAL_KINDS:
            raise ConfigError(f"[simulate] initial must be one of {', '.join(INITIAL_KINDS)}")
        for key in ("mode", "k1", "k2", "record_every", "plot_points"):
            _in_range("simulate", key, cfg.getint("simulate", key), 1, 10**9)
        cfg.getint("simulate", "seed")
        for key in ("fit_t_lo", "fit_t_hi"):
            cfg.getfloat("simulate", key, optional=True)
    elif c == "verify":
        _in_range("verify", "n_cells", cfg.getint("verify", "n_cells"), 16, 4096)
        _in_range("verify", "t_end", cfg.getfloat("verify", "t_end"), 1e-3, 1e3)
        cfg.getint("verify", "seed")
        cfg.getfloat("verify", "kappa_override", optional=True)
    elif c == "sweep":
        sub = cfg.get("sweep", "command")
        if sub not in ("spectrum", "simulate", "verify"):
            raise ConfigError("[sweep] command must be spectrum, simulate or verify")
        key = cfg.get("sweep", "parameter")
        if key not in DEFAULTS["params"]:
            raise ConfigError(f"[sweep] parameter must be one of {', '.join(DEFAULTS['params'])}")
        values = sweep_values(cfg)
        if not values:
            raise ConfigError("[sweep] values is empty")
        _in_range("sweep", "workers", cfg.getint("sweep", "workers"), 1, 256)
        # every swept config must itself be valid
        for v in values:
            cfg.sweep_child(v)


def sweep_values(cfg: ExperimentConfig) -> list[float]:
    raw = [v.strip() for v in cfg.get("sweep", "values").split(",") if v.strip()]
    return [_as_float("sweep", "values", v) for v in raw]


def build_config(command: str, sections: dict, out_dir) -> ExperimentConfig:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    secs = {s: dict(v) for s, v in DEFAULTS.items()}
    for sec, kv in sections.items():
        if sec not in secs:
            raise ConfigError(f"unknown section [{sec}]")
        for key, val in kv.items():
            if key not in secs[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            secs[sec][key] = str(val).strip()
    cfg = ExperimentConfig(command, _params(command, secs), secs, Path(out_dir))
    _validate(cfg)
    return cfg


def load_config(path, command: str, out_override=None) -> ExperimentConfig:
    """Read an INI file; output dir is --out, else $FRACWAVE_OUT, else [output] dir."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    out = sections.get("output", {}).get("dir", DEFAULTS["output"]["dir"])
    out = out_override or os.environ.get(OUT_ENV) or out
    return build_config(command, sections, out)
