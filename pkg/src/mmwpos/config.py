"""Experiment configuration: INI-style sections, JSON arrays in brackets,
strict keys and environment overrides (``MMWPOS_<SECTION>__<KEY>``)."""
from __future__ import annotations

import configparser
import copy
import json
import os
import re
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from .arraymodel import REFERENCE_COUPLING, CouplingSpec
from .baseline import GridConfig
from .channel import snr_sweep_grid
from .e2e import TrainConfig
from .evaluation import EvalSpec
from .impairments import KINDS, ImpairmentSpec
from .scenario import DEG, AngularSector, Scenario

ENV_PREFIX = "MMWPOS_"
AXES = ("snr", "sigma_lambda", "zeta")
SYSTEMS = ("benchmark", "ae", "both")
MODES = ("aod", "position")


class ConfigError(ValueError):
    pass


class SweepAxisError(ConfigError):
    pass


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError("expected a number")
    return float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError("expected an integer")
    return v


def _str(v):
    return v if isinstance(v, str) else str(v)


def _opt_float(v):
    return None if v in (None, "none") else _float(v)


def _floats(n=None):
    def conv(v):
        if not isinstance(v, list):
            raise ValueError("expected a bracketed list")
        out = [_float(x) for x in v]
        if n is not None and len(out) != n:
            raise ValueError(f"expected {n} values")
        return out
    return conv


def _points(v):
    if not isinstance(v, list) or not all(isinstance(r, list) and len(r) == 2 for r in v):
        raise ValueError("expected a list of [x, y] pairs")
    return [[_float(a), _float(b)] for a, b in v]


def _reference_phases_deg():
    return [float(np.degrees(np.angle(c))) for c in REFERENCE_COUPLING.c]


# section -> key -> (default, converter)
SCHEMA: Dict[str, Dict[str, Tuple[Any, Callable]]] = {
    "run": {
        "seed": (0, _int),
    },
    "scenario": {
        "n_tx": (32, _int),
        "n_transmissions": (20, _int),
        "wavelength": (10.7e-3, _float),
        "bs_positions": ([[-5.0, 0.0], [3.0, 0.0]], _points),
        "bs_orientations_deg": ([0.0, 10.0], _floats()),
        "prior_region": (None, lambda v: None if v in (None, "none") else _floats(4)(v)),
    },
    "impairment": {
        "kind": ("none", _str),
        "sigma_lambda": (0.01, _float),
        "coupling_magnitude": ([float(abs(c)) for c in REFERENCE_COUPLING.c], _floats()),
        "coupling_phase_deg": (_reference_phases_deg(), _floats()),
        "zeta": (-0.3, _float),
    },
    "sweep": {
        "axis": ("snr", _str),
        "snr_start": (-5.0, _float),
        "snr_stop": (30.0, _float),
        "snr_step": (5.0, _float),
        "values": ([1 / 300, 1 / 200, 1 / 100, 1 / 50, 1 / 30], _floats()),
        "fixed_snr_db": (20.0, _float),
    },
    "system": {
        "select": ("benchmark", _str),
    },
    "eval": {
        "mode": ("aod", _str),
        "trials": (2000, _int),
        "sector_deg": ([40.0, 60.0], _floats(2)),
        "theta_deg": (50.0, _opt_float),
        "bs_index": (0, _int),
        "position": ([0.5, 5.0], _floats(2)),
        "position_sector_width_deg": (30.0, _float),
        "draws": (20, _int),
        "checkpoints": ([], lambda v: [_str(x) for x in v] if isinstance(v, list) else [_str(v)]),
    },
    "train": {
        "snr_db": (20.0, _float),
        "batch_size": (10000, _int),
        "iterations": (3000, _int),
        "hidden": (256, _int),
        "lr": (1e-3, _float),
        "min_lr": (1e-8, _float),
        "epoch_length": (25, _int),
        "patience": (20, _int),
        "width_range_deg": ([10.0, 20.0], _floats(2)),
        "mean_range_deg": ([-60.0, 60.0], _floats(2)),
    },
    "baseline": {
        "grid_points": (2000, _int),
        "tol": (1e-6, _float),
        "pos_points": (200, _int),
        "gn_iters": (50, _int),
        "gn_tol": (1e-9, _float),
        "power_iters": (500, _int),
        "power_restarts": (5, _int),
        "power_grid": (10, _int),
    },
}


def _decode(raw: str):
    """JSON if it parses, otherwise the bare string."""
    text = raw.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if text.startswith("[") or text.startswith("{"):
            raise
        return text


def _key_lines(text: str) -> Dict[Tuple[str, str], int]:
    lines, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            continue
        m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if m and section:
            lines[(section, m.group(1).strip().lower())] = n
    return lines


@dataclass
class Config:
    values: Dict[str, Dict[str, Any]]
    source: Optional[str] = None

    def __getitem__(self, section):
        return self.values[section]

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return copy.deepcopy(self.values)

    def to_ini(self) -> str:
        """Config text that loads back to the same values."""
        out = []
        for sec, keys in self.values.items():
            out.append(f"[{sec}]")
            for k, v in keys.items():
                if v is None:
                    text = "none"
                elif isinstance(v, str):
                    text = v
                else:
                    text = json.dumps(v)
                out.append(f"{k} = {text}")
            out.append("")
        return "\n".join(out)

    @classmethod
    def from_dict(cls, values: Dict[str, Dict[str, Any]]) -> "Config":
        cfg = defaults()
        for sec, keys in values.items():
            for k, v in keys.items():
                _set(cfg, sec, k, v, "metadata")
        return validate(cfg)

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    # -- typed views ------------------------------------------------------------

    def scenario(self) -> Scenario:
        s = self.values["scenario"]
        kw = dict(bs_positions=np.array(s["bs_positions"]),
                  bs_orientations=np.array(s["bs_orientations_deg"]) * DEG,
                  n_tx=s["n_tx"], n_transmissions=s["n_transmissions"], wavelength=s["wavelength"])
        if s["prior_region"] is not None:
            kw["prior_region"] = tuple(s["prior_region"])
        return Scenario(**kw)

    def coupling(self) -> CouplingSpec:
        s = self.values["impairment"]
        mag, ph = np.array(s["coupling_magnitude"]), np.array(s["coupling_phase_deg"])
        if mag.shape != ph.shape:
            raise ConfigError("[impairment] coupling_magnitude and coupling_phase_deg differ in length")
        return CouplingSpec(mag * np.exp(1j * ph * DEG))

    def impairment(self, kind: Optional[str] = None, value: Optional[float] = None) -> ImpairmentSpec:
        s = self.values["impairment"]
        kind = s["kind"] if kind is None else kind
        lam = self.values["scenario"]["wavelength"]
        sigma = s["sigma_lambda"] if kind != "spacing" or value is None else value
        zeta = s["zeta"] if kind != "decay" or value is None else value
        return ImpairmentSpec(kind, sigma * lam if kind == "spacing" else 0.0, self.coupling(),
                              zeta if kind == "decay" else None)

    def grid(self) -> GridConfig:
        b = self.values["baseline"]
        return GridConfig(b["grid_points"], b["tol"], b["pos_points"], b["gn_iters"], b["gn_tol"])

    def power_kw(self) -> Dict[str, int]:
        b = self.values["baseline"]
        return dict(iters=b["power_iters"], restarts=b["power_restarts"], grid_size=b["power_grid"])

    def snr_grid(self):
        w = self.values["sweep"]
        return tuple(snr_sweep_grid(w["snr_start"], w["snr_stop"], w["snr_step"]))

    def eval_spec(self, snr_grid=None, impairment=None, trials=None) -> EvalSpec:
        e = self.values["eval"]
        pos = tuple(e["position"]) if e["mode"] == "position" else None
        return EvalSpec(
            snr_grid=self.snr_grid() if snr_grid is None else tuple(snr_grid),
            trials=e["trials"] if trials is None else trials,
            sector=AngularSector.from_degrees(*e["sector_deg"]),
            theta=None if e["theta_deg"] is None else e["theta_deg"] * DEG,
            bs_index=e["bs_index"],
            position=pos,
            position_sector_width=e["position_sector_width_deg"] * DEG,
            impairment=self.impairment() if impairment is None else impairment,
            draws=e["draws"],
            seed=self.seed,
        )

    def train_config(self, scenario: Optional[Scenario] = None) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(
            scenario=self.scenario() if scenario is None else scenario,
            snr_db=t["snr_db"], batch_size=t["batch_size"], iterations=t["iterations"],
            hidden=t["hidden"], seed=self.seed, impairment=self.impairment(),
            width_range=tuple(np.array(t["width_range_deg"]) * DEG),
            mean_range=tuple(np.array(t["mean_range_deg"]) * DEG),
            lr=t["lr"], min_lr=t["min_lr"], epoch_length=t["epoch_length"], patience=t["patience"],
        )


def defaults() -> Config:
    return Config({sec: {k: copy.deepcopy(d) for k, (d, _) in keys.items()} for sec, keys in SCHEMA.items()})


def _set(cfg: Config, section: str, key: str, raw, where: str):
    if section not in SCHEMA:
        raise ConfigError(f"{where}: unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"{where}: unknown key '{key}' in [{section}]")
    try:
        value = _decode(raw) if isinstance(raw, str) else raw
        cfg.values[section][key] = SCHEMA[section][key][1](value)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: bad value for [{section}] {key}: {exc}") from None


def parse_text(text: str, source: str = "<string>") -> Config:
    cfg = defaults()
    cfg.source = source
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: key outside of any section") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: {exc.message}") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"{source}, line {lineno}: cannot parse") from None
    lines = _key_lines(text)
    for section in parser.sections():
        sec = section.strip().lower()
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            _set(cfg, sec, key, raw, f"{source}, line {lines.get((sec, key), '?')}")
    return cfg


def apply_env(cfg: Config, environ=None) -> Config:
    environ = os.environ if environ is None else environ
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        if "__" not in rest:
            raise ConfigError(f"environment override {name} must look like {ENV_PREFIX}<SECTION>__<KEY>")
        section, key = rest.split("__", 1)
        _set(cfg, section.lower(), key.lower(), environ[name], f"environment {name}")
    return cfg


def validate(cfg: Config) -> Config:
    v = cfg.values
    checks = [
        (v["impairment"]["kind"] in KINDS, f"[impairment] kind must be one of {', '.join(KINDS)}"),
        (v["impairment"]["sigma_lambda"] >= 0, "[impairment] sigma_lambda must be non-negative"),
        (v["impairment"]["zeta"] < 0, "[impairment] zeta must be negative"),
        (v["system"]["select"] in SYSTEMS, f"[system] select must be one of {', '.join(SYSTEMS)}"),
        (v["eval"]["mode"] in MODES, f"[eval] mode must be one of {', '.join(MODES)}"),
        (v["eval"]["trials"] >= 1, "[eval] trials must be positive"),
        (v["eval"]["draws"] >= 1, "[eval] draws must be positive"),
        (v["eval"]["position_sector_width_deg"] > 0, "[eval] position_sector_width_deg must be positive"),
        (v["train"]["batch_size"] >= 1, "[train] batch_size must be positive"),
        (v["train"]["iterations"] >= 1, "[train] iterations must be positive"),
        (v["train"]["hidden"] >= 1, "[train] hidden must be positive"),
        (v["run"]["seed"] >= 0, "[run] seed must be non-negative"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    if v["sweep"]["axis"] not in AXES:
        raise SweepAxisError(f"[sweep] axis must be one of {', '.join(AXES)}")
    try:
        sc = cfg.scenario()
        cfg.impairment()
        cfg.snr_grid()
        if not 0 <= v["eval"]["bs_index"] < sc.n_bs:
            raise ConfigError("[eval] bs_index out of range")
        AngularSector.from_degrees(*v["eval"]["sector_deg"])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load(path: Optional[str] = None, environ=None) -> Config:
    """Defaults, then the file (if any), then environment overrides."""
    if path is None:
        cfg = defaults()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        cfg = parse_text(text, path)
    return validate(apply_env(cfg, environ))
