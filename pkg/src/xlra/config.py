"""TOML scenario files and CSV result writers.

Every key is optional; missing keys fall back to the dataclass defaults. Example::

    [array]
    subarrays = 5

    [engine]
    trials = 500

    [sweep]
    k_values = [1000, 5000]
"""
from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .channel import ArrayGeometry, FadingModel
from .engine import Scenario
from .errors import ConfigurationError
from .optimizer import DeltaGrid
from .protocol import ProtocolParams

DEFAULT_K_VALUES = (1000, 2500, 5000, 10000, 15000)
DEFAULT_B_VALUES = (1, 5, 10)

# section -> {key: (target, attribute, type)}
_SCHEMA: dict[str, dict[str, tuple[str, str, type]]] = {
    "array": {
        "m_y": ("geometry", "m_y", int),
        "m_z": ("geometry", "m_z", int),
        "spacing": ("geometry", "spacing", float),
        "subarrays": ("geometry", "subarrays", int),
        "wavelength": ("geometry", "wavelength", float),
    },
    "fading": {
        "g_db": ("fading", "g_db", float),
        "kappa": ("fading", "kappa", float),
        "sigma_sf_db": ("fading", "sigma_sf_db", float),
    },
    "cell": {
        "side": ("scenario", "cell_side", float),
        "standoff": ("scenario", "cell_standoff", "standoff"),
        "p_b": ("scenario", "p_b", float),
    },
    "population": {
        "k_inactive": ("scenario", "k_inactive", int),
    },
    "protocol": {
        "scheme": ("protocol", "scheme", str),
        "tau_ra": ("protocol", "tau_ra", int),
        "rho": ("protocol", "rho", float),
        "sigma2": ("protocol", "sigma2", float),
        "p_a": ("protocol", "p_a", float),
        "p_na": ("protocol", "p_na", float),
        "max_attempts": ("protocol", "max_attempts", int),
        "delta": ("protocol", "delta", float),
        "sucre_delta": ("extra", "sucre_delta", float),
        "varpi1": ("protocol", "varpi1", float),
        "max_cluster": ("protocol", "max_cluster", int),
        "alpha_mode": ("protocol", "alpha_mode", str),
        "alpha_noise_var": ("protocol", "alpha_noise_var", float),
    },
    "engine": {
        "trials": ("scenario", "trials", int),
        "seed": ("scenario", "master_seed", int),
        "horizon_slots": ("scenario", "horizon_slots", int),
    },
    "sweep": {
        "k_values": ("extra", "k_values", "intlist"),
        "b_values": ("extra", "b_values", "intlist"),
        "delta_lo": ("grid", "lo", float),
        "delta_hi": ("grid", "hi", float),
        "delta_step": ("grid", "step", float),
        "trials_per_point": ("grid", "trials_per_point", int),
    },
}


@dataclass(frozen=True)
class Config:
    scenario: Scenario = field(default_factory=Scenario)
    k_values: tuple[int, ...] = DEFAULT_K_VALUES
    b_values: tuple[int, ...] = DEFAULT_B_VALUES
    grid: DeltaGrid = field(default_factory=DeltaGrid)
    sucre_delta: Optional[float] = None

    def scenarios(self, scheme: Optional[str] = None):
        """Yield (K, B, scenario) over the K x B grid."""
        for b in self.b_values:
            for k in self.k_values:
                sc = replace(self.scenario, k_inactive=k,
                             geometry=replace(self.scenario.geometry, subarrays=b))
                if scheme is not None:
                    sc = replace(sc, protocol=replace(sc.protocol, scheme=scheme))
                yield k, b, sc


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return no
    return 0


def _coerce(value: Any, kind, where: str):
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{where}: expected integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{where}: expected number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{where}: expected string, got {value!r}")
        return value
    if kind == "standoff":
        if value == "auto":
            return None
        return _coerce(value, float, where)
    if kind == "intlist":
        if not isinstance(value, list) or not value:
            raise ConfigurationError(f"{where}: expected non-empty list of integers")
        return tuple(_coerce(v, int, where) for v in value)
    raise AssertionError(kind)


def loads_config(text: str, source: str = "<config>") -> Config:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc

    parts: dict[str, dict[str, Any]] = {t: {} for t in
                                        ("geometry", "fading", "scenario", "protocol", "grid", "extra")}
    for section, body in doc.items():
        if section not in _SCHEMA:
            raise ConfigurationError(
                f"{source}:{_line_of(text, section)}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigurationError(f"{source}: top-level key {section!r} must be a section")
        for key, value in body.items():
            where = f"{source}:{_line_of(text, section, key)}: [{section}] {key}"
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"{where}: unknown key")
            target, attr, kind = _SCHEMA[section][key]
            parts[target][attr] = _coerce(value, kind, where)

    def build(section_hint: str, factory, **kw):
        try:
            return factory(**kw)
        except ConfigurationError as exc:
            raise ConfigurationError(
                f"{source}:{_line_of(text, section_hint)}: [{section_hint}] {exc}") from exc

    geometry = build("array", ArrayGeometry, **parts["geometry"])
    fading = build("fading", FadingModel, **parts["fading"])
    protocol = build("protocol", ProtocolParams, **parts["protocol"])
    scenario = build("engine", Scenario, geometry=geometry, fading=fading, protocol=protocol,
                     **parts["scenario"])
    grid = build("sweep", DeltaGrid, **parts["grid"])
    extra = parts["extra"]
    cfg = Config(scenario=scenario, grid=grid,
                 k_values=extra.get("k_values", DEFAULT_K_VALUES),
                 b_values=extra.get("b_values", DEFAULT_B_VALUES),
                 sucre_delta=extra.get("sucre_delta"))
    for b in cfg.b_values:
        build("sweep", ArrayGeometry, **{**parts["geometry"], "subarrays": b})
    for k in cfg.k_values:
        if k < 0:
            raise ConfigurationError(f"{source}: [sweep] k_values must be >= 0")
    return cfg


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text, str(path))


def parse_config(path) -> Scenario:
    return load_config(path).scenario


def dumps_config(cfg: Config) -> str:
    sc = cfg.scenario
    objects = {"geometry": sc.geometry, "fading": sc.fading, "scenario": sc,
               "protocol": sc.protocol, "grid": cfg.grid, "extra": cfg}
    doc: dict[str, dict[str, Any]] = {}
    for section, keys in _SCHEMA.items():
        body = {}
        for key, (target, attr, kind) in keys.items():
            value = getattr(objects[target], attr)
            if value is None:
                if kind == "standoff":
                    body[key] = "auto"
                continue
            body[key] = list(value) if kind == "intlist" else value
        doc[section] = body
    return tomli_w.dumps(doc)


def write_config(cfg: Config, path) -> None:
    Path(path).write_text(dumps_config(cfg))


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_series(path, xs, ys) -> None:
    with open(path, "w") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{_fmt(x)} {_fmt(y)}\n")


def ensure_outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "plot").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out
