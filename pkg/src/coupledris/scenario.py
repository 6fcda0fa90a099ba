"""Scenario files: line-oriented ``section.key = value`` text.

Lengths in the geometry section are in wavelengths unless the key says
otherwise.  A value may carry a trailing unit token; it must then match the
unit of the field (``signal.pt_dbm = 21 dBm`` is accepted, ``= 21 W`` is
not).  ``#`` starts a comment.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ScenarioError


def dbm_to_watts(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


@dataclass(frozen=True)
class Geometry:
    wavelength_m: float = 0.1
    tx_count: int = 4
    tx_center: tuple[float, float] = (0.0, 0.0)
    tx_spacing: float = 0.5
    rx_count: int = 1
    rx_center: tuple[float, float] = (9.6, 14.4)
    rx_spacing: float = 0.5
    ris_count: int = 32
    ris_center: tuple[float, float] = (0.0, 24.0)
    ris_spacing: float = 0.5
    wire_length: float = 0.5
    wire_radius: float = 0.002
    direct_link: bool = False
    bundle: str = ""


@dataclass(frozen=True)
class Loads:
    r0_ohm: float = 0.2
    x_lb_ohm: float = -302.50
    x_ub_ohm: float = -19.66
    zg_ohm: complex = 50 + 0j
    zl_ohm: complex = 50 + 0j
    zus_ohm: complex = 0j


@dataclass(frozen=True)
class Signal:
    pt_dbm: float = 21.0
    sigma2_dbm: float = -80.0

    @property
    def pt_w(self) -> float:
        return dbm_to_watts(self.pt_dbm)

    @property
    def sigma2_w(self) -> float:
        return dbm_to_watts(self.sigma2_dbm)


@dataclass(frozen=True)
class Scatterers:
    clusters: int = 4
    per_cluster: int = 50
    region_x: tuple[float, float] = (-10.0, 20.0)
    region_y: tuple[float, float] = (2.0, 22.0)
    region_z: tuple[float, float] = (0.0, 0.0)
    cluster_size: float = 2.0
    min_separation: float = 0.02
    seed: int = 0


@dataclass(frozen=True)
class Run:
    epsilon: float = 1e-4
    max_outer: int = 100
    realizations: int = 100
    solver: str = "closed_form"
    grid_points: int = 10_001
    coupling_mode: str = "MCA"
    seed: int = 0
    fast: bool = False
    workers: int = 1
    max_ris: int = 512
    timing: bool = False


@dataclass(frozen=True)
class Scenario:
    geometry: Geometry = field(default_factory=Geometry)
    loads: Loads = field(default_factory=Loads)
    signal: Signal = field(default_factory=Signal)
    scatterers: Scatterers = field(default_factory=Scatterers)
    run: Run = field(default_factory=Run)
    base_dir: str = "."

    def with_(self, section: str, **values) -> "Scenario":
        return replace(self, **{section: replace(getattr(self, section), **values)})


# unit token accepted after the value of each key (None: dimensionless)
_UNITS = {
    "geometry.wavelength_m": "m",
    "loads.r0_ohm": "ohm", "loads.x_lb_ohm": "ohm", "loads.x_ub_ohm": "ohm",
    "loads.zg_ohm": "ohm", "loads.zl_ohm": "ohm", "loads.zus_ohm": "ohm",
    "signal.pt_dbm": "dbm", "signal.sigma2_dbm": "dbm",
}
_LAMBDA_KEYS = {
    "tx_center", "tx_spacing", "rx_center", "rx_spacing", "ris_center", "ris_spacing",
    "wire_length", "wire_radius", "region_x", "region_y", "region_z", "cluster_size",
    "min_separation",
}
_CHOICES = {"run.solver": ("closed_form", "grid_baseline"), "run.coupling_mode": ("MCA", "MCU")}
_POSITIVE_COUNTS = {
    "geometry.tx_count", "geometry.rx_count", "geometry.ris_count", "run.max_outer",
    "run.realizations", "run.grid_points", "run.workers", "run.max_ris",
}
_SECTION_TYPES = {"geometry": Geometry, "loads": Loads, "signal": Signal,
                  "scatterers": Scatterers, "run": Run}


def _convert(raw: str, default, key: str):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        val = int(raw)
        if key in _POSITIVE_COUNTS and val < 1:
            raise ValueError("must be a positive integer")
        if val < 0:
            raise ValueError("must be non-negative")
        return val
    if isinstance(default, float):
        val = float(raw)
        if not math.isfinite(val):
            raise ValueError("must be finite")
        return val
    if isinstance(default, complex):
        val = complex(raw.replace(" ", "").replace("i", "j"))
        if not (math.isfinite(val.real) and math.isfinite(val.imag)):
            raise ValueError("must be finite")
        return val
    if isinstance(default, tuple):
        parts = [p for p in raw.replace(",", " ").split()]
        if len(parts) != len(default):
            raise ValueError(f"expected {len(default)} comma-separated numbers")
        vals = tuple(float(p) for p in parts)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("must be finite")
        return vals
    if key in _CHOICES:
        for choice in _CHOICES[key]:
            if raw.lower() == choice.lower():
                return choice
        raise ValueError(f"expected one of {_CHOICES[key]}")
    return raw


def _split_unit(raw: str, key: str):
    unit = _UNITS.get(key)
    parts = raw.split()
    if key in _CHOICES or key == "geometry.bundle":
        return raw, None
    if len(parts) >= 2 and parts[-1].isalpha():
        token = parts[-1].lower()
        expected = unit or ("lambda" if key.split(".")[1] in _LAMBDA_KEYS else None)
        if token != expected and not (expected == "ohm" and token in ("ohms", "Ω")):
            raise ScenarioError(
                f"unit violation for {key}: got {parts[-1]!r}, expected {expected or 'no unit'}"
            )
        return " ".join(parts[:-1]), token
    return raw, None


def parse_scenario(text, base_dir: str | Path = ".") -> Scenario:
    """Parse scenario text (str or bytes); missing keys take their defaults."""
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    values = {name: {} for name in _SECTION_TYPES}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ScenarioError(f"expected 'section.key = value', got {body!r}", line=lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key.count(".") != 1:
            raise ScenarioError(f"malformed key {key!r}", line=lineno)
        section, name = key.split(".")
        if section not in _SECTION_TYPES:
            raise ScenarioError(f"unknown section {section!r}", line=lineno)
        cls = _SECTION_TYPES[section]
        defaults = cls()
        if name not in {f.name for f in fields(cls)}:
            raise ScenarioError(f"unknown key {key!r}", line=lineno)
        if not raw:
            raise ScenarioError(f"missing value for {key}", line=lineno)
        try:
            raw, _ = _split_unit(raw, key)
            values[section][name] = _convert(raw, getattr(defaults, name), key)
        except ScenarioError as exc:
            raise ScenarioError(str(exc), line=lineno) from None
        except ValueError as exc:
            raise ScenarioError(f"bad value for {key}: {exc}", line=lineno) from None
    sections = {name: _SECTION_TYPES[name](**vals) for name, vals in values.items()}
    scenario = Scenario(**sections, base_dir=str(base_dir))
    validate(scenario)
    return scenario


def validate(s: Scenario) -> None:
    g, ld, run = s.geometry, s.loads, s.run
    if not g.wavelength_m > 0:
        raise ScenarioError("geometry.wavelength_m must be positive")
    for name in ("tx_spacing", "rx_spacing", "ris_spacing", "wire_length", "wire_radius"):
        if not getattr(g, name) > 0:
            raise ScenarioError(f"geometry.{name} must be positive")
    if g.ris_spacing > 0.5:
        warnings.warn("geometry.ris_spacing exceeds half a wavelength", stacklevel=3)
    if not ld.x_lb_ohm < ld.x_ub_ohm:
        raise ScenarioError("loads.x_lb_ohm must be below loads.x_ub_ohm")
    if ld.r0_ohm < 0:
        raise ScenarioError("loads.r0_ohm must be non-negative")
    if ld.zl_ohm == 0:
        raise ScenarioError("loads.zl_ohm must be nonzero")
    if g.ris_count > run.max_ris:
        raise ScenarioError(f"geometry.ris_count {g.ris_count} exceeds run.max_ris {run.max_ris}")
    sc = s.scatterers
    for name in ("region_x", "region_y", "region_z"):
        lo, hi = getattr(sc, name)
        if hi < lo:
            raise ScenarioError(f"scatterers.{name} is empty")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(data, base_dir=path.parent)


def dump_scenario(s: Scenario) -> str:
    """Canonical text form (all keys, no comments)."""
    lines = []
    for section in _SECTION_TYPES:
        obj = getattr(s, section)
        for f in fields(obj):
            val = getattr(obj, f.name)
            if val == "":
                continue
            if isinstance(val, tuple):
                val = ", ".join(repr(v) for v in val)
            elif isinstance(val, bool):
                val = str(val).lower()
            elif isinstance(val, complex):
                val = f"{val.real!r}{val.imag:+}j"
            lines.append(f"{section}.{f.name} = {val}")
    return "\n".join(lines) + "\n"
