"""Problem configuration: a flat JSON schema, validation and named presets."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .integrators import INTEGRATORS

QUADRATURES = ("gauss_legendre", "double_gauss")
BC_MODES = ("half", "full")
FACE_MODES = ("max", "min", "harmonic")
LAYER_KEYS = ("x_end", "opacity_coef", "opacity_power", "rho_cv")


class ConfigError(ValueError):
    """Invalid or unreadable problem configuration."""


@dataclass
class Layer:
    """Material occupying [previous x_end, x_end) with sigma = coef / T**power."""

    x_end: float
    opacity_coef: float
    opacity_power: float
    rho_cv: float


@dataclass
class ProblemConfig:
    dt: float
    name: str = "custom"
    n_cells: int = 1000
    length: float = 0.25
    n_angles: int = 8
    quadrature: str = "gauss_legendre"
    layers: list = field(default_factory=lambda: [Layer(0.25, 1e12, 3.0, 3e12)])
    T0: float = 0.025
    T_left: float = 1000.0
    T_right: float = 0.0
    t_final: float = 10.0
    integrator: str = "limex_euler"
    bc_mode: str = "half"
    face_opacity: str = "max"
    fixup: bool = True
    floor_eps: float = 1e-12
    t_floor: float = 1e-4
    emission_per_subcell: bool = True
    tol_lo: float = 1e-10
    max_lo_iter: int = 500
    newton_tol: float = 1e-12
    newton_maxit: int = 50
    tol_outer: float = 1e-8
    tol_inner: float = 1e-10
    max_outer: int = 50
    unaccel_tol: float = 1e-8
    unaccel_max_iters: int = 20000
    snapshot_times: list = field(default_factory=list)
    tracers: list = field(default_factory=list)
    out_dir: str = "out"
    deterministic: bool = False

    def __post_init__(self):
        self.layers = [lay if isinstance(lay, Layer) else _layer(lay) for lay in self.layers]
        self.validate()

    def validate(self) -> None:
        pos = ("dt", "length", "t_final", "floor_eps", "t_floor", "tol_lo", "newton_tol",
               "tol_outer", "tol_inner", "unaccel_tol")
        for key in pos:
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{key} must be a positive number, got {v!r}")
        for key in ("n_cells", "n_angles", "max_lo_iter", "newton_maxit", "max_outer",
                    "unaccel_max_iters"):
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{key} must be a positive integer, got {v!r}")
        if self.n_angles % 2:
            raise ConfigError(f"n_angles must be even, got {self.n_angles}")
        if self.dt > self.t_final:
            raise ConfigError(f"dt ({self.dt}) exceeds t_final ({self.t_final})")
        if not self.T0 >= self.t_floor:
            raise ConfigError(f"T0 must be at least t_floor ({self.t_floor}), got {self.T0!r}")
        for key in ("T_left", "T_right"):
            v = getattr(self, key)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"{key} must be a nonnegative number (0 is vacuum), got {v!r}")
        for key, allowed in (("integrator", INTEGRATORS), ("quadrature", QUADRATURES),
                             ("bc_mode", BC_MODES), ("face_opacity", FACE_MODES)):
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {', '.join(allowed)}, "
                                  f"got {getattr(self, key)!r}")
        if not self.layers:
            raise ConfigError("layers must not be empty")
        prev = 0.0
        for k, lay in enumerate(self.layers):
            if not lay.x_end > prev:
                raise ConfigError(f"layers[{k}].x_end must increase")
            if not (lay.opacity_coef > 0 and lay.rho_cv > 0 and lay.opacity_power >= 0):
                raise ConfigError(f"layers[{k}] needs positive opacity_coef and rho_cv")
            prev = lay.x_end
        if not math.isclose(prev, self.length, rel_tol=1e-12):
            raise ConfigError(f"last layer must end at length ({self.length}), got {prev}")
        for t in self.snapshot_times:
            if not 0 < t <= self.t_final * (1 + 1e-12):
                raise ConfigError(f"snapshot_times entry {t!r} outside (0, t_final]")
        for x in self.tracers:
            if not 0 <= x <= self.length:
                raise ConfigError(f"tracers entry {x!r} outside the domain")

    def replace(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _layer(obj) -> Layer:
    if not isinstance(obj, dict):
        raise ConfigError(f"layer entries must be objects, got {obj!r}")
    unknown = set(obj) - set(LAYER_KEYS)
    if unknown:
        raise ConfigError(f"unknown layer key {sorted(unknown)[0]!r}")
    missing = [k for k in LAYER_KEYS if k not in obj]
    if missing:
        raise ConfigError(f"layer is missing {missing[0]!r}")
    return Layer(**{k: float(obj[k]) for k in LAYER_KEYS})


_FIELDS = {f.name for f in dataclasses.fields(ProblemConfig)}
_INT_FIELDS = {"n_cells", "n_angles", "max_lo_iter", "newton_maxit", "max_outer",
               "unaccel_max_iters"}


def config_from_dict(data: dict) -> ProblemConfig:
    """Build a config from a mapping; an optional "preset" key supplies defaults."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    data = dict(data)
    base = {}
    if "preset" in data:
        base = preset(data.pop("preset")).to_dict()
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown configuration key {sorted(unknown)[0]!r}")
    merged = {**base, **data}
    if "dt" not in merged:
        raise ConfigError("missing required key 'dt'")
    for key in _INT_FIELDS & set(merged):
        v = merged[key]
        if isinstance(v, float) and v.is_integer():
            merged[key] = int(v)
    try:
        return ProblemConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)


def preset(name: str) -> ProblemConfig:
    if name == "marshak":
        return ProblemConfig(
            name="marshak", dt=8e-3, n_cells=1000, length=0.25, n_angles=8,
            layers=[Layer(0.25, 1e12, 3.0, 3e12)], T0=0.025, T_left=1000.0, T_right=0.0,
            t_final=10.0, bc_mode="half", face_opacity="max", fixup=True,
            emission_per_subcell=False, snapshot_times=[1.0, 5.0, 10.0], tracers=[0.0, 0.02, 0.05])
    if name == "two_material_surrogate":
        return ProblemConfig(
            name="two_material_surrogate", dt=1e-2, n_cells=200, length=1.0, n_angles=8,
            layers=[Layer(0.4, 0.2, 0.0, 1e12), Layer(0.6, 2000.0, 0.0, 1e12),
                    Layer(1.0, 0.2, 0.0, 1e12)],
            T0=50.0, T_left=500.0, T_right=0.0, t_final=2.0, bc_mode="half",
            face_opacity="max", fixup=True, snapshot_times=[1.0, 2.0],
            tracers=[0.2, 0.5, 0.8])
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


PRESETS = {
    "marshak": "1-D Marshak wave, sigma = 1e12/T^3, 1 keV drive, 1000 cells, S8, 10 ns",
    "two_material_surrogate": "thin/thick/thin slab (sigma 0.2 / 2000 / 0.2), 500 eV drive",
}
