"""Physical constants, angular quadrature, mesh, materials and state containers.

Units are cm, ns, eV and erg throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import constants as _sc

# speed of light [cm/ns]
C_LIGHT = _sc.c * 1e2 * 1e-9
# Stefan-Boltzmann constant converted to erg / (ns cm^2 eV^4)
_SIGMA_SB = _sc.Stefan_Boltzmann * 1e3 * 1e-9 * (_sc.e / _sc.k) ** 4
# radiation constant [erg / (cm^3 eV^4)], ~137.2
A_RAD = 4.0 * _SIGMA_SB / C_LIGHT

T_FLOOR = 1e-4


@dataclass(frozen=True)
class PhysConstants:
    c: float = C_LIGHT
    a: float = A_RAD

    def __post_init__(self):
        if not (self.c > 0 and self.a > 0):
            raise ValueError("physical constants must be positive")


DEFAULT_CONSTANTS = PhysConstants()


@dataclass(frozen=True)
class AngularQuadrature:
    """Discrete ordinates for slab geometry; weights sum to 4*pi."""

    mu: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if mu.shape != w.shape or mu.ndim != 1 or mu.size % 2:
            raise ValueError("ordinates and weights must be 1-D arrays of equal even length")
        if np.any(mu == 0.0) or np.any(np.diff(mu) <= 0) or np.any(w <= 0):
            raise ValueError("ordinates must be sorted, nonzero, with positive weights")
        mu.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def positive(self) -> np.ndarray:
        return self.mu > 0


def build_quadrature(n: int, rule: str = "gauss_legendre") -> AngularQuadrature:
    """S_N ordinates on [-1, 1] with weights scaled by 2*pi.

    ``rule="double_gauss"`` places an N/2-point Gauss rule on each half range,
    which integrates half-range moments such as partial fluxes exactly.
    """
    if isinstance(n, bool) or int(n) != n or n < 2 or n % 2:
        raise ValueError(f"quadrature order must be an even integer >= 2, got {n!r}")
    n = int(n)
    if rule == "gauss_legendre":
        mu, w = np.polynomial.legendre.leggauss(n)
    elif rule == "double_gauss":
        x, v = np.polynomial.legendre.leggauss(n // 2)
        half = 0.5 * (x + 1.0)
        mu = np.concatenate([-half[::-1], half])
        w = np.concatenate([0.5 * v[::-1], 0.5 * v])
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return AngularQuadrature(mu, 2.0 * np.pi * w)


@dataclass(frozen=True)
class Mesh1D:
    dx: np.ndarray
    x_faces: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dx = np.asarray(self.dx, dtype=float)
        if dx.ndim != 1 or dx.size == 0 or np.any(~np.isfinite(dx)) or np.any(dx <= 0):
            raise ValueError("cell widths must be a nonempty array of positive numbers")
        dx.setflags(write=False)
        faces = np.concatenate([[0.0], np.cumsum(dx)])
        faces.setflags(write=False)
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "x_faces", faces)

    @classmethod
    def uniform(cls, n_cells: int, length: float) -> "Mesh1D":
        return cls(np.full(int(n_cells), float(length) / int(n_cells)))

    @property
    def n_cells(self) -> int:
        return self.dx.size

    @property
    def x_centers(self) -> np.ndarray:
        return 0.5 * (self.x_faces[1:] + self.x_faces[:-1])

    @property
    def dx_faces(self) -> np.ndarray:
        """Widths associated with interior faces, (dx[i-1] + dx[i]) / 2."""
        return 0.5 * (self.dx[1:] + self.dx[:-1])

    def cell_of(self, x: float) -> int:
        i = int(np.searchsorted(self.x_faces, x, side="right")) - 1
        return min(max(i, 0), self.n_cells - 1)


# ---------------------------------------------------------------------------
# materials

@dataclass(frozen=True)
class PowerLawOpacity:
    """sigma(T) = coef / T**power."""

    coef: float
    power: float

    def __call__(self, T):
        return self.coef / np.power(T, self.power)


@dataclass(frozen=True)
class ConstantOpacity:
    value: float

    def __call__(self, T):
        return np.full_like(np.asarray(T, dtype=float), self.value)


@dataclass(frozen=True)
class MaterialModel:
    """Per-cell material assignment.

    ``laws[k]`` and ``rho_cv[k]`` describe material k; ``cell_material[i]``
    selects the material of cell i. No scattering, so sigma_t == sigma_a.
    """

    laws: tuple
    rho_cv: tuple
    cell_material: np.ndarray
    t_floor: float = T_FLOOR

    def __post_init__(self):
        if len(self.laws) != len(self.rho_cv) or not self.laws:
            raise ValueError("need one heat capacity per opacity law")
        if any(not (cv > 0) for cv in self.rho_cv):
            raise ValueError("rho_cv must be positive")
        idx = np.asarray(self.cell_material, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= len(self.laws):
            raise ValueError("cell material index out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "cell_material", idx)
        object.__setattr__(self, "_cv", np.asarray(self.rho_cv, dtype=float)[idx])

    @classmethod
    def uniform(cls, law, rho_cv: float, n_cells: int, t_floor: float = T_FLOOR):
        return cls((law,), (float(rho_cv),), np.zeros(n_cells, dtype=np.int64), t_floor)

    @property
    def n_cells(self) -> int:
        return self.cell_material.size

    @property
    def rho_cv_cells(self) -> np.ndarray:
        return self._cv

    def sigma_cells(self, T_cell) -> np.ndarray:
        """Opacity per cell from a per-cell temperature array."""
        T = np.maximum(np.asarray(T_cell, dtype=float), self.t_floor)
        if len(self.laws) == 1:
            return np.asarray(self.laws[0](T), dtype=float)
        out = np.empty_like(T)
        for k, law in enumerate(self.laws):
            sel = self.cell_material == k
            out[sel] = law(T[sel])
        return out

    def opacities(self, T_cell) -> tuple[np.ndarray, np.ndarray]:
        """(sigma_t, sigma_a) per cell."""
        s = self.sigma_cells(T_cell)
        return s, s


def opacity(material: MaterialModel, T, cell: int = 0):
    """Opacity of the material in ``cell`` at temperature T (floored)."""
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T)):
        raise ValueError("temperature must be finite")
    law = material.laws[material.cell_material[cell]]
    val = law(np.maximum(T, material.t_floor))
    return float(val) if np.ndim(val) == 0 else np.asarray(val)


def planck_theta(T, constants: PhysConstants = DEFAULT_CONSTANTS):
    """theta = a T^4."""
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T)):
        raise ValueError("temperature must be finite")
    if np.any(T < 0):
        raise ValueError("temperature must be nonnegative")
    out = constants.a * T**4
    return float(out) if out.ndim == 0 else out


def face_opacity(sigma_left, sigma_right, mode: str = "max"):
    """Interface opacity between neighbouring cells."""
    sl = np.asarray(sigma_left, dtype=float)
    sr = np.asarray(sigma_right, dtype=float)
    if np.any(sl <= 0) or np.any(sr <= 0):
        raise ValueError("face opacity requires positive cell opacities")
    if mode == "max":
        out = np.maximum(sl, sr)
    elif mode == "min":
        out = np.minimum(sl, sr)
    elif mode == "harmonic":
        out = 2.0 * sl * sr / (sl + sr)
    else:
        raise ValueError(f"unknown face opacity mode {mode!r}")
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# state containers

@dataclass
class HOState:
    """Angular intensity I[m, i, side], side 0 = L, 1 = R."""

    I: np.ndarray

    def copy(self) -> "HOState":
        return HOState(self.I.copy())


@dataclass
class LOState:
    E: np.ndarray         # (M, 2)
    F_face: np.ndarray    # (M + 1,)
    F_center: np.ndarray  # (M,)
    T: np.ndarray         # (M, 2)

    def copy(self) -> "LOState":
        return LOState(self.E.copy(), self.F_face.copy(), self.F_center.copy(), self.T.copy())


class StateLayout:
    """Packs (HOState, LOState) into one flat vector for the RK engine."""

    def __init__(self, n_angles: int, n_cells: int):
        self.n_angles = n_angles
        self.n_cells = n_cells
        M = n_cells
        sizes = [("I", n_angles * M * 2), ("E", 2 * M), ("F_face", M + 1),
                 ("F_center", M), ("T", 2 * M)]
        self.slices = {}
        start = 0
        for name, size in sizes:
            self.slices[name] = slice(start, start + size)
            start += size
        self.size = start
        self.shapes = {"I": (n_angles, M, 2), "E": (M, 2), "F_face": (M + 1,),
                       "F_center": (M,), "T": (M, 2)}

    def view(self, y: np.ndarray, name: str) -> np.ndarray:
        return y[self.slices[name]].reshape(self.shapes[name])

    def pack(self, ho: HOState, lo: LOState) -> np.ndarray:
        y = np.empty(self.size)
        for name, arr in (("I", ho.I), ("E", lo.E), ("F_face", lo.F_face),
                          ("F_center", lo.F_center), ("T", lo.T)):
            self.view(y, name)[...] = arr
        return y

    def unpack(self, y: np.ndarray) -> tuple[HOState, LOState]:
        v = lambda name: self.view(y, name).copy()  # noqa: E731
        return HOState(v("I")), LOState(v("E"), v("F_face"), v("F_center"), v("T"))


def equilibrium_state(mesh: Mesh1D, quad: AngularQuadrature, T0: float,
                      constants: PhysConstants = DEFAULT_CONSTANTS,
                      t_floor: float = T_FLOOR) -> tuple[HOState, LOState]:
    if not np.isfinite(T0) or T0 < t_floor:
        raise ValueError(f"initial temperature must be >= {t_floor}")
    M = mesh.n_cells
    theta = constants.a * T0**4
    I = np.full((quad.n, M, 2), constants.c * theta / (4.0 * np.pi))
    lo = LOState(np.full((M, 2), theta), np.zeros(M + 1), np.zeros(M), np.full((M, 2), float(T0)))
    return HOState(I), lo


def total_energy(lo: LOState, mesh: Mesh1D, material: MaterialModel) -> float:
    """Sum over subcells of dx/2 * (E + rho_cv T)."""
    half = 0.5 * mesh.dx[:, None]
    return float(np.sum(half * (lo.E + material.rho_cv_cells[:, None] * lo.T)))
