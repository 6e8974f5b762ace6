"""Time integrators: the SIMEX-RK engine and its TRT partition, plus baselines.

The TRT state is carried as one flat vector (see ``StateLayout``) so that
the stage bookkeeping of the RK engine is plain vector arithmetic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .lo import (FLOOR_EPS, GammaSet, LOConvergenceError, LOStageProblem, _newton_T,
                 closures_from_moments, compute_gamma, floor_mask, lo_stage_solve)
from .physics import (DEFAULT_CONSTANTS, T_FLOOR, AngularQuadrature, HOState, LOState,
                      MaterialModel, Mesh1D, PhysConstants, StateLayout, face_opacity)
from .tableaux import ButcherPair, tableau
from .transport import (PartialFluxRates, apply_streaming, emission_source, ho_moments,
                        implicit_stage_sweep, moment_rates, sweep)


class IterationError(RuntimeError):
    """Outer (HO-LO or source) iteration failed to converge."""

    def __init__(self, msg, trace=()):
        super().__init__(msg)
        self.trace = list(trace)


@dataclass
class StepStats:
    sweeps: int = 0
    lo_linear_solves: int = 0
    lo_newton_iters: int = 0
    outer_holo_iters: int = 0
    wall_time: float = 0.0
    boundary_inflow: float = 0.0   # energy per unit area entering through both faces
    clipped: int = 0

    def add(self, other: "StepStats") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


# ---------------------------------------------------------------------------
# generic SIMEX-RK engine

@dataclass
class StageWorkspace:
    r: list
    y_star: list
    deltas: list
    stages: list


def simex_rk_step(y_n: np.ndarray, dt: float, pair: ButcherPair, system):
    """One SIMEX-RK step of y' = N(y*, y).

    ``system`` provides ``explicit(y_star, dt)`` returning dt * N_E(y_star),
    ``solve(y_star, r, a_jj, dt, delta)`` returning Y with
    Y - a_jj dt N_I(y_star, Y) = r, and ``rhs(y_star, y)`` returning N.
    """
    s = pair.stages
    A, At, b = pair.A_imp, pair.A_exp, pair.b
    r = [np.zeros_like(y_n) for _ in range(s)]
    y_star = [y_n.copy() for _ in range(s)]
    y_new = y_n.copy()
    deltas, stages = [], []
    for j in range(s):
        ajj = A[j, j]
        if ajj != 0.0:
            delta = system.explicit(y_star[j], dt)
            r[j] += y_n + ajj * delta
            Y = system.solve(y_star[j], r[j], ajj, dt, delta)
            delta = delta + (Y - r[j]) / ajj
        else:
            # r already carries the factor dt through the stored deltas
            Y = y_n + r[j]
            delta = dt * system.rhs(y_star[j], Y)
        y_new += b[j] * delta
        for i in range(j + 1, s):
            if At[i, j] != 0.0:
                y_star[i] += At[i, j] * delta
            if A[i, j] != 0.0:
                r[i] += A[i, j] * delta
        deltas.append(delta)
        stages.append(Y)
    return y_new, StageWorkspace(r, y_star, deltas, stages)


class _ScalarPartition:
    """y' = lam_E y* + lam_I y."""

    def __init__(self, lam_E, lam_I):
        self.lam_E = lam_E
        self.lam_I = lam_I

    def explicit(self, y_star, dt):
        return dt * self.lam_E * y_star

    def solve(self, y_star, r, a, dt, delta):
        return r / (1.0 - a * dt * self.lam_I)

    def rhs(self, y_star, y):
        return self.lam_E * y_star + self.lam_I * y


def ode_order_probe(pair: ButcherPair | str, lambda_E=-1.0, lambda_I=-10.0,
                    t_final=1.0, dt_list=(0.004, 0.002, 0.001, 0.0005)):
    """Observed order on the scalar partitioned test problem.

    The default steps keep dt |lambda| well below one so every pair is in
    its asymptotic range. Returns (slope, errors).
    """
    pair = tableau(pair) if isinstance(pair, str) else pair
    lam = lambda_E + lambda_I
    if np.real(lam) > 0:
        raise ValueError("need Re(lambda_E + lambda_I) <= 0")
    system = _ScalarPartition(lambda_E, lambda_I)
    dtype = complex if np.iscomplexobj(lam) else float
    errors = []
    for dt in dt_list:
        n = int(round(t_final / dt))
        y = np.ones(1, dtype=dtype)
        for _ in range(n):
            y, _ = simex_rk_step(y, dt, pair, system)
        errors.append(abs(y[0] - np.exp(lam * n * dt)))
    errors = np.asarray(errors)
    slope = np.polyfit(np.log(dt_list), np.log(errors), 1)[0]
    return float(slope), errors


# ---------------------------------------------------------------------------
# TRT problem context

@dataclass
class TRTContext:
    mesh: Mesh1D
    quad: AngularQuadrature
    material: MaterialModel
    inflow: np.ndarray
    constants: PhysConstants = DEFAULT_CONSTANTS
    bc_mode: str = "half"
    face_mode: str = "max"
    fixup: bool = False
    floor_eps: float = FLOOR_EPS
    tol_lo: float = 1e-10
    max_lo_iter: int = 500
    newton_tol: float = 1e-12
    newton_maxit: int = 50
    emission_per_subcell: bool = True
    threads: int | None = None
    layout: StateLayout = field(init=False)

    def __post_init__(self):
        self.layout = StateLayout(self.quad.n, self.mesh.n_cells)
        self.inflow = np.ascontiguousarray(self.inflow, dtype=float)
        if self.bc_mode not in ("half", "full"):
            raise ValueError(f"unknown bc_mode {self.bc_mode!r}")
        face_opacity(1.0, 1.0, self.face_mode)

    @property
    def t_floor(self) -> float:
        return self.material.t_floor

    def opacities(self, T):
        """Frozen (sigma_t, sigma_a, sigma_face) at subcell temperatures T."""
        Tc = np.maximum(T, self.t_floor).mean(axis=1)
        sig_t, sig_a = self.material.opacities(Tc)
        sig_f = np.empty(sig_t.size + 1)
        sig_f[0], sig_f[-1] = sig_t[0], sig_t[-1]
        if sig_t.size > 1:
            sig_f[1:-1] = face_opacity(sig_t[:-1], sig_t[1:], self.face_mode)
        return sig_t, sig_a, sig_f

    def emission(self, T, sig_a):
        return emission_source(T, self.material, self.constants, sig_a, self.emission_per_subcell)

    def sweep(self, sigma, q):
        return sweep(self.mesh, self.quad, sigma, q, self.inflow, self.fixup, self.threads)

    def gamma(self, I, dIdt_rates: PartialFluxRates, sig_t, sig_f):
        mom = ho_moments(I, self.quad, self.constants, self.inflow)
        g = compute_gamma(mom, dIdt_rates, sig_t, sig_f, self.mesh, self.constants,
                          self.floor_eps)
        return closures_from_moments(g, mom, self.bc_mode, self.constants, self.floor_eps), mom

    def lo_problem(self, r_E, r_Ff, r_Fc, r_T, dt_eff, gamma, sig_t, sig_a, sig_f, tol=None):
        return LOStageProblem(r_E, r_Ff, r_Fc, r_T, dt_eff, gamma, sig_t, sig_a, sig_f,
                              self.material.rho_cv_cells, self.mesh, self.constants,
                              tol=self.tol_lo if tol is None else tol,
                              max_iter=self.max_lo_iter, newton_tol=self.newton_tol,
                              newton_maxit=self.newton_maxit, t_floor=self.t_floor,
                              floor_eps=self.floor_eps, fixup=self.fixup)

    def pack(self, ho: HOState, lo: LOState) -> np.ndarray:
        return self.layout.pack(ho, lo)

    def unpack(self, y):
        return self.layout.unpack(y)


def _rel_change(new, old, floor_eps=FLOOR_EPS):
    scale = np.abs(new) + floor_eps * np.max(np.abs(new)) + 1e-300
    return float(np.max(np.abs(new - old) / scale))


def trt_rhs(ctx: TRTContext, y_star: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Full semi-discrete operator N(y*, y) of the partitioned TRT system.

    Opacities and emission are evaluated at the temperature of ``y_star``;
    everything else at ``y``. Boundary-face fluxes are algebraic and get a
    zero rate.
    """
    L = ctx.layout
    c, a = ctx.constants.c, ctx.constants.a
    sig_t, sig_a, sig_f = ctx.opacities(L.view(y_star, "T"))
    I = L.view(y, "I")
    q = ctx.emission(L.view(y_star, "T"), sig_a)
    NI = q[None] - c * apply_streaming(I, sig_t, ctx.mesh, ctx.quad, ctx.inflow)
    gamma, _ = ctx.gamma(I, moment_rates(ho_moments(NI, ctx.quad, ctx.constants)),
                         sig_t, sig_f)
    E, Ff, Fc, T = (L.view(y, k) for k in ("E", "F_face", "F_center", "T"))
    Ff = Ff.copy()
    Ff[0] = gamma.left[0] - gamma.left[1] * c * E[0, 0]
    Ff[-1] = gamma.right[1] * c * E[-1, 1] - gamma.right[0]
    dx = ctx.mesh.dx
    rho_cv = ctx.material.rho_cv_cells[:, None]
    exch = c * sig_a[:, None] * (E - a * T**4)
    out = np.zeros_like(y)
    L.view(out, "I")[...] = NI
    NE = L.view(out, "E")
    NE[:, 0] = -(2.0 / dx) * (Fc - Ff[:-1])
    NE[:, 1] = -(2.0 / dx) * (Ff[1:] - Fc)
    NE -= exch
    L.view(out, "F_center")[...] = c * (
        -(c / 3.0) * (E[:, 1] - E[:, 0]) / (0.5 * dx) - sig_t * Fc
        + gamma.g_plus_center * c * E[:, 0] - gamma.g_minus_center * c * E[:, 1])
    if dx.size > 1:
        hf = 0.5 * ctx.mesh.dx_faces
        L.view(out, "F_face")[1:-1] = c * (
            -(c / 3.0) * (E[1:, 0] - E[:-1, 1]) / hf - sig_f[1:-1] * Ff[1:-1]
            + gamma.g_plus_face[1:-1] * c * E[:-1, 1] - gamma.g_minus_face[1:-1] * c * E[1:, 0])
    L.view(out, "T")[...] = exch / rho_cv
    return out


# ---------------------------------------------------------------------------
# steppers

class TRTSimexSystem:
    """The TRT partition: emission explicit at T*, one sweep plus one LO solve per stage."""

    def __init__(self, ctx: TRTContext):
        self.ctx = ctx
        self.stats = StepStats()
        self.stage_boundary_flux = []
        self._frozen = None

    def explicit(self, y_star, dt):
        ctx = self.ctx
        T_star = ctx.layout.view(y_star, "T")
        sig_t, sig_a, sig_f = ctx.opacities(T_star)
        self._frozen = (sig_t, sig_a, sig_f)
        delta = np.zeros_like(y_star)
        ctx.layout.view(delta, "I")[...] = dt * ctx.emission(T_star, sig_a)[None]
        return delta

    def solve(self, y_star, r, a, dt, delta):
        ctx = self.ctx
        L = ctx.layout
        sig_t, sig_a, sig_f = self._frozen
        r_I = L.view(r, "I")
        I = implicit_stage_sweep(r_I, a, dt, sig_t, ctx.mesh, ctx.quad, ctx.inflow,
                                 ctx.constants, ctx.fixup)
        self.stats.sweeps += 1
        dIdt = (L.view(delta, "I") + (I - r_I) / a) / dt
        rates = moment_rates(ho_moments(dIdt, ctx.quad, ctx.constants))
        gamma, _ = ctx.gamma(I, rates, sig_t, sig_f)
        r_E, r_Ff, r_Fc, r_T = (L.view(r, k) for k in ("E", "F_face", "F_center", "T"))
        problem = ctx.lo_problem(r_E, r_Ff, r_Fc, r_T, a * dt, gamma, sig_t, sig_a, sig_f)
        guess = LOState(r_E, r_Ff, r_Fc, L.view(y_star, "T"))
        lo, info = lo_stage_solve(problem, guess)
        self.stats.lo_linear_solves += info.iterations
        self.stats.lo_newton_iters += info.newton_iterations
        self.stats.clipped += info.clipped
        self.stage_boundary_flux.append(lo.F_face[0] - lo.F_face[-1])
        Y = np.empty_like(r)
        L.view(Y, "I")[...] = I
        L.view(Y, "E")[...] = lo.E
        L.view(Y, "F_face")[...] = lo.F_face
        L.view(Y, "F_center")[...] = lo.F_center
        L.view(Y, "T")[...] = lo.T
        return Y

    def rhs(self, y_star, y):
        self.stage_boundary_flux.append(np.nan)
        return trt_rhs(self.ctx, y_star, y)


class SimexIntegrator:
    def __init__(self, ctx: TRTContext, pair: ButcherPair | str):
        self.ctx = ctx
        self.pair = tableau(pair) if isinstance(pair, str) else pair
        self.name = self.pair.name
        self.last_workspace = None

    def step(self, y: np.ndarray, dt: float):
        t0 = time.perf_counter()
        system = TRTSimexSystem(self.ctx)
        y_new, ws = simex_rk_step(y, dt, self.pair, system)
        self.last_workspace = ws
        stats = system.stats
        fluxes = np.asarray(system.stage_boundary_flux)
        stats.boundary_inflow = float(dt * np.dot(self.pair.b, fluxes))
        stats.wall_time = time.perf_counter() - t0
        return y_new, stats


class ImplicitHOLO:
    """Backward Euler HOLO: outer HO-LO iteration, inner nonlinear LO solve.

    Opacities are frozen at the start of the step. The gamma time
    derivative uses the backward difference of the latest sweep against I^n.
    """

    name = "implicit_holo"

    def __init__(self, ctx: TRTContext, tol_outer=1e-8, tol_inner=1e-10, max_outer=50):
        self.ctx = ctx
        self.tol_outer = tol_outer
        self.tol_inner = tol_inner
        self.max_outer = max_outer

    def step(self, y: np.ndarray, dt: float):
        t0 = time.perf_counter()
        ctx = self.ctx
        L = ctx.layout
        c = ctx.constants.c
        stats = StepStats()
        I_n = L.view(y, "I")
        E_n, Ff_n, Fc_n, T_n = (L.view(y, k) for k in ("E", "F_face", "F_center", "T"))
        sig_t, sig_a, sig_f = ctx.opacities(T_n)
        mom_n = ho_moments(I_n, ctx.quad, ctx.constants, ctx.inflow)
        tau = c * dt
        sigma_sweep = sig_t + 1.0 / tau
        lo = LOState(E_n, Ff_n, Fc_n, T_n)
        trace = []
        for k in range(1, self.max_outer + 1):
            q = I_n / tau + ctx.emission(lo.T, sig_a)[None] / c
            I = ctx.sweep(sigma_sweep, q)
            stats.sweeps += 1
            mom = ho_moments(I, ctx.quad, ctx.constants, ctx.inflow)
            rates = PartialFluxRates((mom.F_plus - mom_n.F_plus) / dt,
                                     (mom.F_minus - mom_n.F_minus) / dt,
                                     (mom.Fhat_plus - mom_n.Fhat_plus) / dt,
                                     (mom.Fhat_minus - mom_n.Fhat_minus) / dt)
            # the floor mask only grows within a step so the outer map stays smooth
            fresh = floor_mask(mom, ctx.constants, ctx.floor_eps)
            mask = fresh if k == 1 else (mask | fresh)
            gamma = compute_gamma(mom, rates, sig_t, sig_f, ctx.mesh, ctx.constants,
                                  ctx.floor_eps, mask)
            closures_from_moments(gamma, mom, ctx.bc_mode, ctx.constants, ctx.floor_eps)
            problem = ctx.lo_problem(E_n, Ff_n, Fc_n, T_n, dt, gamma, sig_t, sig_a, sig_f,
                                     tol=self.tol_inner)
            new, info = lo_stage_solve(problem, lo)
            stats.lo_linear_solves += info.iterations
            stats.lo_newton_iters += info.newton_iterations
            stats.clipped += info.clipped
            change = max(_rel_change(new.T, lo.T), _rel_change(new.E, lo.E, ctx.floor_eps))
            trace.append(change)
            lo = new
            if change < self.tol_outer:
                break
        else:
            raise IterationError(f"implicit HOLO outer iteration did not converge in "
                                 f"{self.max_outer} iterations", trace)
        stats.outer_holo_iters = k
        stats.boundary_inflow = dt * (lo.F_face[0] - lo.F_face[-1])
        out = np.empty_like(y)
        L.view(out, "I")[...] = I
        L.view(out, "E")[...] = lo.E
        L.view(out, "F_face")[...] = lo.F_face
        L.view(out, "F_center")[...] = lo.F_center
        L.view(out, "T")[...] = lo.T
        stats.wall_time = time.perf_counter() - t0
        return out, stats


@njit(cache=True)
def _newton_T_field(rT, E, tau, coef, a, t_floor, tol, maxit, out):
    total = 0
    ok = True
    for i in range(E.shape[0]):
        for s in range(2):
            T, it, conv = _newton_T(rT[i, s], E[i, s], tau, coef[i], a, t_floor, tol, maxit)
            out[i, s] = T
            total += it
            ok = ok and conv
    return total, ok


class Unaccelerated:
    """Backward Euler source iteration on the emission, no LO system."""

    name = "unaccelerated"

    def __init__(self, ctx: TRTContext, tol=1e-8, max_iters=20000):
        self.ctx = ctx
        self.tol = tol
        self.max_iters = max_iters

    def step(self, y: np.ndarray, dt: float):
        t0 = time.perf_counter()
        ctx = self.ctx
        L = ctx.layout
        c, a = ctx.constants.c, ctx.constants.a
        stats = StepStats()
        I_n = L.view(y, "I")
        T_n = np.ascontiguousarray(L.view(y, "T"))
        sig_t, sig_a, _ = ctx.opacities(T_n)
        coef = np.ascontiguousarray(c * sig_a / ctx.material.rho_cv_cells)
        tau = c * dt
        sigma_sweep = sig_t + 1.0 / tau
        T_k = T_n.copy()
        T_new = np.empty_like(T_n)
        trace = []
        for k in range(1, self.max_iters + 1):
            q = I_n / tau + ctx.emission(T_k, sig_a)[None] / c
            I = ctx.sweep(sigma_sweep, q)
            stats.sweeps += 1
            E_ho = ho_moments(I, ctx.quad, ctx.constants, ctx.inflow).E
            nit, ok = _newton_T_field(T_n, E_ho, dt, coef, a, ctx.t_floor, ctx.newton_tol,
                                      ctx.newton_maxit, T_new)
            stats.lo_newton_iters += nit
            if not ok:
                raise LOConvergenceError("temperature Newton iteration did not converge")
            change = _rel_change(T_new, T_k)
            trace.append(change)
            T_k[...] = T_new
            if change < self.tol:
                break
        else:
            raise IterationError(f"source iteration did not converge in {self.max_iters} "
                                 "iterations", trace[-10:])
        stats.outer_holo_iters = k
        mom = ho_moments(I, ctx.quad, ctx.constants, ctx.inflow)
        out = np.empty_like(y)
        L.view(out, "I")[...] = I
        L.view(out, "E")[...] = mom.E
        L.view(out, "F_face")[...] = mom.F_face
        L.view(out, "F_center")[...] = mom.F_center
        L.view(out, "T")[...] = T_k
        stats.boundary_inflow = dt * (mom.F_face[0] - mom.F_face[-1])
        stats.wall_time = time.perf_counter() - t0
        return out, stats


INTEGRATORS = ("limex_euler", "h_ldirk2_222", "ssp_ldirk2_332", "ssp_ldirk3_332",
               "implicit_holo", "unaccelerated")


def make_integrator(kind: str, ctx: TRTContext, tol_outer=1e-8, tol_inner=1e-10,
                    max_outer=50, unaccel_tol=1e-8, unaccel_max_iters=20000):
    if kind == "implicit_holo":
        return ImplicitHOLO(ctx, tol_outer, tol_inner, max_outer)
    if kind == "unaccelerated":
        return Unaccelerated(ctx, unaccel_tol, unaccel_max_iters)
    return SimexIntegrator(ctx, kind)


# ---------------------------------------------------------------------------
# state-level entry points

def simex_step(state_n, dt, pair, ctx: TRTContext):
    """One SIMEX-RK step on (HOState, LOState)."""
    y, stats = SimexIntegrator(ctx, pair).step(ctx.pack(*state_n), dt)
    return ctx.unpack(y), stats


def implicit_holo_step(state_n, dt, ctx: TRTContext, tol_outer=1e-8, tol_inner=1e-10,
                       max_outer=50):
    y, stats = ImplicitHOLO(ctx, tol_outer, tol_inner, max_outer).step(ctx.pack(*state_n), dt)
    return ctx.unpack(y), stats


def unaccelerated_step(state_n, dt, ctx: TRTContext, tol=1e-8, max_iters=20000):
    y, stats = Unaccelerated(ctx, tol, max_iters).step(ctx.pack(*state_n), dt)
    return ctx.unpack(y), stats
