"""Lumped linear discontinuous S_N transport: sweeps and HO moments.

Intensities are stored as ``I[m, i, side]`` with side 0 = left subcell value
and side 1 = right. Boundary inflow is a length-N array ``inflow`` whose
entry m is the intensity entering along ordinate m: at the left boundary
for mu_m > 0 and at the right boundary for mu_m < 0.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .physics import (DEFAULT_CONSTANTS, AngularQuadrature, MaterialModel, Mesh1D,
                      PhysConstants)


class SweepError(RuntimeError):
    pass


@njit(cache=True, inline="always")
def _solve_cell(mu, h, sig, qin, qout, inc, fixup):
    """2x2 lumped-LD block for one cell. Returns (upwind-side, downwind-side)."""
    nu = abs(mu)
    d = 0.5 * nu + sig * h
    r_in = h * qin + nu * inc
    r_out = h * qout
    det = d * d + 0.25 * nu * nu
    u_in = (d * r_in - 0.5 * nu * r_out) / det
    u_out = (0.5 * nu * r_in + d * r_out) / det
    if fixup and (u_in < 0.0 or u_out < 0.0):
        # zero the negative value and restore the cell balance
        # nu*(u_out - inc) + sig*h*(u_in + u_out) = h*(qin + qout)
        total = h * (qin + qout) + nu * inc
        if u_in < 0.0:
            u_in = 0.0
            u_out = total / (nu + sig * h)
        else:
            u_out = 0.0
            u_in = total / (sig * h) if sig * h > 0.0 else 0.0
        if u_in < 0.0 or u_out < 0.0:
            u_in = 0.0
            u_out = 0.0
    return u_in, u_out


@njit(cache=True)
def _sweep_ordinate(m, mu, dx, sigma, q, inc0, fixup, out):
    M = dx.size
    inc = inc0
    if mu > 0.0:
        for i in range(M):
            h = 0.5 * dx[i]
            uL, uR = _solve_cell(mu, h, sigma[i], q[m, i, 0], q[m, i, 1], inc, fixup)
            out[m, i, 0] = uL
            out[m, i, 1] = uR
            inc = uR
    else:
        for i in range(M - 1, -1, -1):
            h = 0.5 * dx[i]
            uR, uL = _solve_cell(mu, h, sigma[i], q[m, i, 1], q[m, i, 0], inc, fixup)
            out[m, i, 0] = uL
            out[m, i, 1] = uR
            inc = uL


@njit(cache=True)
def _sweep_serial(mus, dx, sigma, q, inflow, fixup, out):
    for m in range(mus.size):
        _sweep_ordinate(m, mus[m], dx, sigma, q, inflow[m], fixup, out)


@njit(cache=True, parallel=True)
def _sweep_parallel(mus, dx, sigma, q, inflow, fixup, out):
    for m in prange(mus.size):
        _sweep_ordinate(m, mus[m], dx, sigma, q, inflow[m], fixup, out)


def sweep_threads() -> int:
    """Ordinate-parallel thread cap from TRT_THREADS (default 1)."""
    try:
        n = int(os.environ.get("TRT_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, min(n, numba.config.NUMBA_NUM_THREADS))


def sweep(mesh: Mesh1D, quad: AngularQuadrature, sigma_eff, q_eff, inflow,
          fixup: bool = False, threads: int | None = None) -> np.ndarray:
    """Invert (mu d/dx + sigma_eff) I = q_eff by upwind marching, one ordinate at a time.

    ``q_eff`` may have shape (N, M, 2) or (M, 2) (isotropic).
    """
    M = mesh.n_cells
    N = quad.n
    sigma = np.ascontiguousarray(sigma_eff, dtype=float)
    if sigma.shape != (M,) or np.any(sigma < 0):
        raise ValueError("sigma_eff must be a nonnegative per-cell array")
    q = np.asarray(q_eff, dtype=float)
    if q.shape == (M, 2):
        q = np.broadcast_to(q, (N, M, 2))
    if q.shape != (N, M, 2):
        raise ValueError(f"source shape {q.shape} incompatible with ({N}, {M}, 2)")
    q = np.ascontiguousarray(q)
    inflow = np.ascontiguousarray(inflow, dtype=float)
    if inflow.shape != (N,):
        raise ValueError("inflow must have one entry per ordinate")
    out = np.empty((N, M, 2))
    nthreads = sweep_threads() if threads is None else threads
    if nthreads > 1:
        numba.set_num_threads(nthreads)
        _sweep_parallel(quad.mu, mesh.dx, sigma, q, inflow, fixup, out)
    else:
        _sweep_serial(quad.mu, mesh.dx, sigma, q, inflow, fixup, out)
    if not np.all(np.isfinite(out)):
        raise SweepError("transport sweep produced nonfinite intensities")
    return out


# ---------------------------------------------------------------------------
# moments

@dataclass
class HOMoments:
    E: np.ndarray           # (M, 2)
    F_plus: np.ndarray      # (M,) cell-interior partial fluxes
    F_minus: np.ndarray
    Fhat_plus: np.ndarray   # (M + 1,) face partial fluxes, upwind face values
    Fhat_minus: np.ndarray

    @property
    def F_center(self) -> np.ndarray:
        return self.F_plus - self.F_minus

    @property
    def F_face(self) -> np.ndarray:
        return self.Fhat_plus - self.Fhat_minus

    # left boundary: outward normal -x
    @property
    def F_in_left(self) -> float:
        return float(self.Fhat_plus[0])

    @property
    def F_out_left(self) -> float:
        return float(self.Fhat_minus[0])

    @property
    def E_left(self) -> float:
        return float(self.E[0, 0])

    @property
    def F_in_right(self) -> float:
        return float(self.Fhat_minus[-1])

    @property
    def F_out_right(self) -> float:
        return float(self.Fhat_plus[-1])

    @property
    def E_right(self) -> float:
        return float(self.E[-1, 1])


@njit(cache=True)
def _moments_kernel(mus, w, I, inflow, inv_c, E, Fp, Fm, Fhp, Fhm):
    N, M = I.shape[0], I.shape[1]
    E[:, :] = 0.0
    Fp[:] = 0.0
    Fm[:] = 0.0
    Fhp[:] = 0.0
    Fhm[:] = 0.0
    for m in range(N):
        mu = mus[m]
        wm = w[m]
        aw = abs(mu) * wm
        for i in range(M):
            E[i, 0] += wm * I[m, i, 0]
            E[i, 1] += wm * I[m, i, 1]
        if mu > 0.0:
            for i in range(M):
                Fp[i] += 0.5 * aw * (I[m, i, 0] + I[m, i, 1])
            Fhp[0] += aw * inflow[m]
            for f in range(1, M + 1):
                Fhp[f] += aw * I[m, f - 1, 1]
        else:
            for i in range(M):
                Fm[i] += 0.5 * aw * (I[m, i, 0] + I[m, i, 1])
            for f in range(M):
                Fhm[f] += aw * I[m, f, 0]
            Fhm[M] += aw * inflow[m]
    for i in range(M):
        E[i, 0] *= inv_c
        E[i, 1] *= inv_c


def ho_moments(I: np.ndarray, quad: AngularQuadrature,
               constants: PhysConstants = DEFAULT_CONSTANTS, inflow=None) -> HOMoments:
    """Energy density and partial fluxes of an intensity field.

    Face partial fluxes use the upwind face value; at domain faces the
    incoming half uses ``inflow`` (zeros when omitted).
    """
    I = np.ascontiguousarray(getattr(I, "I", I), dtype=float)
    N, M, _ = I.shape
    inflow = np.zeros(N) if inflow is None else np.ascontiguousarray(inflow, dtype=float)
    E = np.empty((M, 2))
    Fp, Fm = np.empty(M), np.empty(M)
    Fhp, Fhm = np.empty(M + 1), np.empty(M + 1)
    _moments_kernel(quad.mu, quad.w, I, inflow, 1.0 / constants.c, E, Fp, Fm, Fhp, Fhm)
    return HOMoments(E, Fp, Fm, Fhp, Fhm)


@dataclass
class PartialFluxRates:
    dF_plus: np.ndarray
    dF_minus: np.ndarray
    dFhat_plus: np.ndarray
    dFhat_minus: np.ndarray


def dIdt_moments(delta_I: np.ndarray, dt: float, quad: AngularQuadrature) -> PartialFluxRates:
    """Partial-flux time derivatives from delta_I = dt * dI/dt.

    The boundary inflow is time independent, so its contribution is zero.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    mom = ho_moments(np.asarray(delta_I) / dt, quad)
    return PartialFluxRates(mom.F_plus, mom.F_minus, mom.Fhat_plus, mom.Fhat_minus)


def moment_rates(mom: HOMoments) -> PartialFluxRates:
    return PartialFluxRates(mom.F_plus, mom.F_minus, mom.Fhat_plus, mom.Fhat_minus)


# ---------------------------------------------------------------------------
# emission and the stage solve

def planck_inflow(quad: AngularQuadrature, T_left: float, T_right: float = 0.0,
                  constants: PhysConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Isotropic Planckian inflow a c T^4 / (4 pi); a temperature of 0 means vacuum."""
    iso = lambda T: constants.a * constants.c * T**4 / (4.0 * np.pi)  # noqa: E731
    return np.where(quad.mu > 0, iso(T_left), iso(T_right))


def emission_source(T_star: np.ndarray, material: MaterialModel,
                    constants: PhysConstants = DEFAULT_CONSTANTS,
                    sigma_a: np.ndarray | None = None,
                    per_subcell: bool = True) -> np.ndarray:
    """a c^2 sigma_a T*^4 / (4 pi) per subcell, opacity taken at the cell-average T*.

    With per_subcell False both subcells get the cell mean of T*^4, which keeps
    the cell-integrated emission equal to the per-subcell total.
    """
    T_star = np.asarray(T_star, dtype=float)
    if not np.all(np.isfinite(T_star)):
        raise ValueError("nonfinite stage temperature")
    Tf = np.maximum(T_star, material.t_floor)
    if sigma_a is None:
        sigma_a = material.opacities(Tf.mean(axis=1))[1]
    th = Tf**4
    if not per_subcell:
        th = np.repeat(th.mean(axis=1, keepdims=True), 2, axis=1)
    return (constants.a * constants.c**2 / (4.0 * np.pi)) * sigma_a[:, None] * th


@dataclass
class StageTransportResult:
    I_stage: np.ndarray
    delta_I: np.ndarray


def implicit_stage_sweep(r_I, a_ii, dt, sigma_t, mesh, quad, inflow, constants,
                         fixup=False) -> np.ndarray:
    """Solve I + a_ii dt c (mu d/dx + sigma_t) I = r_I with one sweep."""
    tau = constants.c * a_ii * dt
    return sweep(mesh, quad, sigma_t + 1.0 / tau, r_I / tau, inflow, fixup)


def stage_transport_solve(I_n, r_I, a_ii, dt, T_star, material, mesh, quad, inflow,
                          constants: PhysConstants = DEFAULT_CONSTANTS,
                          fixup: bool = False) -> StageTransportResult:
    """I-block of one implicit SIMEX stage.

    ``r_I`` holds the accumulated contributions of earlier stages. On return
    ``delta_I == dt * N_I(T_star, I_stage)``.
    """
    if not a_ii > 0:
        raise ValueError("implicit stage requires a_ii > 0")
    r_I = np.asarray(r_I, dtype=float)
    if not np.all(np.isfinite(r_I)):
        raise ValueError("nonfinite stage right-hand side")
    sigma_t, sigma_a = material.opacities(np.maximum(T_star, material.t_floor).mean(axis=1))
    delta = np.broadcast_to(dt * emission_source(T_star, material, constants, sigma_a),
                            np.shape(I_n)).copy()
    rhs = r_I + I_n + a_ii * delta
    I_stage = implicit_stage_sweep(rhs, a_ii, dt, sigma_t, mesh, quad, inflow, constants, fixup)
    delta += (I_stage - rhs) / a_ii
    return StageTransportResult(I_stage, delta)


def apply_streaming(I: np.ndarray, sigma: np.ndarray, mesh: Mesh1D,
                    quad: AngularQuadrature, inflow) -> np.ndarray:
    """Discrete lumped-LD (mu d/dx + sigma) I per subcell, consistent with the sweep."""
    I = np.asarray(I, dtype=float)
    mu = quad.mu[:, None]
    h = 0.5 * mesh.dx[None, :]
    IL, IR = I[:, :, 0], I[:, :, 1]
    avg = 0.5 * mu * (IL + IR)
    out = np.empty_like(I)
    pos = quad.mu > 0
    # upwind incoming values
    inc = np.empty_like(IL)
    inc[pos, 0] = inflow[pos]
    inc[pos, 1:] = IR[pos, :-1]
    inc[~pos, -1] = inflow[~pos]
    inc[~pos, :-1] = IL[~pos, 1:]
    sp = sigma[None, :]
    # mu > 0: L row sees the inflow, R row the outflow I^R
    rowL_p = avg - mu * inc + sp * h * IL
    rowR_p = mu * IR - avg + sp * h * IR
    # mu < 0: R row sees the inflow, L row the outflow I^L
    rowL_m = avg - mu * IL + sp * h * IL
    rowR_m = mu * inc - avg + sp * h * IR
    out[:, :, 0] = np.where(pos[:, None], rowL_p, rowL_m) / h
    out[:, :, 1] = np.where(pos[:, None], rowR_p, rowR_m) / h
    return out
