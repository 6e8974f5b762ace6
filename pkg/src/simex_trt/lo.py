"""Staggered subcell low-order moment system.

Unknown layout per cell i: E^L_i, E^R_i and T^L_i, T^R_i on the two
subcells, F_i at the cell centre and F_{i-1/2} on faces f = 0..M.
The boundary face fluxes are closed through (gamma0, gamma1) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .physics import DEFAULT_CONSTANTS, T_FLOOR, LOState, Mesh1D, PhysConstants
from .transport import HOMoments, PartialFluxRates

FLOOR_EPS = 1e-12


class LOConvergenceError(RuntimeError):
    def __init__(self, msg, residual=np.nan, iterations=0):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


@dataclass
class GammaSet:
    g_plus_center: np.ndarray   # (M,)
    g_minus_center: np.ndarray
    g_plus_face: np.ndarray     # (M + 1,), domain faces unused
    g_minus_face: np.ndarray
    left: tuple[float, float] = (0.0, 0.0)    # (gamma0, gamma1)
    right: tuple[float, float] = (0.0, 0.0)


def _safe_ratio(num, den, ok):
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=ok & (den > 0))
    return out


def floor_mask(moments: HOMoments, constants: PhysConstants = DEFAULT_CONSTANTS,
               floor_eps: float = FLOOR_EPS) -> np.ndarray:
    """Subcells whose c*E_HO is at least ``floor_eps`` times the mesh maximum."""
    if not floor_eps > 0:
        raise ValueError("floor_eps must be positive")
    cE = constants.c * moments.E
    top = cE.max() if cE.size else 0.0
    if not top > 0:
        return np.zeros(cE.shape, dtype=bool)
    return cE >= floor_eps * top


def compute_gamma(moments: HOMoments, ddt: PartialFluxRates, sigma_cells, sigma_faces,
                  mesh: Mesh1D, constants: PhysConstants = DEFAULT_CONSTANTS,
                  floor_eps: float = FLOOR_EPS, mask: np.ndarray | None = None) -> GammaSet:
    """Consistency terms from HO moments; boundary pairs are left at zero.

    ``sigma_faces`` has M + 1 entries, only the interior ones are read.
    Each gamma is normalised by c*E_HO on one subcell; where that subcell is
    outside ``mask`` the gamma is set to zero. The default mask is
    ``floor_mask``. Iterative callers may pass a mask that only grows, which
    keeps a subcell sitting at the threshold from toggling.
    """
    c = constants.c
    E = moments.E
    cE = c * E
    ok = floor_mask(moments, constants, floor_eps) if mask is None else np.asarray(mask, bool)
    sig = np.asarray(sigma_cells, dtype=float)
    grad_c = (c / 3.0) * (E[:, 1] - E[:, 0]) / mesh.dx
    gpc = _safe_ratio(ddt.dF_plus / c + grad_c + sig * moments.F_plus, cE[:, 0], ok[:, 0])
    gmc = _safe_ratio(ddt.dF_minus / c - grad_c + sig * moments.F_minus, cE[:, 1], ok[:, 1])

    M = mesh.n_cells
    gpf = np.zeros(M + 1)
    gmf = np.zeros(M + 1)
    if M > 1:
        sf = np.asarray(sigma_faces, dtype=float)[1:M]
        grad_f = (c / 3.0) * (E[1:, 0] - E[:-1, 1]) / mesh.dx_faces
        gpf[1:M] = _safe_ratio(ddt.dFhat_plus[1:M] / c + grad_f + sf * moments.Fhat_plus[1:M],
                               cE[:-1, 1], ok[:-1, 1])
        gmf[1:M] = _safe_ratio(ddt.dFhat_minus[1:M] / c - grad_f + sf * moments.Fhat_minus[1:M],
                               cE[1:, 0], ok[1:, 0])
    return GammaSet(gpc, gmc, gpf, gmf)


def boundary_closure(F_in: float, F_out: float, E_B: float, mode: str = "half",
                     constants: PhysConstants = DEFAULT_CONSTANTS,
                     floor_eps: float = FLOOR_EPS, cE_max: float | None = None):
    """(gamma0, gamma1) such that the outward LO flux is gamma1 c E - gamma0."""
    if F_in < 0 or F_out < 0:
        raise ValueError("partial fluxes must be nonnegative")
    cE = constants.c * E_B
    thresh = floor_eps * cE_max if cE_max else 0.0
    if mode == "half":
        g0, num = F_in, F_out
    elif mode == "full":
        g0, num = 2.0 * F_in, F_out + F_in
    else:
        raise ValueError(f"unknown boundary closure mode {mode!r}")
    g1 = num / cE if (cE > thresh and cE > 0) else 0.0
    return float(g0), float(g1)


def closures_from_moments(gamma: GammaSet, moments: HOMoments, mode: str,
                          constants: PhysConstants = DEFAULT_CONSTANTS,
                          floor_eps: float = FLOOR_EPS) -> GammaSet:
    cE_max = constants.c * moments.E.max()
    gamma.left = boundary_closure(max(moments.F_in_left, 0.0), max(moments.F_out_left, 0.0),
                                  moments.E_left, mode, constants, floor_eps, cE_max)
    gamma.right = boundary_closure(max(moments.F_in_right, 0.0), max(moments.F_out_right, 0.0),
                                   moments.E_right, mode, constants, floor_eps, cE_max)
    return gamma


# ---------------------------------------------------------------------------
# numerical kernels

@njit(cache=True)
def tridiag_solve(dl, d, du, b):
    """Gaussian elimination with partial pivoting for a tridiagonal system.

    Overwrites its arguments; the solution is returned in ``b``. Returns
    False when a zero pivot is met.
    """
    n = d.size
    if n == 1:
        if d[0] == 0.0:
            return False
        b[0] /= d[0]
        return True
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if d[i] == 0.0:
                return False
            fact = dl[i] / d[i]
            d[i + 1] -= fact * du[i]
            b[i + 1] -= fact * b[i]
            dl[i] = 0.0
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            temp = d[i + 1]
            d[i + 1] = du[i] - fact * temp
            if i < n - 2:
                dl[i] = du[i + 1]
                du[i + 1] = -fact * dl[i]
            else:
                dl[i] = 0.0
            du[i] = temp
            temp = b[i]
            b[i] = b[i + 1]
            b[i + 1] = temp - fact * b[i + 1]
    if d[n - 1] == 0.0:
        return False
    b[n - 1] /= d[n - 1]
    b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        b[i] = (b[i] - du[i] * b[i + 1] - dl[i] * b[i + 2]) / d[i]
    return True


@njit(cache=True)
def _newton_T(rT, E, tau, coef, a, t_floor, tol, maxit):
    """Root of (T - rT)/tau - coef (E - a T^4) on T >= t_floor.

    Newton's method safeguarded by the bracket [min(rT, Tr), max(rT, Tr)],
    Tr = (E/a)^(1/4), which always contains the root of this monotone f.
    The bracket top is tightened with ((rT/tau + coef E)/(coef a))^(1/4),
    where f = T/tau >= 0, and iteration starts there: f is convex, so
    Newton from above decreases monotonically onto the root.
    Returns (T, iterations, converged).
    """
    if coef == 0.0:
        return max(rT, t_floor), 0, True
    Tr = (max(E, 0.0) / a) ** 0.25
    lo = max(min(rT, Tr), t_floor)
    hi = max(max(rT, Tr), t_floor)
    flo = (lo - rT) / tau - coef * (E - a * lo**4)
    if flo >= 0.0:
        return lo, 0, True
    top = max(rT / tau + coef * E, 0.0) / (coef * a)
    hi = max(min(hi, top**0.25), lo)
    T = hi
    for it in range(1, maxit + 1):
        f = (T - rT) / tau - coef * (E - a * T**4)
        if f > 0.0:
            hi = T
        else:
            lo = T
        fp = 1.0 / tau + 4.0 * coef * a * T**3
        Tn = T - f / fp
        if not (lo < Tn < hi):
            Tn = 0.5 * (lo + hi)
        if abs(Tn - T) <= tol * Tn or hi - lo <= tol * hi:
            return Tn, it, True
        T = Tn
    return T, maxit, False


@njit(cache=True)
def _lo_kernel(dx, dxf, sig_t, sig_a, sig_f, rho_cv, gpc, gmc, gpf, gmf,
               g0L, g1L, g0R, g1R, rE, rFf, rFc, rT, tau, c, a,
               E_guess, T_guess, tol, max_iter, newton_tol, newton_maxit, t_floor,
               floor_rel, fixup, E, Ff, Fc, T):
    """Picard loop for one backward-Euler LO stage.

    Returns (status, iterations, newton_iterations, clipped, last_change);
    status 0 ok, 1 not converged, 2 negative E, 3 Newton failure,
    4 singular linear system.
    """
    M = dx.size
    n = 2 * M
    dl = np.empty(n - 1)
    d = np.empty(n)
    du = np.empty(n - 1)
    b = np.empty(n)
    Tk = T_guess.copy()
    Ep = E_guess.copy()
    inv_ct = 1.0 / (c * tau)
    # F coefficients: F = s + p * E_left + q * E_right
    Dc = inv_ct + sig_t
    sc = rFc * inv_ct / Dc
    pc = (2.0 * c / (3.0 * dx) + gpc * c) / Dc
    qc = (-2.0 * c / (3.0 * dx) - gmc * c) / Dc
    sf = np.zeros(M + 1)
    pf = np.zeros(M + 1)
    qf = np.zeros(M + 1)
    for f in range(1, M):
        Df = inv_ct + sig_f[f]
        sf[f] = rFf[f] * inv_ct / Df
        pf[f] = (2.0 * c / (3.0 * dxf[f - 1]) + gpf[f] * c) / Df
        qf[f] = (-2.0 * c / (3.0 * dxf[f - 1]) - gmf[f] * c) / Df

    n_newton = 0
    clipped = 0
    change = np.inf
    status = 1
    it = 0
    for it in range(1, max_iter + 1):
        for i in range(M):
            h = 0.5 * dx[i]
            for s in range(2):
                k = 4.0 * a * Tk[i, s] ** 3
                beta = c * sig_a[i] * tau / rho_cv[i]
                th = a * Tk[i, s] ** 4
                # emission linearized about Tk with T eliminated; written so that
                # no 1 - beta k / (1 + beta k) cancellation occurs in thick cells
                w = sig_a[i] * c * h / (1.0 + beta * k)
                row = 2 * i + s
                d[row] = h / tau + w
                b[row] = h / tau * rE[i, s] + w * (th + k * (rT[i, s] - Tk[i, s]))
            rl = 2 * i
            rr = 2 * i + 1
            # +F_i in the L row, -F_i in the R row
            d[rl] += pc[i]
            du[rl] = qc[i]
            b[rl] -= sc[i]
            d[rr] -= qc[i]
            dl[rr - 1] = -pc[i]
            b[rr] += sc[i]
            # -F_{i-1/2} in the L row
            if i == 0:
                d[rl] += g1L * c
                b[rl] += g0L
            else:
                d[rl] -= qf[i]
                dl[rl - 1] = -pf[i]
                b[rl] += sf[i]
            # +F_{i+1/2} in the R row
            if i == M - 1:
                d[rr] += g1R * c
                b[rr] += g0R
            else:
                d[rr] += pf[i + 1]
                du[rr] = qf[i + 1]
                b[rr] -= sf[i + 1]
        if not tridiag_solve(dl, d, du, b):
            return 4, it, n_newton, clipped, change
        emax = 0.0
        for i in range(M):
            for s in range(2):
                v = b[2 * i + s]
                if v < 0.0:
                    if not fixup:
                        return 2, it, n_newton, clipped, change
                    v = 0.0
                    clipped += 1
                E[i, s] = v
                if v > emax:
                    emax = v
        change = 0.0
        ok = True
        for i in range(M):
            coef = c * sig_a[i] / rho_cv[i]
            for s in range(2):
                Tn, nit, conv = _newton_T(rT[i, s], E[i, s], tau, coef, a, t_floor,
                                          newton_tol, newton_maxit)
                n_newton += nit
                ok = ok and conv
                ct = abs(Tn - Tk[i, s]) / Tn
                ce = abs(E[i, s] - Ep[i, s]) / (abs(E[i, s]) + floor_rel * emax + 1e-300)
                change = max(change, ct, ce)
                T[i, s] = Tn
        if not ok:
            return 3, it, n_newton, clipped, change
        Tk[:, :] = T
        Ep[:, :] = E
        if change < tol:
            status = 0
            break
    for i in range(M):
        Fc[i] = sc[i] + pc[i] * E[i, 0] + qc[i] * E[i, 1]
    Ff[0] = g0L - g1L * c * E[0, 0]
    Ff[M] = g1R * c * E[M - 1, 1] - g0R
    for f in range(1, M):
        Ff[f] = sf[f] + pf[f] * E[f - 1, 1] + qf[f] * E[f, 0]
    return status, it, n_newton, clipped, change


def newton_temperature(r_T, E, dt_eff, sigma_a, rho_cv,
                       constants: PhysConstants = DEFAULT_CONSTANTS,
                       tol: float = 1e-12, t_floor: float = T_FLOOR, maxit: int = 50) -> float:
    """Material temperature solving (T - r_T)/dt = (c sigma_a / rho_cv)(E - a T^4)."""
    if not dt_eff > 0:
        raise ValueError("dt_eff must be positive")
    coef = constants.c * sigma_a / rho_cv
    T, _, ok = _newton_T(float(r_T), float(E), float(dt_eff), float(coef), constants.a,
                         t_floor, tol, maxit)
    if not ok:
        raise LOConvergenceError("temperature Newton iteration did not converge", iterations=maxit)
    return T


@dataclass
class LOStageProblem:
    r_E: np.ndarray         # (M, 2)
    r_F_face: np.ndarray    # (M + 1,)
    r_F_center: np.ndarray  # (M,)
    r_T: np.ndarray         # (M, 2)
    dt_eff: float
    gamma: GammaSet
    sigma_t: np.ndarray     # (M,) frozen cell opacities
    sigma_a: np.ndarray
    sigma_face: np.ndarray  # (M + 1,)
    rho_cv: np.ndarray      # (M,)
    mesh: Mesh1D
    constants: PhysConstants = DEFAULT_CONSTANTS
    tol: float = 1e-10
    max_iter: int = 500
    newton_tol: float = 1e-12
    newton_maxit: int = 50
    t_floor: float = T_FLOOR
    floor_eps: float = FLOOR_EPS
    fixup: bool = False

    def __post_init__(self):
        M = self.mesh.n_cells
        if not self.dt_eff > 0:
            raise ValueError("dt_eff must be positive")
        if np.shape(self.sigma_t) != (M,) or np.shape(self.sigma_face) != (M + 1,):
            raise ValueError("opacity arrays must have M and M + 1 entries")


@dataclass
class LOSolveInfo:
    iterations: int
    newton_iterations: int
    clipped: int
    change: float


_STATUS = {1: "did not converge", 2: "produced negative radiation energy",
           3: "temperature Newton failed", 4: "hit a singular linear system"}


def lo_stage_solve(problem: LOStageProblem, initial_guess: LOState) -> tuple[LOState, LOSolveInfo]:
    """Nonlinear backward-Euler solve of the LO system with fixed gamma and opacities."""
    p = problem
    M = p.mesh.n_cells
    g = p.gamma
    f64 = lambda x: np.ascontiguousarray(x, dtype=float)  # noqa: E731
    E = np.empty((M, 2))
    T = np.empty((M, 2))
    Ff = np.empty(M + 1)
    Fc = np.empty(M)
    dxf = p.mesh.dx_faces if M > 1 else np.zeros(0)
    status, it, nn, clipped, change = _lo_kernel(
        p.mesh.dx, f64(dxf), f64(p.sigma_t), f64(p.sigma_a), f64(p.sigma_face), f64(p.rho_cv),
        f64(g.g_plus_center), f64(g.g_minus_center), f64(g.g_plus_face), f64(g.g_minus_face),
        float(g.left[0]), float(g.left[1]), float(g.right[0]), float(g.right[1]),
        f64(p.r_E), f64(p.r_F_face), f64(p.r_F_center), f64(p.r_T), float(p.dt_eff),
        p.constants.c, p.constants.a, f64(initial_guess.E),
        np.maximum(f64(initial_guess.T), p.t_floor), p.tol, p.max_iter, p.newton_tol,
        p.newton_maxit, p.t_floor, p.floor_eps, p.fixup, E, Ff, Fc, T)
    if status != 0:
        raise LOConvergenceError(f"LO solve {_STATUS[status]} after {it} iterations "
                                 f"(last relative change {change:.3e})", change, it)
    return LOState(E, Ff, Fc, T), LOSolveInfo(it, nn, clipped, change)


def lo_residual(lo: LOState, problem: LOStageProblem) -> dict[str, np.ndarray]:
    """Residuals of the discrete LO stage equations (zero at the solution).

    Written directly from the subcell equations; shares no code with the
    eliminated banded solve.
    """
    p = problem
    c, a, tau = p.constants.c, p.constants.a, p.dt_eff
    g = p.gamma
    dx = p.mesh.dx
    h = 0.5 * dx
    E, T, Ff, Fc = lo.E, lo.T, lo.F_face, lo.F_center
    theta = a * T**4
    sa = p.sigma_a[:, None]
    resE = np.empty_like(E)
    resE[:, 0] = h * (E[:, 0] - p.r_E[:, 0]) / tau + Fc - Ff[:-1] \
        + sa[:, 0] * c * h * (E[:, 0] - theta[:, 0])
    resE[:, 1] = h * (E[:, 1] - p.r_E[:, 1]) / tau + Ff[1:] - Fc \
        + sa[:, 0] * c * h * (E[:, 1] - theta[:, 1])
    resFc = (Fc - p.r_F_center) / (c * tau) + (c / 3.0) * (E[:, 1] - E[:, 0]) / h \
        + p.sigma_t * Fc - (g.g_plus_center * c * E[:, 0] - g.g_minus_center * c * E[:, 1])
    resFf = np.empty_like(Ff)
    if E.shape[0] > 1:
        hf = 0.5 * p.mesh.dx_faces
        resFf[1:-1] = (Ff[1:-1] - p.r_F_face[1:-1]) / (c * tau) \
            + (c / 3.0) * (E[1:, 0] - E[:-1, 1]) / hf + p.sigma_face[1:-1] * Ff[1:-1] \
            - (g.g_plus_face[1:-1] * c * E[:-1, 1] - g.g_minus_face[1:-1] * c * E[1:, 0])
    resFf[0] = -Ff[0] - (g.left[1] * c * E[0, 0] - g.left[0])
    resFf[-1] = Ff[-1] - (g.right[1] * c * E[-1, 1] - g.right[0])
    resT = (T - p.r_T) / tau - (c * sa / p.rho_cv[:, None]) * (E - theta)
    return {"E": resE, "F_center": resFc, "F_face": resFf, "T": resT}
