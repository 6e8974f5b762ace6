"""Simulation driver, CSV emission and the temporal convergence harness."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ProblemConfig
from .integrators import IterationError, TRTContext, make_integrator
from .lo import LOConvergenceError
from .physics import (AngularQuadrature, LOState, MaterialModel, Mesh1D, PowerLawOpacity,
                      build_quadrature, equilibrium_state, total_energy)
from .transport import SweepError, planck_inflow

log = logging.getLogger(__name__)

STEPPER_ERRORS = (LOConvergenceError, IterationError, SweepError, FloatingPointError)

SNAPSHOT_HEADER = ("x_center", "side", "T_eV", "E_erg_cc", "F_face_adjacent")
TRACER_HEADER = ("t_ns", "T_eV", "E_erg_cc")
STATS_HEADER = ("step", "t_ns", "sweeps", "lo_solves", "newton_iters", "wall_s")
ENERGY_HEADER = ("t_ns", "energy_total", "net_inflow_integrated")


def build_mesh(cfg: ProblemConfig) -> Mesh1D:
    return Mesh1D.uniform(cfg.n_cells, cfg.length)


def build_material(cfg: ProblemConfig, mesh: Mesh1D) -> MaterialModel:
    ends = np.array([lay.x_end for lay in cfg.layers])
    idx = np.searchsorted(ends, mesh.x_centers, side="right")
    idx = np.minimum(idx, len(cfg.layers) - 1)
    laws = tuple(PowerLawOpacity(lay.opacity_coef, lay.opacity_power) for lay in cfg.layers)
    cvs = tuple(lay.rho_cv for lay in cfg.layers)
    return MaterialModel(laws, cvs, idx, cfg.t_floor)


def build_context(cfg: ProblemConfig) -> TRTContext:
    mesh = build_mesh(cfg)
    quad: AngularQuadrature = build_quadrature(cfg.n_angles, cfg.quadrature)
    material = build_material(cfg, mesh)
    return TRTContext(
        mesh, quad, material, planck_inflow(quad, cfg.T_left, cfg.T_right),
        bc_mode=cfg.bc_mode, face_mode=cfg.face_opacity, fixup=cfg.fixup,
        floor_eps=cfg.floor_eps, tol_lo=cfg.tol_lo, max_lo_iter=cfg.max_lo_iter,
        newton_tol=cfg.newton_tol, newton_maxit=cfg.newton_maxit,
        emission_per_subcell=cfg.emission_per_subcell,
        threads=1 if cfg.deterministic else None)


def build_integrator(cfg: ProblemConfig, ctx: TRTContext):
    return make_integrator(cfg.integrator, ctx, tol_outer=cfg.tol_outer,
                           tol_inner=cfg.tol_inner, max_outer=cfg.max_outer,
                           unaccel_tol=cfg.unaccel_tol,
                           unaccel_max_iters=cfg.unaccel_max_iters)


def time_grid(t_final: float, dt: float) -> np.ndarray:
    """Step sizes covering [0, t_final]: full steps of dt plus a short final one if needed."""
    n = int(math.floor(t_final / dt * (1 + 1e-12)))
    rest = t_final - n * dt
    steps = np.full(n, dt)
    if rest > 1e-9 * dt:
        steps = np.append(steps, rest)
    return steps


@dataclass
class RunOutput:
    config: ProblemConfig
    mesh: Mesh1D
    final: LOState
    summary: dict
    out_dir: Path | None = None
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sweeps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    lo_solves: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    newton_iters: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    outer_iters: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    wall: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def failed(self) -> bool:
        return self.summary.get("failed_step") is not None


def _snapshot_rows(lo: LOState, mesh: Mesh1D):
    xc, dx = mesh.x_centers, mesh.dx
    for i in range(mesh.n_cells):
        yield (xc[i] - 0.25 * dx[i], "L", lo.T[i, 0], lo.E[i, 0], lo.F_face[i])
        yield (xc[i] + 0.25 * dx[i], "R", lo.T[i, 1], lo.E[i, 1], lo.F_face[i + 1])


def write_snapshot(path: Path, lo: LOState, mesh: Mesh1D) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_HEADER)
        for row in _snapshot_rows(lo, mesh):
            w.writerow([float(row[0]), row[1], float(row[2]), float(row[3]), float(row[4])])


class _Outputs:
    """Open CSV writers for one run; a no-op when out_dir is None."""

    def __init__(self, out_dir: Path | None, cfg: ProblemConfig, mesh: Mesh1D):
        self.out_dir = out_dir
        self.files = []
        self.tracer_cells = [(mesh.cell_of(x), 0 if x <= mesh.x_centers[mesh.cell_of(x)] else 1)
                             for x in cfg.tracers]
        if out_dir is None:
            return
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "snapshots").mkdir(exist_ok=True)
        self.stats = self._open(out_dir / "stats.csv", STATS_HEADER)
        self.energy = self._open(out_dir / "energy.csv", ENERGY_HEADER)
        self.tracers = [self._open(out_dir / f"tracer_{k}.csv", TRACER_HEADER)
                        for k in range(len(cfg.tracers))]

    def _open(self, path, header):
        fh = open(path, "w", newline="")
        self.files.append(fh)
        w = csv.writer(fh)
        w.writerow(header)
        return w

    def tracer_rows(self, t, lo: LOState):
        if self.out_dir is None:
            return
        for w, (i, s) in zip(self.tracers, self.tracer_cells):
            w.writerow([float(t), float(lo.T[i, s]), float(lo.E[i, s])])

    def close(self):
        for fh in self.files:
            fh.close()


def run_simulation(cfg: ProblemConfig, out_dir=None, write: bool = True) -> RunOutput:
    """Integrate the configured problem from t = 0 to t_final with a fixed dt.

    With ``write`` the CSV files and summary.json go to ``out_dir`` (default
    ``cfg.out_dir``). A stepper failure stops the run; the summary records
    the failing step index and the message.
    """
    ctx = build_context(cfg)
    integ = build_integrator(cfg, ctx)
    mesh = ctx.mesh
    out = Path(out_dir if out_dir is not None else cfg.out_dir) if write else None
    io = _Outputs(out, cfg, mesh)

    ho, lo = equilibrium_state(mesh, ctx.quad, cfg.T0, ctx.constants, cfg.t_floor)
    y = ctx.pack(ho, lo)
    steps = time_grid(cfg.t_final, cfg.dt)
    n = steps.size
    times = np.cumsum(steps)
    snap_times = sorted(cfg.snapshot_times)
    snap_steps = [int(np.searchsorted(times, ts * (1 - 1e-9))) for ts in snap_times]
    rec = {k: np.zeros(n, dtype=np.int64) for k in ("sweeps", "lo", "newton", "outer")}
    wall = np.zeros(n)

    e0 = total_energy(lo, mesh, ctx.material)
    inflow_total = 0.0
    if out is not None:
        io.energy.writerow([0.0, e0, 0.0])
        io.tracer_rows(0.0, lo)
    snapshots = []
    failed_step, error = None, None
    t = 0.0
    t_start = time.perf_counter()
    report = max(n // 10, 1)
    for k in range(n):
        try:
            y, st = integ.step(y, steps[k])
        except STEPPER_ERRORS as exc:
            failed_step, error = k, f"{type(exc).__name__}: {exc}"
            log.warning("step %d (t = %.6g ns) failed: %s", k, t, error)
            break
        t = float(times[k])
        inflow_total += st.boundary_inflow
        rec["sweeps"][k] = st.sweeps
        rec["lo"][k] = st.lo_linear_solves
        rec["newton"][k] = st.lo_newton_iters
        rec["outer"][k] = st.outer_holo_iters
        wall[k] = st.wall_time
        if out is not None:
            lo = ctx.unpack(y)[1]
            io.stats.writerow([k + 1, t, st.sweeps, st.lo_linear_solves, st.lo_newton_iters,
                               0.0 if cfg.deterministic else st.wall_time])
            io.tracer_rows(t, lo)
            for j, sk in enumerate(snap_steps):
                if sk == k:
                    name = f"snapshot_{j:03d}.csv"
                    write_snapshot(out / "snapshots" / name, lo, mesh)
                    io.energy.writerow([t, total_energy(lo, mesh, ctx.material), inflow_total])
                    snapshots.append({"t_ns": t, "file": f"snapshots/{name}"})
        if (k + 1) % report == 0:
            log.info("%s: step %d/%d, t = %.4g ns", cfg.integrator, k + 1, n, t)
    elapsed = time.perf_counter() - t_start
    io.close()

    done = n if failed_step is None else failed_step
    final = ctx.unpack(y)[1]
    summary = {
        "name": cfg.name, "integrator": cfg.integrator, "dt": cfg.dt,
        "n_steps": int(n), "steps_completed": int(done), "t_reached": float(t),
        "failed_step": failed_step, "error": error,
        "total_sweeps": int(rec["sweeps"].sum()), "total_lo_solves": int(rec["lo"].sum()),
        "total_newton_iters": int(rec["newton"].sum()),
        "mean_sweeps_per_step": float(rec["sweeps"][:done].mean()) if done else 0.0,
        "wall_time_s": float(elapsed), "stepper_wall_time_s": float(wall.sum()),
        "energy_initial": e0, "energy_final": total_energy(final, mesh, ctx.material),
        "net_inflow_integrated": inflow_total, "snapshots": snapshots,
        "config": cfg.to_dict(),
    }
    if out is not None:
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return RunOutput(cfg, mesh, final, summary, out, times[:done], rec["sweeps"][:done],
                     rec["lo"][:done], rec["newton"][:done], rec["outer"][:done], wall[:done])


# ---------------------------------------------------------------------------
# errors and convergence

def error_norm(state, reference, mesh: Mesh1D) -> tuple[float, float]:
    """Relative dx-weighted L2 errors (E, T) over subcell values."""
    E, T = _fields(state)
    E_ref, T_ref = _fields(reference)
    if E.shape != E_ref.shape or T.shape != T_ref.shape:
        raise ValueError("state and reference shapes differ")
    w = np.repeat(0.5 * mesh.dx[:, None], 2, axis=1)

    def rel(u, r):
        den = math.sqrt(float(np.sum(w * r * r)))
        if den == 0.0:
            raise ValueError("reference has zero norm")
        return math.sqrt(float(np.sum(w * (u - r) ** 2))) / den

    return rel(E, E_ref), rel(T, T_ref)


def _fields(s):
    if isinstance(s, LOState):
        return np.asarray(s.E, float), np.asarray(s.T, float)
    E, T = s
    return np.asarray(E, float), np.asarray(T, float)


def config_hash(cfg: ProblemConfig) -> str:
    """Hash of every config field that can change the solution."""
    d = cfg.to_dict()
    for key in ("out_dir", "snapshot_times", "tracers", "deterministic", "name"):
        d.pop(key, None)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def reference_solution(cfg: ProblemConfig, cache_dir=None) -> LOState:
    """Final LO state of ``cfg``, cached on disk under its config hash."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"ref_{config_hash(cfg)[:20]}.npz"
        if path.exists():
            data = np.load(path)
            log.info("reference loaded from %s", path)
            return LOState(data["E"], data["F_face"], data["F_center"], data["T"])
    res = run_simulation(cfg, write=False)
    if res.failed:
        raise RuntimeError(f"reference run failed: {res.summary['error']}")
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        lo = res.final
        np.savez(path, E=lo.E, F_face=lo.F_face, F_center=lo.F_center, T=lo.T,
                 config=cfg.to_json())
    return res.final


@dataclass
class ConvergenceResult:
    dts: np.ndarray
    error_E: np.ndarray
    error_T: np.ndarray
    stable: np.ndarray
    slope_E: float
    slope_T: float
    reference_dt: float
    reference_integrator: str
    runs: list = field(default_factory=list)

    def rows(self):
        return list(zip(self.dts, self.error_E, self.error_T, self.stable))


def fit_slope(dts, errors) -> float:
    dts = np.asarray(dts, float)
    errors = np.asarray(errors, float)
    ok = np.isfinite(errors) & (errors > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(dts[ok]), np.log(errors[ok]), 1)[0])


def _member(cfg: ProblemConfig):
    res = run_simulation(cfg, write=False)
    return res.final, res.summary


def convergence_study(cfg: ProblemConfig, dt_list, integrator: str | None = None,
                      reference_integrator: str = "ssp_ldirk3_332",
                      reference_dt: float | None = None, cache_dir=None, out_dir=None,
                      workers: int = 1) -> ConvergenceResult:
    """Final-time errors against a fine reference and least-squares slopes.

    The reference defaults to ``min(dt_list) / 8``. Failed member runs are
    marked unstable and left out of the fit.
    """
    dts = np.asarray([float(d) for d in dt_list])
    if dts.size == 0 or np.any(np.diff(dts) >= 0):
        raise ValueError("dt_list must be nonempty and strictly descending")
    integrator = integrator or cfg.integrator
    ref_dt = float(reference_dt) if reference_dt is not None else float(dts.min()) / 8.0
    ref_cfg = cfg.replace(dt=ref_dt, integrator=reference_integrator, snapshot_times=[],
                          tracers=[])
    ref = reference_solution(ref_cfg, cache_dir)
    members = [cfg.replace(dt=float(d), integrator=integrator, snapshot_times=[], tracers=[])
               for d in dts]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_member, members))
    else:
        results = [_member(m) for m in members]
    mesh = build_mesh(cfg)
    eE = np.full(dts.size, np.nan)
    eT = np.full(dts.size, np.nan)
    stable = np.zeros(dts.size, dtype=bool)
    for k, (final, summary) in enumerate(results):
        if summary["failed_step"] is None:
            eE[k], eT[k] = error_norm(final, ref, mesh)
            stable[k] = True
    res = ConvergenceResult(dts, eE, eT, stable, fit_slope(dts[stable], eE[stable]),
                            fit_slope(dts[stable], eT[stable]), ref_dt, reference_integrator,
                            [s for _, s in results])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "convergence.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("dt", "error_E", "error_T", "stable"))
            for d, a, b, s in res.rows():
                w.writerow([float(d), float(a), float(b), int(s)])
        meta = {"integrator": integrator, "slope_E": res.slope_E, "slope_T": res.slope_T,
                "reference_dt": ref_dt, "reference_integrator": reference_integrator,
                "members": [{k: s[k] for k in ("dt", "failed_step", "error", "total_sweeps",
                                               "wall_time_s")} for s in res.runs]}
        (out / "convergence.json").write_text(json.dumps(meta, indent=2))
    return res


# ---------------------------------------------------------------------------
# sweep economics


@dataclass
class SweepEconomics:
    holo_sweeps: np.ndarray      # implicit HOLO sweeps per step
    unaccel_at_least: np.ndarray  # unaccelerated needed >= the HOLO count on that step
    simex_sweeps: dict           # integrator -> sweeps per step

    @property
    def unaccel_fraction(self) -> float:
        return float(self.unaccel_at_least.mean()) if self.unaccel_at_least.size else float("nan")


def sweep_economics(cfg: ProblemConfig, n_steps: int | None = None,
                    simex=("limex_euler", "h_ldirk2_222", "ssp_ldirk2_332", "ssp_ldirk3_332"),
                    simex_steps: int = 20) -> SweepEconomics:
    """Sweep counts of implicit HOLO against unaccelerated iteration, step by step.

    Each HOLO step with k sweeps is followed, from the same starting state, by
    an unaccelerated step capped at k - 1 sweeps with the same tolerance; if
    that step does not converge the unaccelerated count is at least k. The
    cap keeps the comparison exact without running source iteration to
    convergence in thick cells, where it may need thousands of sweeps.
    """
    ctx = build_context(cfg)
    holo = make_integrator("implicit_holo", ctx, tol_outer=cfg.tol_outer,
                           tol_inner=cfg.tol_inner, max_outer=cfg.max_outer)
    unacc = make_integrator("unaccelerated", ctx, unaccel_tol=cfg.tol_outer)
    ho, lo = equilibrium_state(ctx.mesh, ctx.quad, cfg.T0, ctx.constants, cfg.t_floor)
    y0 = ctx.pack(ho, lo)
    steps = time_grid(cfg.t_final, cfg.dt)
    if n_steps is not None:
        steps = steps[:n_steps]
    k_holo = np.zeros(steps.size, dtype=np.int64)
    ge = np.zeros(steps.size, dtype=bool)
    y = y0
    for n, h in enumerate(steps):
        y_next, st = holo.step(y, h)
        k_holo[n] = st.sweeps
        if st.sweeps <= 1:
            ge[n] = True
        else:
            unacc.max_iters = st.sweeps - 1
            try:
                unacc.step(y, h)
            except IterationError:
                ge[n] = True
        y = y_next
    counts = {}
    for kind in simex:
        integ = make_integrator(kind, ctx)
        y = y0
        got = []
        for h in steps[:simex_steps]:
            y, st = integ.step(y, h)
            got.append(st.sweeps)
        counts[kind] = np.array(got, dtype=np.int64)
    return SweepEconomics(k_holo, ge, counts)
