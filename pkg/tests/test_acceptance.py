"""Benchmark acceptance criteria 1-5 on the Marshak wave.

Each test records a pass/fail line that is printed at the end of the run.
References are cached in ``.trt_cache`` at the repository root (override
with TRT_CACHE); a cold cache costs 7 to 17 minutes per reference.
"""

import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from simex_trt.bench import (build_mesh, convergence_study, error_norm, reference_solution,
                             run_simulation, sweep_economics)
from simex_trt.config import preset

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get("TRT_CACHE", ROOT / ".trt_cache"))
DTS = [8e-3, 4e-3, 2e-3, 1e-3]
SLOPE_BANDS = {"implicit_holo": (0.75, 1.35), "limex_euler": (0.75, 1.35),
               "h_ldirk2_222": (1.6, 2.3), "ssp_ldirk2_332": (1.6, 2.3),
               "ssp_ldirk3_332": (1.6, 2.3)}
FINE_REF = dict(integrator="ssp_ldirk3_332", dt=1.25e-4)
IMPLICIT_REF = dict(integrator="implicit_holo", dt=3e-5)


def _record(k, ok, detail):
    ACCEPTANCE.setdefault(k, []).append((bool(ok), detail))
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'} | {detail}")


def _marshak(**kw):
    return preset("marshak").replace(snapshot_times=[], tracers=[], **kw)


@pytest.mark.slow
@pytest.mark.parametrize("kind", list(SLOPE_BANDS))
def test_criterion_1_temporal_order(kind):
    res = convergence_study(_marshak(), DTS, kind, reference_integrator=FINE_REF["integrator"],
                            reference_dt=FINE_REF["dt"], cache_dir=CACHE)
    lo, hi = SLOPE_BANDS[kind]
    ok = res.stable.all() and lo <= res.slope_E <= hi and lo <= res.slope_T <= hi
    errs = ",".join(f"{e:.2e}" for e in res.error_T)
    _record(1, ok, f"{kind} slope_E={res.slope_E:.2f} slope_T={res.slope_T:.2f} "
                   f"in [{lo},{hi}] (err_T {errs})")
    assert res.stable.all()
    assert lo <= res.slope_E <= hi
    assert lo <= res.slope_T <= hi


@pytest.mark.slow
def test_criterion_2_interface_opacity():
    # one implicit reference with the preset face rule serves all three runs
    ref = reference_solution(_marshak(**IMPLICIT_REF), CACHE)
    mesh = build_mesh(_marshak())
    err = {}
    for mode in ("max", "harmonic", "min"):
        run = run_simulation(_marshak(integrator="limex_euler", dt=8e-3, face_opacity=mode),
                             write=False)
        assert not run.failed
        err[mode] = error_norm(run.final, ref, mesh)[1]
    ok = err["max"] < 0.10 and err["max"] < err["harmonic"] < err["min"]
    _record(2, ok, "final-T errors " + ", ".join(f"{m}={100 * e:.2f}%" for m, e in err.items()))
    assert err["max"] < 0.10
    assert err["max"] < err["harmonic"] < err["min"]


@pytest.mark.slow
def test_criterion_3_sweep_economics():
    eco = sweep_economics(_marshak(dt=8e-3))
    exact = all(np.all(v == n) for v, n in
                ((eco.simex_sweeps[k], n) for k, n in
                 (("limex_euler", 1), ("h_ldirk2_222", 2), ("ssp_ldirk2_332", 3),
                  ("ssp_ldirk3_332", 3))))
    h = eco.holo_sweeps
    in_band = bool(np.all((h >= 3) & (h <= 30)))
    frac = eco.unaccel_fraction
    ok = exact and in_band and frac >= 0.9
    _record(3, ok, f"SIMEX sweeps exact={exact}; HOLO sweeps/step {h.min()}-{h.max()} "
                   f"(mean {h.mean():.2f}) over {h.size} steps; unaccelerated >= HOLO on "
                   f"{100 * frac:.1f}% of steps")
    assert exact
    assert in_band
    assert frac >= 0.9


@pytest.mark.slow
def test_criterion_4_cost_crossover():
    ref = reference_solution(_marshak(**FINE_REF), CACHE)
    mesh = build_mesh(_marshak())
    out = {}
    for kind in ("limex_euler", "implicit_holo"):
        run = run_simulation(_marshak(integrator=kind, dt=2e-2), write=False)
        assert not run.failed, run.summary["error"]
        out[kind] = (run.summary["wall_time_s"], error_norm(run.final, ref, mesh)[1])
    (w_l, e_l), (w_h, e_h) = out["limex_euler"], out["implicit_holo"]
    ok = w_l < w_h and e_l <= 3 * e_h
    _record(4, ok, f"wall LIMEX {w_l:.2f}s vs HOLO {w_h:.2f}s; final-T error "
                   f"LIMEX {100 * e_l:.2f}% vs HOLO {100 * e_h:.2f}% (ratio {e_l / e_h:.2f})")
    assert w_l < w_h
    assert e_l <= 3 * e_h


PROPERTY_TESTS = [
    "tests/test_transport.py::test_sweep_matches_dense_oracle_property",
    "tests/test_lo.py::test_isotropic_uniform_field_gives_quarter_sigma",
    "tests/test_lo.py::test_closures_zero_net_flux_for_isotropic_fields",
    "tests/test_lo.py::test_conservation_with_random_gamma",
    "tests/test_integrators.py::test_equilibrium_fixed_point_over_100_steps",
    "tests/test_integrators.py::test_order_probe",
    "tests/test_integrators.py::test_tableau_consistency",
    "tests/test_lo.py::test_newton_agrees_with_bisection",
]


def test_criterion_5_property_suite():
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *PROPERTY_TESTS], cwd=ROOT, capture_output=True, text=True,
                          check=False)
    wall = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and wall < 60.0
    _record(5, ok, f"{tail} in {wall:.1f}s")
    assert proc.returncode == 0, proc.stdout[-3000:]
    assert wall < 60.0
