"""LIMEX-Euler against implicit HOLO at a large step: wall time and final-T error."""

import argparse
from pathlib import Path

from simex_trt import build_mesh, error_norm, preset, reference_solution, run_simulation

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dt", type=float, default=2e-2)
    args = ap.parse_args()
    cfg = preset("marshak").replace(snapshot_times=[], tracers=[])
    ref = reference_solution(cfg.replace(integrator="ssp_ldirk3_332", dt=1.25e-4),
                             ROOT / ".trt_cache")
    mesh = build_mesh(cfg)
    for kind in ("limex_euler", "implicit_holo"):
        run = run_simulation(cfg.replace(integrator=kind, dt=args.dt), write=False)
        s = run.summary
        eT = error_norm(run.final, ref, mesh)[1] if not run.failed else float("nan")
        print(f"{kind:14s} wall {s['wall_time_s']:7.2f}s sweeps {s['total_sweeps']:6d} "
              f"error_T {100 * eT:6.2f}%")


if __name__ == "__main__":
    main()
