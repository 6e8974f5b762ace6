"""Final-temperature error of LIMEX-Euler under each interface-opacity rule.

The implicit HOLO reference at 3e-5 ns (about 3.3e5 steps) is cached in
.trt_cache after the first run.
"""

from pathlib import Path

from simex_trt import build_mesh, error_norm, preset, reference_solution, run_simulation

ROOT = Path(__file__).resolve().parents[1]


def main():
    cfg = preset("marshak").replace(snapshot_times=[], tracers=[])
    ref = reference_solution(cfg.replace(integrator="implicit_holo", dt=3e-5),
                             ROOT / ".trt_cache")
    mesh = build_mesh(cfg)
    for mode in ("max", "harmonic", "min"):
        run = run_simulation(cfg.replace(integrator="limex_euler", dt=8e-3, face_opacity=mode),
                             write=False)
        eE, eT = error_norm(run.final, ref, mesh)
        print(f"{mode:9s} error_T={100 * eT:6.2f}%  error_E={100 * eE:6.2f}%")


if __name__ == "__main__":
    main()
