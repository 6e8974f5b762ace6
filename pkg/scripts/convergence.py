"""Temporal convergence of every integrator on the Marshak wave.

Writes out/convergence/<kind>/convergence.csv and prints the fitted slopes.
The SSP-LDIRK3 reference at 1.25e-4 ns is cached in .trt_cache.
"""

import argparse
from pathlib import Path

from simex_trt import INTEGRATORS, convergence_study, preset

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dts", default="8e-3,4e-3,2e-3,1e-3")
    ap.add_argument("--kinds", default=",".join(INTEGRATORS))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cfg = preset("marshak").replace(snapshot_times=[], tracers=[])
    dts = [float(d) for d in args.dts.split(",")]
    for kind in args.kinds.split(","):
        res = convergence_study(cfg, dts, kind, reference_dt=1.25e-4,
                                cache_dir=ROOT / ".trt_cache",
                                out_dir=ROOT / "out" / "convergence" / kind,
                                workers=args.workers)
        errs = " ".join(f"{e:.3e}" for e in res.error_T)
        print(f"{kind:16s} slope_E={res.slope_E:5.2f} slope_T={res.slope_T:5.2f}  err_T: {errs}")


if __name__ == "__main__":
    main()
