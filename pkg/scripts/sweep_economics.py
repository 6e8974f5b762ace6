"""Sweeps per step: SIMEX steppers, implicit HOLO and unaccelerated iteration."""

import argparse

import numpy as np

from simex_trt import preset, sweep_economics


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=None, help="limit the HOLO comparison")
    args = ap.parse_args()
    eco = sweep_economics(preset("marshak"), n_steps=args.steps)
    for kind, s in eco.simex_sweeps.items():
        print(f"{kind:16s} sweeps/step {sorted(set(s.tolist()))}")
    h = eco.holo_sweeps
    print(f"implicit_holo    sweeps/step min {h.min()} max {h.max()} mean {h.mean():.2f}")
    hist = np.bincount(h)
    print("  histogram:", {k: int(v) for k, v in enumerate(hist) if v})
    print(f"unaccelerated    needs >= HOLO sweeps on {100 * eco.unaccel_fraction:.1f}% of steps")


if __name__ == "__main__":
    main()
