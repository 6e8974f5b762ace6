"""Command line entry point: ``trt run``, ``trt converge`` and ``trt presets``."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import convergence_study, run_simulation
from .config import BC_MODES, FACE_MODES, PRESETS, ConfigError, load_config, preset
from .integrators import INTEGRATORS

EXIT_OK, EXIT_CONFIG, EXIT_STEPPER = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trt", description="Gray S_N thermal radiative transfer "
                                "with SIMEX-RK and implicit HOLO time integration.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one simulation")
    run.add_argument("--config", required=True, help="JSON config file")
    run.add_argument("--dt", type=float, help="time step [ns]")
    run.add_argument("--integrator", choices=INTEGRATORS)
    run.add_argument("--bc", choices=BC_MODES, help="boundary closure")
    run.add_argument("--face-opacity", choices=FACE_MODES)
    run.add_argument("--out", help="output directory")

    conv = sub.add_parser("converge", help="temporal convergence study")
    conv.add_argument("--config", required=True)
    conv.add_argument("--dts", required=True, help="comma separated, descending")
    conv.add_argument("--integrator", choices=INTEGRATORS)
    conv.add_argument("--reference", default="ssp_ldirk3_332", choices=INTEGRATORS,
                      help="integrator for the reference run")
    conv.add_argument("--reference-dt", type=float,
                      help="reference step (default: smallest dt / 8)")
    conv.add_argument("--cache", help="reference cache directory (default: OUT/cache)")
    conv.add_argument("--workers", type=int, default=1)
    conv.add_argument("--out", required=True)

    pre = sub.add_parser("presets", help="list presets")
    pre.add_argument("--show", metavar="NAME", help="print the full JSON of one preset")
    return p


def _apply_overrides(cfg, args):
    changes = {}
    for attr, key in (("dt", "dt"), ("integrator", "integrator"), ("bc", "bc_mode"),
                      ("face_opacity", "face_opacity"), ("out", "out_dir")):
        v = getattr(args, attr, None)
        if v is not None:
            changes[key] = v
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        if args.show:
            try:
                print(preset(args.show).to_json())
            except ConfigError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            return EXIT_OK
        for name, desc in PRESETS.items():
            print(f"{name:24s} {desc}")
        return EXIT_OK

    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "converge":
            dts = [float(s) for s in args.dts.split(",") if s.strip()]
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "run":
        res = run_simulation(cfg)
        s = res.summary
        if res.failed:
            print(f"stepper failure at step {s['failed_step']}: {s['error']}", file=sys.stderr)
            return EXIT_STEPPER
        print(f"{cfg.integrator}: {s['n_steps']} steps, {s['total_sweeps']} sweeps, "
              f"{s['wall_time_s']:.2f} s -> {res.out_dir}")
        return EXIT_OK

    try:
        res = convergence_study(cfg, dts, cfg.integrator, args.reference, args.reference_dt,
                                cache_dir=args.cache or f"{args.out}/cache", out_dir=args.out,
                                workers=args.workers)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"stepper failure: {exc}", file=sys.stderr)
        return EXIT_STEPPER
    for d, eE, eT, ok in res.rows():
        print(f"dt={d:<10.4g} err_E={eE:<12.4e} err_T={eT:<12.4e} {'' if ok else 'unstable'}")
    print(f"slope_E={res.slope_E:.3f} slope_T={res.slope_T:.3f}")
    return EXIT_OK if res.stable.any() else EXIT_STEPPER


if __name__ == "__main__":
    sys.exit(main())
