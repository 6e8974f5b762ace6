import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from simex_trt import bench, cli
from simex_trt.bench import (build_context, config_hash, convergence_study, error_norm,
                             fit_slope, reference_solution, run_simulation, time_grid)
from simex_trt.config import (ConfigError, Layer, ProblemConfig, config_from_dict, load_config,
                              preset)
from simex_trt.physics import LOState, Mesh1D, opacity

SMALL = {"preset": "marshak", "n_cells": 50, "t_final": 0.2, "dt": 0.02,
         "snapshot_times": [0.1, 0.2], "tracers": [0.0, 0.01]}


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------------------
# configuration

def test_marshak_preset_parameters():
    cfg = preset("marshak")
    assert (cfg.n_cells, cfg.n_angles, cfg.length, cfg.t_final) == (1000, 8, 0.25, 10.0)
    assert (cfg.bc_mode, cfg.face_opacity) == ("half", "max")
    assert cfg.T0 == 0.025 and cfg.T_left == 1000.0 and cfg.T_right == 0.0
    assert cfg.layers[0].rho_cv == 3e12
    ctx = build_context(cfg)
    assert opacity(ctx.material, 1000.0) == pytest.approx(1000.0, rel=1e-14)


def test_marshak_preset_from_file(tmp_path):
    cfg = load_config(_write(tmp_path, {"preset": "marshak"}))
    assert (cfg.n_cells, cfg.n_angles, cfg.length, cfg.t_final) == (1000, 8, 0.25, 10.0)
    assert cfg.dt == 8e-3


def test_surrogate_interface_takes_the_wall_opacity():
    cfg = preset("two_material_surrogate")
    ctx = build_context(cfg)
    T = np.full((cfg.n_cells, 2), 50.0)
    sig_t, _, sig_f = ctx.opacities(T)
    assert set(np.unique(sig_t)) == {0.2, 2000.0}
    jumps = np.nonzero(np.diff(sig_t))[0]
    assert len(jumps) == 2
    for j in jumps:
        assert sig_f[j + 1] == 2000.0


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("crooked_pipe")


def test_missing_dt_names_the_key():
    with pytest.raises(ConfigError, match="'dt'"):
        config_from_dict({"n_cells": 10})


def test_dt_above_t_final_rejected():
    with pytest.raises(ConfigError, match="t_final"):
        config_from_dict({"dt": 2.0, "t_final": 1.0})


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="'colour'"):
        config_from_dict({"dt": 0.1, "colour": "red"})
    with pytest.raises(ConfigError, match="'density'"):
        config_from_dict({"dt": 0.1, "layers": [{"x_end": 0.25, "opacity_coef": 1,
                                                 "opacity_power": 0, "rho_cv": 1,
                                                 "density": 2}]})


@pytest.mark.parametrize("bad", [{"integrator": "rk4"}, {"bc_mode": "mixed"},
                                 {"face_opacity": "mean"}, {"n_angles": 3},
                                 {"n_cells": 10.5}, {"n_cells": 0}, {"T0": 0.0},
                                 {"tol_lo": -1.0}, {"snapshot_times": [20.0]},
                                 {"tracers": [5.0]}, {"T_left": -1.0},
                                 {"layers": [{"x_end": 0.1, "opacity_coef": 1,
                                              "opacity_power": 0, "rho_cv": 1}]},
                                 {"layers": []}, {"quadrature": "lobatto"}])
def test_invalid_values_rejected(bad):
    with pytest.raises(ConfigError):
        config_from_dict({"dt": 0.1, **bad})


def test_integral_floats_accepted_for_counts():
    assert config_from_dict({"dt": 0.1, "n_cells": 100.0}).n_cells == 100


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)
    arr = _write(tmp_path, [1, 2])
    with pytest.raises(ConfigError):
        load_config(arr)


def test_config_json_roundtrip():
    cfg = preset("two_material_surrogate").replace(dt=0.05, integrator="ssp_ldirk2_332")
    again = config_from_dict(json.loads(cfg.to_json()))
    assert again == cfg


def test_config_hash_tracks_physics_only():
    cfg = preset("marshak")
    assert config_hash(cfg) == config_hash(cfg.replace(out_dir="elsewhere", name="x",
                                                       snapshot_times=[], tracers=[]))
    assert config_hash(cfg) != config_hash(cfg.replace(dt=4e-3))
    assert config_hash(cfg) != config_hash(cfg.replace(face_opacity="min"))


# ---------------------------------------------------------------------------
# time grid and error norm

def test_time_grid():
    g = time_grid(10.0, 8e-3)
    assert g.size == 1250 and np.all(g == 8e-3)
    g = time_grid(1.0, 0.3)
    np.testing.assert_allclose(g, [0.3, 0.3, 0.3, 0.1])
    assert time_grid(10.0, 3e-5).sum() == pytest.approx(10.0, rel=1e-12)


def test_error_norm_identical_and_scaled():
    mesh = Mesh1D.uniform(3, 1.0)
    rng = np.random.default_rng(0)
    E, T = rng.uniform(1, 2, (3, 2)), rng.uniform(1, 2, (3, 2))
    assert error_norm((E, T), (E, T), mesh) == (0.0, 0.0)
    eE, eT = error_norm((E, T), (2 * E, 2 * T), mesh)
    assert eE == pytest.approx(0.5, rel=1e-14) and eT == pytest.approx(0.5, rel=1e-14)


def test_error_norm_two_cells_by_hand():
    mesh = Mesh1D(np.array([1.0, 3.0]))
    E_ref = np.array([[1.0, 2.0], [3.0, 4.0]])
    E = np.array([[1.0, 2.5], [3.0, 3.0]])
    T = np.ones((2, 2))
    # weights dx/2: 0.5, 0.5, 1.5, 1.5
    num = math.sqrt(0.5 * 0.25 + 1.5 * 1.0)
    den = math.sqrt(0.5 * 1 + 0.5 * 4 + 1.5 * 9 + 1.5 * 16)
    eE, eT = error_norm(LOState(E, None, None, T), LOState(E_ref, None, None, T), mesh)
    assert eE == pytest.approx(num / den, rel=1e-14) and eT == 0.0


def test_error_norm_errors():
    mesh = Mesh1D.uniform(2, 1.0)
    with pytest.raises(ValueError):
        error_norm((np.ones((2, 2)), np.ones((2, 2))), (np.zeros((2, 2)), np.ones((2, 2))), mesh)
    with pytest.raises(ValueError):
        error_norm((np.ones((3, 2)), np.ones((3, 2))), (np.ones((2, 2)), np.ones((2, 2))), mesh)


def test_fit_slope():
    d = np.array([0.4, 0.2, 0.1])
    assert fit_slope(d, 3 * d**2) == pytest.approx(2.0)
    assert math.isnan(fit_slope(d[:1], d[:1]))


# ---------------------------------------------------------------------------
# full Marshak run through the driver

@pytest.fixture(scope="module")
def marshak_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("marshak")
    cfg = preset("marshak").replace(tracers=[0.0, 0.02, 0.05])
    return run_simulation(cfg, out_dir=out)


def test_marshak_limex_step_and_sweep_totals(marshak_run):
    s = marshak_run.summary
    assert s["failed_step"] is None
    assert s["n_steps"] == 1250 and s["total_sweeps"] == 1250
    assert np.all(marshak_run.sweeps == 1)


def test_stats_file_matches_summary(marshak_run):
    rows = _read_csv(marshak_run.out_dir / "stats.csv")
    assert tuple(rows[0]) == bench.STATS_HEADER
    body = rows[1:]
    assert len(body) == 1250 and all(len(r) == 6 for r in body)
    assert sum(int(r[2]) for r in body) == marshak_run.summary["total_sweeps"]
    assert sum(int(r[3]) for r in body) == marshak_run.summary["total_lo_solves"]
    assert float(body[-1][1]) == pytest.approx(10.0)


def test_snapshot_files(marshak_run):
    snaps = sorted((marshak_run.out_dir / "snapshots").glob("snapshot_*.csv"))
    assert len(snaps) == 3
    rows = _read_csv(snaps[-1])
    assert tuple(rows[0]) == bench.SNAPSHOT_HEADER
    assert len(rows) == 1 + 2000 and all(len(r) == 5 for r in rows[1:])
    x = np.array([float(r[0]) for r in rows[1:]])
    assert np.all(np.diff(x) > 0)
    T = np.array([float(r[2]) for r in rows[1:]])
    np.testing.assert_array_equal(T, marshak_run.final.T.ravel())
    F = np.array([float(r[4]) for r in rows[1:]])
    np.testing.assert_array_equal(F[0::2], marshak_run.final.F_face[:-1])
    np.testing.assert_array_equal(F[1::2], marshak_run.final.F_face[1:])


def test_snapshot_energy_audit(marshak_run):
    rows = _read_csv(marshak_run.out_dir / "energy.csv")
    assert tuple(rows[0]) == bench.ENERGY_HEADER
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    assert data.shape == (4, 3)
    np.testing.assert_allclose(data[:, 0], [0.0, 1.0, 5.0, 10.0], rtol=1e-12)
    dU = np.diff(data[:, 1])
    dIn = np.diff(data[:, 2])
    np.testing.assert_allclose(dU, dIn, rtol=1e-6)


def test_tracers_written_every_step(marshak_run):
    rows = _read_csv(marshak_run.out_dir / "tracer_0.csv")
    assert tuple(rows[0]) == bench.TRACER_HEADER
    assert len(rows) == 1 + 1251


def test_boundary_tracer_heats_monotonically_early(marshak_run):
    rows = _read_csv(marshak_run.out_dir / "tracer_0.csv")[1:]
    t = np.array([float(r[0]) for r in rows])
    T = np.array([float(r[1]) for r in rows])
    # after the first-step transient, x = 0 heats monotonically up to 1 ns
    early = (t >= 0.1) & (t <= 1.0)
    assert np.all(np.diff(T[early]) >= 0)
    # and agrees with a fine-step run at 1 ns
    cfg = preset("marshak").replace(dt=1e-3, t_final=1.0, snapshot_times=[], tracers=[],
                                    integrator="implicit_holo")
    fine = run_simulation(cfg, write=False)
    assert T[np.argmin(abs(t - 1.0))] == pytest.approx(fine.final.T[0, 0], rel=1e-2)


def test_wave_heats_the_boundary_and_stays_cold_ahead(marshak_run):
    T = marshak_run.final.T
    assert T[0, 0] > 900.0 and T[-1, 1] < 1.0
    assert np.all(np.isfinite(T)) and T.min() > 0


def test_summary_json(marshak_run):
    s = json.loads((marshak_run.out_dir / "summary.json").read_text())
    assert s["total_sweeps"] == 1250 and s["config"]["name"] == "marshak"
    assert s["energy_final"] - s["energy_initial"] == pytest.approx(s["net_inflow_integrated"],
                                                                     rel=1e-9)


# ---------------------------------------------------------------------------
# small runs

def test_equilibrium_run_keeps_its_state(tmp_path):
    cfg = ProblemConfig(dt=0.05, n_cells=20, length=1.0, T0=50.0, T_left=50.0, T_right=50.0,
                        t_final=0.5, layers=[Layer(1.0, 0.2, 0.0, 1e12)],
                        snapshot_times=[0.25, 0.5])
    res = run_simulation(cfg, out_dir=tmp_path)
    for snap in sorted((tmp_path / "snapshots").glob("*.csv")):
        rows = _read_csv(snap)[1:]
        np.testing.assert_allclose([float(r[2]) for r in rows], 50.0, rtol=1e-9)
    assert res.summary["failed_step"] is None


def test_deterministic_runs_are_byte_identical(tmp_path):
    cfg = config_from_dict({**SMALL, "deterministic": True})
    run_simulation(cfg, out_dir=tmp_path / "a")
    run_simulation(cfg, out_dir=tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert len(files) == 6
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    rows = _read_csv(tmp_path / "a" / "stats.csv")[1:]
    assert all(float(r[5]) == 0.0 for r in rows)


def test_csv_floats_round_trip(tmp_path):
    res = run_simulation(config_from_dict(SMALL), out_dir=tmp_path)
    rows = _read_csv(tmp_path / "snapshots" / "snapshot_001.csv")[1:]
    E = np.array([float(r[3]) for r in rows]).reshape(-1, 2)
    np.testing.assert_array_equal(E, res.final.E)


def test_stepper_failure_is_recorded(tmp_path):
    cfg = config_from_dict({**SMALL, "max_lo_iter": 2})
    res = run_simulation(cfg, out_dir=tmp_path)
    assert res.failed and res.summary["failed_step"] == 0
    assert "LOConvergenceError" in res.summary["error"]
    assert json.loads((tmp_path / "summary.json").read_text())["failed_step"] == 0


def test_reference_cache(tmp_path, monkeypatch):
    cfg = config_from_dict(SMALL)
    a = reference_solution(cfg, tmp_path)
    assert len(list(tmp_path.glob("ref_*.npz"))) == 1

    def boom(*args, **kw):
        raise AssertionError("cache miss")

    monkeypatch.setattr(bench, "run_simulation", boom)
    b = reference_solution(cfg.replace(out_dir="other", name="renamed"), tmp_path)
    np.testing.assert_array_equal(a.E, b.E)
    np.testing.assert_array_equal(a.T, b.T)


def test_convergence_against_itself_is_exact(tmp_path):
    cfg = config_from_dict(SMALL)
    res = convergence_study(cfg, [0.02], "limex_euler", "limex_euler", reference_dt=0.02,
                            cache_dir=tmp_path / "cache", out_dir=tmp_path / "conv")
    assert res.error_E[0] == 0.0 and res.error_T[0] == 0.0
    rows = _read_csv(tmp_path / "conv" / "convergence.csv")
    assert tuple(rows[0]) == ("dt", "error_E", "error_T", "stable")


def test_convergence_study_orders_on_a_short_run(tmp_path):
    cfg = config_from_dict({**SMALL, "t_final": 0.4})
    res = convergence_study(cfg, [0.04, 0.02, 0.01], "limex_euler",
                            cache_dir=tmp_path, workers=2)
    assert res.stable.all()
    assert np.all(np.diff(res.error_E) < 0)
    assert res.reference_dt == pytest.approx(0.01 / 8)


def test_convergence_marks_failed_members_unstable(tmp_path, monkeypatch):
    cfg = config_from_dict(SMALL)
    real = bench._member

    def flaky(c):
        final, summary = real(c)
        if c.dt == 0.04:
            summary = {**summary, "failed_step": 3, "error": "forced"}
        return final, summary

    monkeypatch.setattr(bench, "_member", flaky)
    res = convergence_study(cfg, [0.04, 0.02, 0.01], "limex_euler", cache_dir=tmp_path)
    assert res.stable.tolist() == [False, True, True]
    assert np.isnan(res.error_E[0])
    assert res.slope_E == pytest.approx(fit_slope(res.dts[1:], res.error_E[1:]))


def test_convergence_requires_descending_steps():
    with pytest.raises(ValueError):
        convergence_study(config_from_dict(SMALL), [0.01, 0.02])
    with pytest.raises(ValueError):
        convergence_study(config_from_dict(SMALL), [])


# ---------------------------------------------------------------------------
# command line

def test_cli_presets(capsys):
    assert cli.main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "marshak" in out and "two_material_surrogate" in out
    assert cli.main(["presets", "--show", "marshak"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["n_cells"] == 1000
    assert cli.main(["presets", "--show", "nope"]) == 1


def test_cli_run_with_overrides(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(cfg), "--dt", "0.01", "--integrator",
                     "h_ldirk2_222", "--bc", "full", "--face-opacity", "harmonic",
                     "--out", str(out)])
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    c = s["config"]
    assert (c["dt"], c["integrator"], c["bc_mode"], c["face_opacity"]) == \
        (0.01, "h_ldirk2_222", "full", "harmonic")
    assert s["total_sweeps"] == 2 * 20
    assert (out / "stats.csv").exists() and (out / "tracer_1.csv").exists()


@pytest.mark.parametrize("data", [{"dt": 0.1, "bogus": 1}, {"n_cells": 5},
                                  {"dt": 5.0, "t_final": 1.0}])
def test_cli_config_errors_exit_1(tmp_path, data, capsys):
    assert cli.main(["run", "--config", str(_write(tmp_path, data))]) == 1
    assert "config error" in capsys.readouterr().err


def test_cli_missing_file_exits_1(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "absent.json")]) == 1


def test_cli_stepper_failure_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, {**SMALL, "max_lo_iter": 2})
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "stepper failure" in capsys.readouterr().err


def test_cli_converge(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "conv"
    assert cli.main(["converge", "--config", str(cfg), "--dts", "0.04,0.02",
                     "--integrator", "limex_euler", "--out", str(out)]) == 0
    assert "slope_E" in capsys.readouterr().out
    assert (out / "convergence.csv").exists() and list((out / "cache").glob("ref_*.npz"))
    assert cli.main(["converge", "--config", str(cfg), "--dts", "0.02,0.04",
                     "--out", str(out)]) == 1
    assert cli.main(["converge", "--config", str(cfg), "--dts", "a,b", "--out", str(out)]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "simex_trt.cli", "presets"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "marshak" in proc.stdout
