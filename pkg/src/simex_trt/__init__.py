"""Gray 1-D S_N thermal radiative transfer with HOLO moment acceleration and
semi-implicit (SIMEX) Runge-Kutta time integration."""

from .bench import (ConvergenceResult, RunOutput, SweepEconomics, build_context, build_mesh,
                    config_hash, convergence_study, error_norm, reference_solution, run_simulation,
                    sweep_economics)
from .config import ConfigError, Layer, ProblemConfig, load_config, preset
from .integrators import (INTEGRATORS, IterationError, StepStats, TRTContext,
                          implicit_holo_step, make_integrator, ode_order_probe, simex_rk_step,
                          simex_step, unaccelerated_step)
from .lo import (GammaSet, LOConvergenceError, LOStageProblem, boundary_closure, compute_gamma,
                 lo_stage_solve, newton_temperature)
from .physics import (DEFAULT_CONSTANTS, AngularQuadrature, HOState, LOState, MaterialModel,
                      Mesh1D, PhysConstants, PowerLawOpacity, build_quadrature,
                      equilibrium_state, face_opacity, opacity, planck_theta)
from .tableaux import TABLEAUX, ButcherPair, tableau
from .transport import (SweepError, dIdt_moments, emission_source, ho_moments,
                        stage_transport_solve, sweep)

__version__ = "0.1.0"

__all__ = [
    "AngularQuadrature", "ButcherPair", "ConfigError", "ConvergenceResult", "DEFAULT_CONSTANTS",
    "GammaSet", "build_context", "build_mesh", "HOState", "INTEGRATORS", "IterationError", "LOConvergenceError",
    "LOStageProblem", "LOState", "Layer", "MaterialModel", "Mesh1D", "PhysConstants",
    "PowerLawOpacity", "ProblemConfig", "RunOutput", "StepStats", "SweepEconomics",
    "SweepError", "TABLEAUX", "TRTContext", "boundary_closure", "build_quadrature",
    "compute_gamma", "config_hash", "convergence_study", "dIdt_moments", "emission_source",
    "equilibrium_state", "error_norm", "face_opacity", "ho_moments", "implicit_holo_step",
    "lo_stage_solve", "load_config", "make_integrator", "newton_temperature",
    "ode_order_probe", "opacity", "planck_theta", "preset", "reference_solution",
    "run_simulation", "simex_rk_step", "simex_step", "stage_transport_solve", "sweep",
    "sweep_economics", "tableau", "unaccelerated_step",
]
