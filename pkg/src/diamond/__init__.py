"""Multisymplectic diamond schemes for ``K z_t + L z_x = grad S(z)``."""
from .system import (InvalidSystemError, MultiHamiltonianSystem, WaveSystem, make_linear_system,
                     make_wave_system, sine_gordon, validate_system)
from .tableau import GaussTableau, build_B, gauss_tableau, max_stable_dt, solvability_table
from .mesh import MeshParams, ZigzagState, node_coords, square_coords
from .nonlinear import SolverConfig, SolverError
from .simple_scheme import (CornerGrid, simple_diamond_update, simple_init, simple_init_exact,
                            simple_run, simple_wave_update)
from .rk_scheme import (EdgeData, StageBlock, reduced_wave_solve, rk_half_step, rk_init, rk_run,
                        solve_stages)
from .conservation import propagate_tangents, trajectory_residuals
from .dispersion import DiscreteGeometry, P_simple, h_map, wave_problem
from .harness_cli import (ConvergenceTable, RunConfig, breather, breather_z, converge_rk,
                          converge_simple, error_norm)

__version__ = "0.1.0"
