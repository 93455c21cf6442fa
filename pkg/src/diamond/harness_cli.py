"""Experiment driver: breather, error norm, convergence studies and the CLI."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .conservation import propagate_tangents, trajectory_residuals
from .dispersion import (CUBIC_LAMBDAS, LINEAR_LAMBDAS, DispersionProblem, cubic_problem,
                         emit_dispersion_curves, wave_problem)
from .mesh import MeshParams, ZigzagState, node_coords
from .nonlinear import SolverConfig, SolverError
from .parallel import default_threads
from .rk_scheme import rk_init, rk_run
from .simple_scheme import (CornerGrid, simple_init, simple_init_exact, simple_run,
                            simple_wave_update)
from .system import make_linear_system, make_wave_system, sine_gordon, validate_system
from .tableau import MAX_STAGES, build_B, gauss_tableau, max_stable_dt
from .nonlinear import min_singular_value

SQRT2 = math.sqrt(2.0)


def breather(x, t):
    """Breather ``u = 4 atan(sin(t/sqrt2) / cosh(x/sqrt2))`` and ``(u_t, u_x)``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    s = np.sin(t / SQRT2)
    c = np.cosh(x / SQRT2)
    q = s / c
    D = 1.0 + q * q
    u = 4.0 * np.arctan(q)
    u_t = 4.0 * np.cos(t / SQRT2) / (SQRT2 * c) / D
    u_x = -4.0 * s * np.sinh(x / SQRT2) / (SQRT2 * c * c) / D
    return u, u_t, u_x


def breather_z(x, t):
    """State ``z = (u, u_t, u_x)`` stacked on the last axis."""
    u, ut, ux = breather(x, t)
    return np.stack(np.broadcast_arrays(u, ut, ux), axis=-1)


def breather_z_t(x, t=0.0):
    """Time derivative of ``z`` for the breather: ``(u_t, u_tt, u_xt)``.

    ``u_tt = u_xx - sin u`` is evaluated from closed-form second derivatives.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    # u = 4 atan(q), q = s/c
    s, co = np.sin(t / SQRT2), np.cos(t / SQRT2)
    c, sh = np.cosh(x / SQRT2), np.sinh(x / SQRT2)
    q = s / c
    q_t = co / (SQRT2 * c)
    q_x = -s * sh / (SQRT2 * c * c)
    q_tt = -s / (2 * c)
    q_xt = -co * sh / (2 * c * c)
    D = 1 + q * q
    u_t = 4 * q_t / D
    u_tt = 4 * (q_tt / D - 2 * q * q_t**2 / D**2)
    u_xt = 4 * (q_xt / D - 2 * q * q_t * q_x / D**2)
    return np.stack(np.broadcast_arrays(u_t, u_tt, u_xt), axis=-1)


def error_norm(x, t, u_numeric, exact_u, a, b):
    """Discrete 2-norm ``sqrt((b-a)/N * sum (u_i - u(x_i, t_i))^2)``, ``N`` = sample count."""
    u_numeric = np.asarray(u_numeric, dtype=float).ravel()
    err = u_numeric - np.asarray(exact_u(np.asarray(x).ravel(), np.asarray(t).ravel()))
    return float(math.sqrt((b - a) / u_numeric.size * float(np.sum(err * err))))


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)  # (N, dt, E)
    floor: float = 1e-12

    def fitted_slope(self) -> float:
        """Least-squares slope of ``log E`` against ``log dt``."""
        data = sorted(self.rows, key=lambda r: -r[1])
        use = [(dt, E) for _, dt, E in data if E >= self.floor]
        if len(use) < 2:
            return float("nan")
        ldt = np.log([d for d, _ in use])
        lE = np.log([e for _, e in use])
        return float(np.polyfit(ldt, lE, 1)[0])

    def ratios(self):
        data = sorted(self.rows, key=lambda r: -r[1])
        return [data[i][2] / data[i + 1][2] for i in range(len(data) - 1)]




def _breather_u(x, t):
    return breather(x, t)[0]


LADDER = (40, 80, 160, 320, 640, 1280)


def _steps(T, dt):
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a whole number of steps of dt={dt}")
    return steps


def _default_T(Ns, lam, a, b):
    return 2 * lam * (b - a) / min(Ns)


def converge_simple(Ns=LADDER, lam=0.5, T=None, init="exact", a=-30.0, b=30.0,
                    cfg=SolverConfig(), threads=1, update=None):
    """Error of the simple scheme on the breather for each ``N`` in ``Ns``.

    ``T`` defaults to two steps of the coarsest run and must be a whole
    number of steps for every ``N``.
    """
    T = _default_T(Ns, lam, a, b) if T is None else T
    sg = sine_gordon()
    table = ConvergenceTable()
    for N in Ns:
        params = MeshParams.from_lambda(N, lam, a, b)
        steps = _steps(T, params.dt)
        if init == "exact":
            start = simple_init_exact(breather_z, params)
        elif init == "euler":
            start = simple_init(lambda x: breather_z(x, 0.0), breather_z_t, params)
        else:
            raise ValueError(f"unknown init mode {init!r}")
        lower, _ = simple_run(sg, params, start, steps, cfg, threads,
                              update or simple_wave_update)
        x, t = lower.coords(params)
        table.rows.append((N, params.dt, error_norm(x, t, lower.values[:, 0], _breather_u, a, b)))
    return table


def converge_rk(r, Ns=LADDER, lam=0.5, T=None, init="exact", a=-30.0, b=30.0,
                cfg=SolverConfig(), threads=1, sample="edges"):
    """Error of the r-stage scheme on the breather for each ``N`` in ``Ns``.

    ``sample="edges"`` uses all ``2 r N`` edge nodes of the final zig-zag, each
    compared with the exact solution at its own ``(x, t)``.  ``sample="corners"``
    uses the ``N`` extended corner values, which lie on ``t = T``.
    """
    if sample not in ("edges", "corners"):
        raise ValueError(f"unknown sample mode {sample!r}")
    T = _default_T(Ns, lam, a, b) if T is None else T
    sg = sine_gordon()
    tab = gauss_tableau(r)
    table = ConvergenceTable()
    for N in Ns:
        params = MeshParams.from_lambda(N, lam, a, b, r)
        steps = _steps(T, params.dt)
        state = rk_init(lambda x: breather_z(x, 0.0), breather_z_t, tab, params, init, breather_z)
        state = rk_run(sg, tab, params, state, steps, cfg, threads)
        x, t = node_coords(params, state.level, wrap=True)
        cols = slice(0, 1) if sample == "corners" else slice(1, None)
        table.rows.append((N, params.dt, error_norm(x[:, cols], t[:, cols],
                                                    state.values[:, cols, 0], _breather_u, a, b)))
    return table


# configuration

class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    system: str = "sine_gordon"
    system_file: str | None = None
    scheme: str = "simple"
    r: int = 1
    N: int = 40
    a: float = -30.0
    b: float = 30.0
    lam: float = 0.5
    steps: int | None = None
    T: float | None = None
    init: str | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    threads: int = 1
    seed: int = 0
    output: str | None = None

    def validate(self):
        if self.system not in ("sine_gordon", "linear_wave", "custom_file"):
            raise ConfigError(f"unknown system {self.system!r}")
        if self.system == "custom_file" and not self.system_file:
            raise ConfigError("system custom_file needs system_file")
        if self.scheme not in ("simple", "rk"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if not 1 <= self.r <= MAX_STAGES:
            raise ConfigError(f"r must be in 1..{MAX_STAGES}")
        if not self.b > self.a:
            raise ConfigError("domain must satisfy b > a")
        if self.init not in (None, "exact", "euler"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.steps is not None and self.steps < 0:
            raise ConfigError("steps must be nonnegative")
        return self

    def params(self):
        return MeshParams.from_lambda(self.N, self.lam, self.a, self.b,
                                      self.r if self.scheme == "rk" else 1)

    def n_steps(self):
        if self.steps is not None:
            return self.steps
        dt = self.params().dt
        T = 2 * dt if self.T is None else self.T
        return _steps(T, dt)


_KEY_ALIASES = {"lambda": "lam"}


def load_config(path, overrides):
    """RunConfig from an optional JSON file, then ``overrides`` (non-None values)."""
    data = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data = {_KEY_ALIASES.get(k, k): v for k, v in data.items()}
    data.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    solver = data.pop("solver", None)
    try:
        cfg = RunConfig(**data)
        if isinstance(solver, dict):
            cfg.solver = SolverConfig(**solver)
        elif solver is not None:
            cfg.solver = solver
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_system(cfg: RunConfig):
    if cfg.system == "sine_gordon":
        return sine_gordon()
    if cfg.system == "linear_wave":
        return make_wave_system(lambda u: 0.0 * u, lambda u: 0.0 * u, lipschitz_const=0.0,
                                V=lambda u: 0.0 * u)
    try:
        with open(cfg.system_file) as fh:
            data = json.load(fh)
        return make_linear_system(data["K"], data["L"], data["S_matrix"])
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad system file {cfg.system_file}: {exc}") from exc


def _gaussian_wave(x, t):
    """Right-moving pulse ``u = exp(-(x - t)^2)`` of the free wave equation."""
    u = np.exp(-(np.asarray(x) - np.asarray(t)) ** 2)
    du = -2 * (np.asarray(x) - np.asarray(t)) * u
    return np.stack(np.broadcast_arrays(u, -du, du), axis=-1)


def _initial_data(cfg, sys):
    """``(z0, z0_t, z_exact)`` for the configured system."""
    if cfg.system == "sine_gordon":
        return (lambda x: breather_z(x, 0.0)), breather_z_t, breather_z
    if cfg.system == "linear_wave":
        return (lambda x: _gaussian_wave(x, 0.0)), _gaussian_wave_t, _gaussian_wave
    n = sys.n
    return ((lambda x: np.exp(-np.asarray(x)[:, None] ** 2) * np.ones(n)),
            (lambda x: np.zeros((len(x), n))), None)


def _gaussian_wave_t(x):
    """``z_t`` of the right-moving pulse at ``t = 0``."""
    x = np.asarray(x, dtype=float)
    g = np.exp(-x * x)
    g2 = (4 * x * x - 2) * g
    return np.stack([2 * x * g, g2, -g2], axis=-1)


# output

def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    finally:
        if path:
            fh.close()


def snapshot_rows(params, state):
    """CSV rows ``(level, diamond, slot, x, t, z...)`` of a CornerGrid or ZigzagState."""
    rows = []
    if isinstance(state, CornerGrid):
        x, t = state.coords(params)
        for d in range(params.N):
            rows.append((state.level, d, 0, x[d], t[d], *state.values[d]))
        return rows
    x, t = node_coords(params, state.level, wrap=True)
    for d in range(params.N):
        for s in range(state.values.shape[1]):
            rows.append((state.level, d, s, x[d, s], t[d, s], *state.values[d, s]))
    return rows


def simulate(cfg: RunConfig):
    """Run the configured scheme; returns ``(params, final state)``."""
    sys_ = load_system(cfg)
    params = cfg.params()
    z0, z0_t, exact = _initial_data(cfg, sys_)
    init = cfg.init or ("exact" if exact is not None else "euler")
    if init == "exact" and exact is None:
        raise ConfigError("init exact needs a system with a known solution")
    steps = cfg.n_steps()
    if cfg.scheme == "simple":
        start = simple_init_exact(exact, params) if init == "exact" else simple_init(z0, z0_t, params)
        update = simple_wave_update if hasattr(sys_, "f") else None
        lower, _ = simple_run(sys_, params, start, steps, cfg.solver, cfg.threads, update)
        return params, lower
    tab = gauss_tableau(cfg.r)
    state = rk_init(z0, z0_t, tab, params, init, exact)
    return params, rk_run(sys_, tab, params, state, steps, cfg.solver, cfg.threads)


# subcommands

def cmd_run(args, cfg):
    params, state = simulate(cfg)
    n = state.values.shape[-1]
    write_csv(cfg.output, ["level", "diamond", "slot", "x", "t"] + [f"z_{k}" for k in range(n)],
              snapshot_rows(params, state))
    return 0


def cmd_converge(args, cfg):
    Ns = tuple(args.N0 * 2**k for k in range(args.levels))
    init = cfg.init or "exact"
    if cfg.scheme == "simple":
        table = converge_simple(Ns, cfg.lam, cfg.T, init, cfg.a, cfg.b, cfg.solver, cfg.threads)
    else:
        table = converge_rk(cfg.r, Ns, cfg.lam, cfg.T, init, cfg.a, cfg.b, cfg.solver,
                            cfg.threads, args.sample)
    rows = sorted(table.rows, key=lambda row: -row[1])
    write_csv(cfg.output, ["N", "dt", "E"], rows)
    summary = {"config": {"scheme": cfg.scheme, "r": cfg.r, "lambda": cfg.lam, "a": cfg.a,
                          "b": cfg.b, "N": list(Ns), "init": init, "T": cfg.T,
                          "sample": args.sample if cfg.scheme == "rk" else "corners"},
               "fitted_slope": table.fitted_slope(), "ratios": table.ratios()}
    text = json.dumps(summary, indent=2)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=sys.stderr)
    return 0


def cmd_dispersion(args, cfg):
    if args.disp_system == "wave":
        prob, lams = wave_problem(), LINEAR_LAMBDAS
    elif args.disp_system == "cubic":
        prob, lams = cubic_problem(), CUBIC_LAMBDAS
    else:
        if not args.matrix_file:
            raise ConfigError("--matrix-file is required for linear-matrix-file")
        try:
            with open(args.matrix_file) as fh:
                data = json.load(fh)
            prob = DispersionProblem(np.array(data["K"], float), np.array(data["L"], float),
                                     np.array(data["S_matrix"], float))
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"bad matrix file: {exc}") from exc
        lams = LINEAR_LAMBDAS
    if args.disp_lambda:
        lams = tuple(args.disp_lambda)
    rows = emit_dispersion_curves(prob, args.dx, lams, args.resolution)
    write_csv(cfg.output, ["curve_id", "xi", "omega", "x", "y"], rows)
    return 0


def cmd_solvability(args, cfg):
    rows = []
    for r in range(1, args.rmax + 1):
        tab = gauss_tableau(r)
        for lam in np.linspace(0.0, 1.0, args.lambda_grid):
            B = build_B(tab, lam)
            rows.append((r, float(lam), min_singular_value(B.B), max_stable_dt(B, 1.0)))
    write_csv(cfg.output, ["r", "lambda", "min_singular_value", "max_stable_dt"], rows)
    return 0


def cmd_conservation(args, cfg):
    sys_ = load_system(cfg)
    if sys_.hess_S is None:
        raise ConfigError("conservation check needs a system with a Hessian")
    params = cfg.params()
    rng = np.random.default_rng(cfg.seed)
    z0, z0_t, exact = _initial_data(cfg, sys_)
    init = cfg.init or ("exact" if exact is not None else "euler")
    levels = 2 * cfg.n_steps()
    if cfg.scheme == "simple":
        start = simple_init_exact(exact, params) if init == "exact" else simple_init(z0, z0_t, params)
        shape = start[0].values.shape
        xi0 = (rng.standard_normal(shape), rng.standard_normal(shape))
        eta0 = (rng.standard_normal(shape), rng.standard_normal(shape))
        traj = propagate_tangents("simple", sys_, params, start, xi0, eta0, levels,
                                  cfg=cfg.solver)
        tab, name = None, "residual_simple"
    else:
        tab = gauss_tableau(cfg.r)
        start = rk_init(z0, z0_t, tab, params, init, exact)
        xi0 = rng.standard_normal(start.values.shape)
        eta0 = rng.standard_normal(start.values.shape)
        traj = propagate_tangents("rk", sys_, params, start, xi0, eta0, levels, tab=tab,
                                  cfg=cfg.solver)
        name = "residual_rk"
    rows = [(level, d, float(res[d]))
            for level, res in trajectory_residuals(traj, sys_, params, tab)
            for d in range(len(res))]
    write_csv(cfg.output, ["level", "diamond", name], rows)
    return 0


def tableau_diagnostics(rmax=MAX_STAGES, tol=1e-12):
    """Order-condition and symmetry failures of the Gauss tableaux up to ``rmax``."""
    out = []
    for r in range(1, rmax + 1):
        tab = gauss_tableau(r)
        for q in range(1, 2 * r + 1):
            if abs(tab.b @ tab.c ** (q - 1) - 1 / q) > tol:
                out.append(f"r={r}: quadrature condition q={q} fails")
        for q in range(1, r + 1):
            if np.abs(tab.A @ tab.c ** (q - 1) - tab.c**q / q).max() > tol:
                out.append(f"r={r}: collocation condition q={q} fails")
        if np.abs(tab.c + tab.c[::-1] - 1).max() > tol:
            out.append(f"r={r}: nodes not symmetric")
        if np.abs(tab.A @ tab.A_inv - np.eye(r)).max() > tol:
            out.append(f"r={r}: A_inv inaccurate")
    return out


def cmd_check(args, cfg):
    sys_ = load_system(cfg)
    problems = validate_system(sys_) + tableau_diagnostics(args.rmax)
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return 1 if problems else 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of RunConfig fields; flags override it")
    common.add_argument("--system", choices=["sine_gordon", "linear_wave", "custom_file"])
    common.add_argument("--system-file", dest="system_file")
    common.add_argument("--scheme", choices=["simple", "rk"])
    common.add_argument("--r", type=int)
    common.add_argument("--N", type=int)
    common.add_argument("--a", type=float)
    common.add_argument("--b", type=float)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--steps", type=int)
    common.add_argument("--T", type=float)
    common.add_argument("--init", choices=["exact", "euler"])
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--threads", type=int, help="worker threads (default $DIAMOND_THREADS or 1)")
    common.add_argument("--seed", type=int)
    common.add_argument("--output", "-o")

    p = argparse.ArgumentParser(prog="diamond", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate and write a snapshot CSV")
    c = sub.add_parser("converge", parents=[common], help="convergence study on the breather")
    c.add_argument("--N0", type=int, default=40)
    c.add_argument("--levels", type=int, default=6)
    c.add_argument("--sample", choices=["edges", "corners"], default="edges")
    c.add_argument("--summary", help="JSON summary path (default: standard error)")
    d = sub.add_parser("dispersion", parents=[common], help="dispersion curves CSV")
    d.add_argument("--disp-system", dest="disp_system", default="wave",
                   choices=["wave", "linear-matrix-file", "cubic"])
    d.add_argument("--matrix-file")
    d.add_argument("--disp-lambda", dest="disp_lambda", type=float, action="append")
    d.add_argument("--dx", type=float, default=1.0)
    d.add_argument("--resolution", type=int, default=512)
    s = sub.add_parser("solvability", parents=[common], help="min singular value of B")
    s.add_argument("--rmax", type=int, default=5)
    s.add_argument("--lambda-grid", dest="lambda_grid", type=int, default=21)
    sub.add_parser("conservation", parents=[common], help="conservation residuals per diamond")
    k = sub.add_parser("check", parents=[common], help="validate the system and tableaux")
    k.add_argument("--rmax", type=int, default=MAX_STAGES)
    return p


COMMANDS = {"run": cmd_run, "converge": cmd_converge, "dispersion": cmd_dispersion,
            "solvability": cmd_solvability, "conservation": cmd_conservation, "check": cmd_check}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: getattr(args, k, None) for k in
                 ("system", "system_file", "scheme", "r", "N", "a", "b", "lam", "steps", "T",
                  "init", "threads", "seed", "output")}
    if overrides["threads"] is None:
        overrides["threads"] = default_threads()
    try:
        cfg = load_config(args.config, overrides)
        if args.tol is not None or args.max_iter is not None:
            cfg.solver = dataclasses.replace(
                cfg.solver, **{k: v for k, v in (("tol", args.tol), ("max_iter", args.max_iter))
                               if v is not None})
        if args.command == "dispersion" and (args.resolution < 2 or args.dx <= 0):
            raise ConfigError("resolution must be at least 2 and dx positive")
        if args.command == "solvability" and not (1 <= args.rmax <= MAX_STAGES
                                                  and args.lambda_grid >= 2):
            raise ConfigError("rmax out of range or lambda grid too small")
        if args.command == "converge" and (args.N0 < 1 or args.levels < 1):
            raise ConfigError("N0 and levels must be positive")
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
