"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 solver
failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import benchmark, io, verify
from .angular import AngularBasis
from .errors import ConfigurationError, PnFemError, SolverError
from .mesh import TriMesh, read_mesh, unit_square_mesh
from .operators import SPATIAL_AXES, TransportSystem, build_system, mass_norm
from .simulation import TransientConfig, run_transient
from .solvers import SolverConfig, solve_stationary

log = logging.getLogger("pnfem")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3


@dataclass
class RunConfig:
    """Flat run parameters; list-valued fields hold sweep values for studies."""

    sigma_a: float = 0.01
    sigma_s: float = 1.0
    moments: list[float] | None = None   # sigma_{s,l}; overrides sigma_s when set
    N: list[int] | None = None
    n_max: int | None = None
    divisions: list[int] | None = None
    mesh_path: str | None = None
    tol: float = 1e-10
    max_iterations: int = 10000
    preconditioner: str = "jacobi"
    tau: list[float] | None = None
    t_end: float | None = None
    record_every: int = 1
    out: str = "out"
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (isinstance(self.sigma_a, (int, float)) and self.sigma_a > 0):
            raise ConfigurationError("sigma_a must be > 0")
        if self.moments is not None:
            if not self.moments:
                raise ConfigurationError("moments must not be empty")
            self.moments = [float(v) for v in self.moments]
        elif self.sigma_s < 0:
            raise ConfigurationError("sigma_s must be >= 0")
        for name in ("N", "divisions", "tau"):
            vals = getattr(self, name)
            if vals is None:
                continue
            if isinstance(vals, (int, float)):
                vals = [vals]
            setattr(self, name, list(vals))
        if self.N is not None:
            self.N = [int(v) for v in self.N]
            if any(v < 1 or v % 2 == 0 for v in self.N):
                raise ConfigurationError(f"N must be odd and positive, got {self.N}")
        if self.divisions is not None:
            self.divisions = [int(v) for v in self.divisions]
            if any(v < 1 for v in self.divisions):
                raise ConfigurationError("divisions must be >= 1")
        if self.tau is not None:
            self.tau = [float(v) for v in self.tau]
            if any(not v > 0 for v in self.tau):
                raise ConfigurationError("tau must be > 0")
        if self.t_end is not None and not self.t_end > 0:
            raise ConfigurationError("t_end must be > 0")
        if self.n_max is not None and self.n_max < 0:
            raise ConfigurationError("n_max must be >= 0")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")
        self.solver()  # validates tolerance, iterations, preconditioner
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")

    @property
    def sigma_t(self) -> float:
        s0 = self.moments[0] if self.moments is not None else self.sigma_s
        return self.sigma_a + s0

    def scattering_moments(self) -> list[float]:
        return self.moments if self.moments is not None else [self.sigma_s]

    def solver(self) -> SolverConfig:
        return SolverConfig(self.tol, self.max_iterations, self.preconditioner)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{p}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{p}: expected a JSON object")
        return cls.from_dict(data)


def _single(values, name, default):
    if values is None:
        return default
    if len(values) != 1:
        raise ConfigurationError(f"this command takes a single {name}, got {values}")
    return values[0]


def _mesh(cfg: RunConfig, default_divisions: int) -> TriMesh:
    if cfg.mesh_path:
        return read_mesh(cfg.mesh_path)
    return unit_square_mesh(_single(cfg.divisions, "divisions", default_divisions))


def _system(cfg: RunConfig, mesh: TriMesh, N: int) -> TransportSystem:
    return build_system(mesh, N, cfg.sigma_t, moments=cfg.scattering_moments())


def _manufactured(cfg: RunConfig, n_max: int) -> benchmark.ManufacturedSolution:
    if cfg.moments is not None and any(cfg.moments[1:]):
        raise ConfigurationError("the manufactured benchmark needs an isotropic kernel")
    s0 = cfg.moments[0] if cfg.moments is not None else cfg.sigma_s
    return benchmark.ManufacturedSolution(n_max, cfg.sigma_a, s0)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_stationary(cfg: RunConfig, args) -> int:
    N = _single(cfg.N, "N", 3)
    n_max = cfg.n_max if cfg.n_max is not None else 2
    mesh = _mesh(cfg, 16)
    sys_ = _system(cfg, mesh, N)
    sol = _manufactured(cfg, n_max)
    # Steady limit of the benchmark source (g = 1, g' = 0).
    load = benchmark.ManufacturedLoad(sol, sys_)(math.inf)
    out = _outdir(cfg)
    with open(out / "cg_log.csv", "w") if args.verbose else contextlib.nullcontext() as stream:
        x, info = solve_stationary(sys_, load, cfg.solver(), return_info=True,
                                   log_stream=stream)
    errs = benchmark.ErrorEvaluator(sol, sys_).errors(math.inf, x)
    summary = {
        "N": N, "n_max": n_max, "vertices": mesh.n_vertices, "triangles": mesh.n_triangles,
        "dofs": sys_.n_dofs, "iterations": info.iterations,
        "relative_residual": info.final_residual / info.load_norm if info.load_norm else 0.0,
        "mass_norm": mass_norm(sys_, x),
        "e_plus": errs.e_plus, "E_plus": errs.E_plus, "e_minus": errs.e_minus,
    }
    (out / "stationary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    io.write_scalar_flux(x, mesh, out / "stationary.vtk")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_transient(cfg: RunConfig, args) -> int:
    N = _single(cfg.N, "N", 3)
    n_max = cfg.n_max if cfg.n_max is not None else 2
    tau = _single(cfg.tau, "tau", 1e-2)
    t_end = cfg.t_end if cfg.t_end is not None else 1.0
    mesh = _mesh(cfg, 16)
    sys_ = _system(cfg, mesh, N)
    sol = _manufactured(cfg, n_max)
    obs = benchmark.MaxErrorObserver(benchmark.ErrorEvaluator(sol, sys_))
    res = run_transient(sys_, TransientConfig(tau, t_end, cfg.record_every),
                        benchmark.ManufacturedLoad(sol, sys_), None, cfg.solver(),
                        observer=obs, keep_snapshots=False)
    out = _outdir(cfg)
    with open(out / "energy.csv", "w") as fh:
        res.trace.write_csv(fh)
    errs = obs.result()
    summary = {"N": N, "n_max": n_max, "tau": tau, "t_end": t_end, "dofs": sys_.n_dofs,
               "steps": TransientConfig(tau, t_end).n_steps,
               "e_plus": errs.e_plus, "E_plus": errs.E_plus, "e_minus": errs.e_minus}
    (out / "transient.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    io.write_scalar_flux(res.final, mesh, out / "transient_final.vtk")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_study(cfg: RunConfig, args) -> int:
    kind = args.kind
    base, default_values = benchmark.STUDY_DEFAULTS[kind]
    sweep = {"angular": cfg.N, "spatial": cfg.divisions, "temporal": cfg.tau}[kind]
    values = tuple(sweep) if sweep is not None else default_values
    changes = {"solver": cfg.solver(), "sigma_a": cfg.sigma_a,
               "sigma_s": _manufactured(cfg, 0).sigma_s}
    if cfg.n_max is not None:
        changes["n_max"] = cfg.n_max
    if cfg.t_end is not None:
        changes["t_end"] = cfg.t_end
    if cfg.mesh_path:
        if kind == "spatial":
            raise ConfigurationError("a spatial study sweeps structured meshes; drop mesh_path")
        changes["mesh_path"] = cfg.mesh_path
    if kind != "angular" and cfg.N is not None:
        changes["N"] = _single(cfg.N, "N", base.N)
    if kind != "spatial" and cfg.divisions is not None:
        changes["divisions"] = _single(cfg.divisions, "divisions", base.divisions)
    if kind != "temporal" and cfg.tau is not None:
        changes["tau"] = _single(cfg.tau, "tau", base.tau)
    report = benchmark.run_study(kind, values, dataclasses.replace(base, **changes),
                                 jobs=cfg.jobs)
    text = report.to_csv()
    (_outdir(cfg) / f"study_{kind}.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    results = verify.run_all(sys.stdout)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def cmd_dump(cfg: RunConfig, args) -> int:
    N = _single(cfg.N, "N", 3)
    mesh = _mesh(cfg, 4)
    sys_ = _system(cfg, mesh, N)
    out = _outdir(cfg)
    b: AngularBasis = sys_.basis
    for d in range(3):
        with open(out / f"angular_A{d + 1}.csv", "w") as fh:
            io.write_angular_matrix(fh, sys_.streaming[d], b.odd_modes, b.even_modes)
    for k, entry in enumerate(sys_.halfrange.entries):
        with open(out / f"angular_halfrange_{k}.csv", "w") as fh:
            io.write_angular_matrix(fh, entry.matrix, b.even_modes, b.even_modes)
    with open(out / "angular_collision_even.csv", "w") as fh:
        io.write_angular_matrix(fh, np.diag(sys_.c_even), b.even_modes, b.even_modes)
    with open(out / "angular_collision_odd.csv", "w") as fh:
        io.write_angular_matrix(fh, np.diag(sys_.c_odd), b.odd_modes, b.odd_modes)
    sp_ = sys_.spatial
    with open(out / "spatial_M_plus.csv", "w") as fh:
        io.write_spatial_matrix(fh, sp_.M_plus)
    with open(out / "spatial_M_minus.csv", "w") as fh:
        io.write_spatial_matrix(fh, np.diag(sp_.M_minus))
    for d, ax in enumerate(SPATIAL_AXES):
        with open(out / f"spatial_G{ax + 1}.csv", "w") as fh:
            io.write_spatial_matrix(fh, sp_.G[d])
    for k, (_, emass) in enumerate(sp_.boundary):
        with open(out / f"spatial_boundary_{k}.csv", "w") as fh:
            io.write_spatial_matrix(fh, emass)
    print(f"matrices written to {out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _csv(kind):
    def parse(text: str):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from exc
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig keys")
    common.add_argument("--out", help="output directory")
    common.add_argument("--N", type=_csv(int), help="odd PN order (comma list for angular studies)")
    common.add_argument("--n-max", type=int, dest="n_max", help="degree of the manufactured solution")
    common.add_argument("--divisions", type=_csv(int), help="structured mesh divisions (comma list)")
    common.add_argument("--mesh", dest="mesh_path", help="mesh file (#vertices / #triangles blocks)")
    common.add_argument("--tau", type=_csv(float), help="time step (comma list for temporal studies)")
    common.add_argument("--t-end", type=float, dest="t_end")
    common.add_argument("--tol", type=float)
    common.add_argument("--jobs", type=int)
    common.add_argument("--verbose", action="store_true")

    parser = _Parser(prog="pnfem", description="Mixed PN-FEM transport solver")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("stationary", parents=[common], help="steady benchmark problem")
    sub.add_parser("transient", parents=[common], help="implicit Euler benchmark run")
    st = sub.add_parser("study", parents=[common], help="convergence study")
    st.add_argument("--kind", required=True, choices=sorted(benchmark.STUDY_DEFAULTS))
    sub.add_parser("verify", parents=[common], help="oracle and property checks")
    sub.add_parser("dump-matrices", parents=[common], help="CSV dumps of factor matrices")
    return parser


def resolve_config(args) -> RunConfig:
    data = dataclasses.asdict(RunConfig.load(args.config)) if args.config else {}
    for key in ("out", "N", "n_max", "divisions", "mesh_path", "tau", "t_end", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if args.tol is not None:
        data["tol"] = args.tol
    return RunConfig.from_dict(data)


COMMANDS = {
    "stationary": cmd_stationary,
    "transient": cmd_transient,
    "study": cmd_study,
    "verify": cmd_verify,
    "dump-matrices": cmd_dump,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (PnFemError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
