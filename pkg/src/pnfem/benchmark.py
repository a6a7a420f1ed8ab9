"""Manufactured-solution benchmark: source, error measures, EOC and sweeps.

The analytic solution is

    phi(r, s, t) = g(t) sum_{l <= n_max} a_l sin(pi r1) sin(pi r3) Y_l^0(s),

with ``a_l = 1/(l+1)^2`` and ``g(t) = 1 - exp(-t)``.  Its source is
expanded in SH modes with spatial coefficients of the form
``alpha phi00(r) + beta . grad phi00(r)``; everything downstream works on
those coefficient vectors.
"""

from __future__ import annotations

import csv
import functools
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence, TextIO

import numpy as np

from .angular import AngularBasis, flat_index, isotropic_moments, real_sh_all, streaming_matrices
from .errors import ConfigurationError, ContractViolation, SolverError
from .mesh import TriMesh, read_mesh, triangle_quadrature, unit_square_mesh
from .operators import SPATIAL_AXES, ParityField, TransportSystem, build_isotropic_system
from .simulation import TransientConfig, _mode_map, run_transient
from .solvers import SolverConfig

log = logging.getLogger(__name__)

PROFILE_NORM_SQ = 0.25                 # ||sin(pi x) sin(pi y)||^2 on the unit square
GRAD_NORM_SQ = math.pi ** 2 / 4.0      # ||d/dx sin(pi x) sin(pi y)||^2


def _odd_order(L: int) -> int:
    return L if L % 2 else L + 1


@functools.lru_cache(maxsize=8)
def _series_angular(L: int) -> tuple[AngularBasis, tuple[np.ndarray, np.ndarray]]:
    basis = AngularBasis.create(L)
    sm = streaming_matrices(basis)
    return basis, tuple(sm[ax].toarray() for ax in SPATIAL_AXES)


@dataclass(frozen=True)
class ManufacturedSolution:
    n_max: int
    sigma_a: float = 0.01
    sigma_s: float = 1.0

    def __post_init__(self):
        if self.n_max < 0:
            raise ConfigurationError("n_max must be >= 0")
        if not self.sigma_a > 0 or self.sigma_s < 0:
            raise ConfigurationError("need sigma_a > 0 and sigma_s >= 0")

    @property
    def sigma_t(self) -> float:
        return self.sigma_a + self.sigma_s

    @staticmethod
    def coefficient(l):
        return 1.0 / (np.asarray(l, dtype=float) + 1.0) ** 2

    @staticmethod
    def g(t: float) -> float:
        return -math.expm1(-t)

    @staticmethod
    def dg(t: float) -> float:
        return math.exp(-t)

    @staticmethod
    def profile(pts: np.ndarray) -> np.ndarray:
        return np.sin(np.pi * pts[..., 0]) * np.sin(np.pi * pts[..., 1])

    @staticmethod
    def profile_grad(pts: np.ndarray) -> np.ndarray:
        x, y = np.pi * pts[..., 0], np.pi * pts[..., 1]
        return np.pi * np.stack([np.cos(x) * np.sin(y), np.sin(x) * np.cos(y)], axis=-1)

    def collision_eigs(self, degrees) -> np.ndarray:
        degrees = np.asarray(degrees, dtype=int)
        mom = isotropic_moments(self.sigma_s, int(degrees.max(initial=0)))
        return self.sigma_t - mom[degrees]

    def series_order(self, N: int = 1) -> int:
        """Smallest odd order holding both the discrete modes and ``l <= n_max + 1``."""
        return _odd_order(max(N, self.n_max + 1))

    def mode_coefficients(self, basis: AngularBasis) -> tuple[np.ndarray, np.ndarray]:
        """``a_l`` on the m = 0 modes with ``l <= n_max``, zero elsewhere."""
        def vec(modes):
            return np.array([self.coefficient(md.l) if md.m == 0 and md.l <= self.n_max else 0.0
                             for md in modes])
        return vec(basis.even_modes), vec(basis.odd_modes)

    def norm(self, t: float) -> float:
        l = np.arange(self.n_max + 1)
        return abs(self.g(t)) * math.sqrt(PROFILE_NORM_SQ * float(np.sum(self.coefficient(l) ** 2)))

    def field_at(self, t: float, N: int = 1) -> "SeriesSnapshot":
        return SeriesSnapshot(self, t, AngularBasis.create(self.series_order(N)))

    def source_terms(self, t: float, N: int = 1) -> "SourceTerms":
        basis, A = _series_angular(self.series_order(N))
        ae, ao = self.mode_coefficients(basis)
        g, dg = self.g(t), self.dg(t)
        ce = self.collision_eigs(basis.even_degrees)
        co = self.collision_eigs(basis.odd_degrees)
        return SourceTerms(
            basis,
            alpha_even=(dg + g * ce) * ae,
            beta_even=g * np.stack([ao @ A[d] for d in range(2)]),
            alpha_odd=(dg + g * co) * ao,
            beta_odd=g * np.stack([A[d] @ ae for d in range(2)]),
        )

    def pointwise_source(self, r: np.ndarray, s: np.ndarray, t: float) -> np.ndarray:
        """``q(r, s, t)`` at paired points ``r`` (n, 2) and unit ``s`` (n, 3)."""
        terms = self.source_terms(t)
        basis = terms.basis
        Y = real_sh_all(basis.N, np.atleast_2d(s))
        ie = [flat_index(md) for md in basis.even_modes]
        io_ = [flat_index(md) for md in basis.odd_modes]
        r = np.atleast_2d(r)
        p, dp = self.profile(r), self.profile_grad(r)
        qe = p[:, None] * terms.alpha_even + dp @ terms.beta_even
        qo = p[:, None] * terms.alpha_odd + dp @ terms.beta_odd
        return np.sum(qe * Y[:, ie], axis=1) + np.sum(qo * Y[:, io_], axis=1)

    def source_norm_sq(self, t: float) -> float:
        """``||q(t)||^2`` over D (closed form; the profile and its partials are orthogonal)."""
        q = self.source_terms(t)
        return float(PROFILE_NORM_SQ * (np.sum(q.alpha_even ** 2) + np.sum(q.alpha_odd ** 2))
                     + GRAD_NORM_SQ * (np.sum(q.beta_even ** 2) + np.sum(q.beta_odd ** 2)))


@dataclass(frozen=True)
class SourceTerms:
    """Per-mode spatial coefficients ``alpha phi00 + sum_d beta[d] d_d phi00``."""

    basis: AngularBasis
    alpha_even: np.ndarray
    beta_even: np.ndarray      # (2, n_even)
    alpha_odd: np.ndarray
    beta_odd: np.ndarray       # (2, n_odd)


@dataclass
class SeriesSnapshot:
    """The analytic solution at a fixed time, as an SH series field."""

    sol: ManufacturedSolution
    t: float
    basis: AngularBasis

    def __post_init__(self):
        ae, ao = self.sol.mode_coefficients(self.basis)
        g = self.sol.g(self.t)
        self._ae, self._ao = g * ae, g * ao

    def even(self, pts):
        return self.sol.profile(pts)[..., None] * self._ae

    def even_grad(self, pts):
        return self.sol.profile_grad(pts)[..., None, :] * self._ae[:, None]

    def odd(self, pts):
        return self.sol.profile(pts)[..., None] * self._ao


class ManufacturedLoad:
    """Load functionals ``l(t; psi_h)`` of the manufactured source on one system."""

    def __init__(self, sol: ManufacturedSolution, sys: TransportSystem, *,
                 require_exact: bool = False):
        if require_exact and sys.basis.N < sol.n_max + 1:
            raise ConfigurationError(
                f"N = {sys.basis.N} cannot represent the solution exactly in angle; "
                f"need N >= n_max + 1 = {sol.n_max + 1}"
            )
        self.sol, self.sys = sol, sys
        basis, _ = _series_angular(sol.series_order(sys.basis.N))
        self._emap = _mode_map(basis.even_modes, sys.basis.even_modes)
        self._omap = _mode_map(basis.odd_modes, sys.basis.odd_modes)
        mesh = sys.mesh
        pts, w, bary = triangle_quadrature(mesh)
        p = sol.profile(pts)
        dp = sol.profile_grad(pts)
        V = mesh.n_vertices
        # Columns: phi00, d1 phi00, d3 phi00.
        f = np.concatenate([p[..., None], dp], axis=-1)           # (T, Q, 3)
        local = np.einsum("tq,qk,tqc->tkc", w, bary, f)
        self._vertex = np.zeros((V, 3))
        np.add.at(self._vertex, mesh.triangles, local)
        self._cell = np.einsum("tq,tqc->tc", w, f)

    def __call__(self, t: float) -> ParityField:
        q = self.sol.source_terms(t, self.sys.basis.N)
        ce = np.vstack([q.alpha_even, q.beta_even])[:, self._emap]
        co = np.vstack([q.alpha_odd, q.beta_odd])[:, self._omap]
        return ParityField(self._vertex @ ce, self._cell @ co)


def manufactured_source(sol: ManufacturedSolution, sys: TransportSystem, t: float, *,
                        require_exact: bool = False) -> ParityField:
    return ManufacturedLoad(sol, sys, require_exact=require_exact)(t)


@dataclass(frozen=True)
class ErrorTriple:
    e_plus: float
    E_plus: float
    e_minus: float


class ErrorEvaluator:
    """Squared error measures of a discrete field against ``g * phi_series``.

    In-space modes are integrated with the 7-point triangle rule; analytic
    modes the discrete space cannot hold enter with their exact norm.
    """

    def __init__(self, sol: ManufacturedSolution, sys: TransportSystem):
        self.sol, self.sys = sol, sys
        basis, A = _series_angular(sol.series_order(sys.basis.N))
        ae, ao = sol.mode_coefficients(basis)
        emap = _mode_map(basis.even_modes, sys.basis.even_modes)
        omap = _mode_map(basis.odd_modes, sys.basis.odd_modes)
        self._ae, self._ao = ae[emap], ao[omap]
        in_e = np.zeros(basis.n_even, bool)
        in_e[emap] = True
        in_o = np.zeros(basis.n_odd, bool)
        in_o[omap] = True
        self._tail_even = PROFILE_NORM_SQ * float(np.sum(ae[~in_e] ** 2))
        self._tail_odd = PROFILE_NORM_SQ * float(np.sum(ao[~in_o] ** 2))
        # s.grad of the analytic even part: odd coefficients u[d] times d_d phi00.
        u = np.stack([A[d] @ ae for d in range(2)])               # (2, n_odd_ext)
        self._u = u[:, omap]
        self._tail_grad = GRAD_NORM_SQ * float(np.sum(u[:, ~in_o] ** 2))

        # Each squared error is a quadratic in (g, coefficients); the pieces
        # that do not depend on the discrete field are integrated once here.
        mesh = sys.mesh
        pts, w, bary = triangle_quadrature(mesh)
        p = sol.profile(pts)                                       # (T, Q)
        alpha = sol.profile_grad(pts) @ self._u                    # (T, Q, n_odd)
        self._area = mesh.areas
        pv = np.zeros(mesh.n_vertices)
        np.add.at(pv, mesh.triangles, (w * p) @ bary)
        self._pair_vertex = pv                                     # int phi00 lambda_v
        self._pair_cell = np.sum(w * p, axis=1)                    # int_K phi00
        pp = float(np.sum(w * p * p))
        self._const_even = pp * float(self._ae @ self._ae)
        self._const_odd = pp * float(self._ao @ self._ao)
        self._alpha_cell = np.einsum("tq,tqm->tm", w, alpha)       # int_K alpha
        self._const_grad = float(np.einsum("tq,tqm->", w, alpha * alpha))

    def squared(self, g: float, x: ParityField) -> tuple[float, float, float]:
        """``(e+^2, |s.grad err+|^2, e-^2)`` for the analytic field scaled by ``g``."""
        sys = self.sys
        sys.check(x)
        Mx = sys.spatial.M_plus @ x.even
        ep = (g * g * self._const_even - 2.0 * g * float(self._pair_vertex @ x.even @ self._ae)
              + float(np.vdot(x.even, Mx)))
        em = (g * g * self._const_odd - 2.0 * g * float(self._pair_cell @ x.odd @ self._ao)
              + float(np.sum(self._area[:, None] * x.odd * x.odd)))
        # Discrete s.grad of the even part, constant per triangle.
        Z = sum((sys.spatial.G[d] @ x.even) @ sys.A[d].T for d in range(2))
        Z /= self._area[:, None]
        sg = (g * g * self._const_grad - 2.0 * g * float(np.vdot(self._alpha_cell, Z))
              + float(np.sum(self._area[:, None] * Z * Z)))
        ep = max(ep, 0.0) + g * g * self._tail_even
        em = max(em, 0.0) + g * g * self._tail_odd
        sg = max(sg, 0.0) + g * g * self._tail_grad
        return ep, sg, em

    def errors(self, t: float, x: ParityField) -> ErrorTriple:
        ep, sg, em = self.squared(self.sol.g(t), x)
        return ErrorTriple(math.sqrt(ep), math.sqrt(ep + sg), math.sqrt(em))


class MaxErrorObserver:
    """Running max over time steps of the three error measures."""

    def __init__(self, evaluator: ErrorEvaluator):
        self.evaluator = evaluator
        self.max_sq = np.zeros(3)
        self.count = 0

    def __call__(self, n: int, t: float, x: ParityField) -> None:
        ep, sg, em = self.evaluator.squared(self.evaluator.sol.g(t), x)
        self.max_sq = np.maximum(self.max_sq, [ep, ep + sg, em])
        self.count += 1

    def result(self) -> ErrorTriple:
        if self.count == 0:
            raise ContractViolation("no snapshots were observed")
        return ErrorTriple(*np.sqrt(self.max_sq).tolist())


def compute_errors(sol: ManufacturedSolution, sys: TransportSystem,
                   snapshots: Sequence[tuple[float, ParityField]]) -> ErrorTriple:
    """Max over the given ``(t, field)`` snapshots of e+, E+ and e-."""
    obs = MaxErrorObserver(ErrorEvaluator(sol, sys))
    for n, (t, x) in enumerate(snapshots):
        obs(n, t, x)
    return obs.result()


def compute_eoc(errors: Sequence[float], params: Sequence[float]) -> list[float | None]:
    """``eoc_i = ln(e_{i-1}/e_i) / ln(p_i/p_{i-1})``; ``None`` where undefined.

    ``params`` grows with resolution: N, 1/h or 1/tau.
    """
    if len(errors) != len(params):
        raise ContractViolation("errors and params differ in length")
    if len(errors) < 2:
        raise ContractViolation("need at least two rows for an order estimate")
    out: list[float | None] = [None]
    for i in range(1, len(errors)):
        e0, e1, p0, p1 = errors[i - 1], errors[i], params[i - 1], params[i]
        if min(e0, e1) <= 0 or p0 <= 0 or p1 <= 0 or p0 == p1 or not all(
                map(math.isfinite, (e0, e1))):
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log(p1 / p0))
    return out


@dataclass
class StudyRow:
    param: float
    errors: ErrorTriple
    dofs: int


@dataclass
class ErrorReport:
    kind: str
    rows: list[StudyRow] = field(default_factory=list)

    def column(self, name: str) -> list[float]:
        return [getattr(r.errors, name) for r in self.rows]

    def eoc(self, name: str) -> list[float | None]:
        return compute_eoc(self.column(name), [r.param for r in self.rows])

    def write_csv(self, stream: TextIO) -> None:
        names = ("e_plus", "E_plus", "e_minus")
        eocs = {n: self.eoc(n) if len(self.rows) > 1 else [None] * len(self.rows)
                for n in names}
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["param", "e_plus", "eoc_plus", "E_plus", "eoc_E", "e_minus",
                    "eoc_minus", "dofs"])
        for i, row in enumerate(self.rows):
            cells = [f"{row.param:g}"]
            for n in names:
                cells.append(f"{getattr(row.errors, n):.6g}")
                e = eocs[n][i]
                cells.append("--" if e is None else f"{e:.2f}")
            cells.append(str(row.dofs))
            w.writerow(cells)

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


@dataclass(frozen=True)
class StudyConfig:
    n_max: int
    N: int
    divisions: int
    tau: float
    t_end: float = 1.0
    sigma_a: float = 0.01
    sigma_s: float = 1.0
    solver: SolverConfig = SolverConfig()
    mesh_path: str | None = None


STUDY_DEFAULTS: dict[str, tuple[StudyConfig, tuple]] = {
    "angular": (StudyConfig(n_max=40, N=1, divisions=64, tau=1e-3), (1, 3, 5, 7)),
    "spatial": (StudyConfig(n_max=2, N=3, divisions=8, tau=1e-4), (8, 16, 32, 64)),
    "temporal": (StudyConfig(n_max=2, N=3, divisions=64, tau=0.5), (0.5, 0.25, 0.125, 0.0625)),
}


def _point_config(kind: str, value, base: StudyConfig) -> tuple[StudyConfig, float]:
    if kind == "angular":
        return replace(base, N=int(value)), float(value)
    if kind == "spatial":
        return replace(base, divisions=int(value)), float(value)
    if kind == "temporal":
        return replace(base, tau=float(value)), 1.0 / float(value)
    raise ConfigurationError(f"unknown study kind {kind!r}")


def _mesh_for(cfg: StudyConfig) -> TriMesh:
    return read_mesh(cfg.mesh_path) if cfg.mesh_path else unit_square_mesh(cfg.divisions)


def run_point(cfg: StudyConfig) -> tuple[ErrorTriple, int]:
    """One manufactured transient run; errors are maxima over all steps."""
    sol = ManufacturedSolution(cfg.n_max, cfg.sigma_a, cfg.sigma_s)
    sys = build_isotropic_system(_mesh_for(cfg), cfg.N, cfg.sigma_a, cfg.sigma_s)
    load = ManufacturedLoad(sol, sys)
    obs = MaxErrorObserver(ErrorEvaluator(sol, sys))
    run_transient(sys, TransientConfig(cfg.tau, cfg.t_end), load, None, cfg.solver,
                  observer=obs, keep_snapshots=False)
    return obs.result(), sys.n_dofs


def _run_indexed(args):
    kind, value, base = args
    cfg, param = _point_config(kind, value, base)
    try:
        errs, dofs = run_point(cfg)
    except SolverError as exc:
        raise SolverError(f"{kind} study point {value}: {exc}", exc.residual,
                          exc.iterations, exc.step) from exc
    log.info("%s point %s: %s", kind, value, errs)
    return StudyRow(param, errs, dofs)


def run_study(kind: str, values: Sequence | None = None, base: StudyConfig | None = None,
              *, jobs: int = 1) -> ErrorReport:
    if kind not in STUDY_DEFAULTS:
        raise ConfigurationError(f"unknown study kind {kind!r}")
    default_base, default_values = STUDY_DEFAULTS[kind]
    base = base or default_base
    values = tuple(values) if values is not None else default_values
    if not values:
        raise ConfigurationError("empty sweep")
    tasks = [(kind, v, base) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_indexed, tasks))
    else:
        rows = [_run_indexed(t) for t in tasks]
    rows.sort(key=lambda r: r.param)
    return ErrorReport(kind, rows)
