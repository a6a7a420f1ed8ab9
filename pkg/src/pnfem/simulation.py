"""Elliptic projection and the implicit Euler time loop."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, TextIO

import numpy as np

from .angular import AngularBasis, ModeIndex, halfrange_matrix, streaming_matrices
from .errors import ConfigurationError, SolverError
from .mesh import hat_gradients, triangle_quadrature
from .operators import SPATIAL_AXES, ParityField, TransportSystem, mass_norm
from .solvers import SolverConfig, solve_stationary, solve_step

log = logging.getLogger(__name__)


class SHSeriesField(Protocol):
    """A continuous field given by spatial coefficient functions of SH modes.

    ``basis`` fixes the mode lists; each callable receives points of shape
    ``(..., 2)`` and returns values with the mode axis last (gradients add a
    trailing axis of length 2).
    """

    basis: AngularBasis

    def even(self, pts: np.ndarray) -> np.ndarray: ...

    def even_grad(self, pts: np.ndarray) -> np.ndarray: ...

    def odd(self, pts: np.ndarray) -> np.ndarray: ...


@dataclass
class ZeroField:
    basis: AngularBasis

    def even(self, pts):
        return np.zeros(pts.shape[:-1] + (self.basis.n_even,))

    def even_grad(self, pts):
        return np.zeros(pts.shape[:-1] + (self.basis.n_even, 2))

    def odd(self, pts):
        return np.zeros(pts.shape[:-1] + (self.basis.n_odd,))


def _mode_map(src: tuple[ModeIndex, ...], dst: tuple[ModeIndex, ...]) -> np.ndarray:
    """Index in ``src`` of each mode of ``dst``; -1 where missing."""
    pos = {md: k for k, md in enumerate(src)}
    return np.array([pos.get(md, -1) for md in dst], dtype=int)


def _take_modes(values: np.ndarray, idx: np.ndarray, axis: int = -1) -> np.ndarray:
    out = np.take(values, np.clip(idx, 0, None), axis=axis)
    mask_shape = [1] * out.ndim
    mask_shape[axis] = idx.size
    return out * (idx >= 0).reshape(mask_shape)


def bilinear_load(sys: TransportSystem, target: SHSeriesField) -> ParityField:
    """The functional ``psi_h -> B(target; psi_h)`` by spatial quadrature."""
    basis, mesh = sys.basis, sys.mesh
    tb = target.basis
    if tb.N < basis.N:
        raise ConfigurationError("target basis must contain the discrete modes")
    ev_map = _mode_map(tb.even_modes, basis.even_modes)
    od_map = _mode_map(tb.odd_modes, basis.odd_modes)
    ext = streaming_matrices(tb)
    A_ext = [ext[ax].toarray() for ax in SPATIAL_AXES]      # (no_t, ne_t)

    pts, w, bary = triangle_quadrature(mesh)
    fe = target.even(pts)                                    # (T, Q, ne_t)
    fg = target.even_grad(pts)                               # (T, Q, ne_t, 2)
    fo = target.odd(pts)                                     # (T, Q, no_t)
    grads = hat_gradients(mesh)                                  # (T, 3, 2)
    tri = mesh.triangles

    # Collision terms.
    ce = sys.c_even
    pair_e = np.einsum("tq,qk,tqm->tkm", w, bary, fe)        # int lambda_k f_m
    even = np.zeros(sys.even_shape)
    np.add.at(even, tri, _take_modes(pair_e, ev_map) * ce)
    odd_int = np.einsum("tq,tqm->tm", w, fo)                  # int_K f_j
    odd = _take_modes(odd_int, od_map) * sys.c_odd

    # Streaming: + (s.grad phi+, psi-) and - (phi-, s.grad psi+).
    for d in range(2):
        gint = np.einsum("tq,tqm->tm", w, fg[..., d])        # int_K d_d f_i
        odd += _take_modes(gint @ A_ext[d].T, od_map)
        # int_K phi-_j d_d lambda_k = grad_k * int_K phi-_j
        pa = odd_int @ A_ext[d]                              # (T, ne_t)
        contrib = grads[:, :, d][:, :, None] * pa[:, None, :]
        np.add.at(even, tri, -_take_modes(contrib, ev_map))

    # Half-range boundary term.
    gx, gw = np.polynomial.legendre.leggauss(5)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    cache: list[tuple[np.ndarray, np.ndarray]] = []
    for edge in mesh.boundary_edges:
        a, b = edge.vertices
        n3 = np.array([edge.normal[0], 0.0, edge.normal[1]])
        for nrm, mat in cache:
            if np.linalg.norm(nrm - n3) < 1e-12:
                bn = mat
                break
        else:
            bn = halfrange_matrix(tb, n3).matrix
            cache.append((n3, bn))
        ep = mesh.vertices[a][None, :] * (1 - gx)[:, None] + mesh.vertices[b][None, :] * gx[:, None]
        vals = target.even(ep)                               # (5, ne_t)
        proj = vals @ bn                                     # (5, ne_t)
        for lam, vtx in ((1 - gx, a), (gx, b)):
            even[vtx] += _take_modes((gw * edge.length * lam) @ proj, ev_map)
    return ParityField(even, odd)


def elliptic_projection(sys: TransportSystem, target: SHSeriesField,
                        cfg: SolverConfig = SolverConfig()) -> ParityField:
    """Discrete ``Pi_h phi`` with ``B(Pi_h phi; psi_h) = B(phi; psi_h)``."""
    load = bilinear_load(sys, target)
    if not np.any(load.even) and not np.any(load.odd):
        return ParityField.zeros(sys)
    return solve_stationary(sys, load, cfg)


def interpolate(sys: TransportSystem, target: SHSeriesField) -> ParityField:
    """Nodal interpolant: even modes at vertices, odd modes at centroids."""
    ev_map = _mode_map(target.basis.even_modes, sys.basis.even_modes)
    od_map = _mode_map(target.basis.odd_modes, sys.basis.odd_modes)
    verts = sys.mesh.vertices
    cent = verts[sys.mesh.triangles].mean(axis=1)
    return ParityField(_take_modes(target.even(verts), ev_map),
                       _take_modes(target.odd(cent), od_map))


@dataclass
class DiscreteSeriesField:
    """A discrete field seen as an :class:`SHSeriesField` (for idempotence checks)."""

    sys: TransportSystem
    x: ParityField
    basis: AngularBasis = field(init=False)

    def __post_init__(self):
        self.basis = self.sys.basis

    def even(self, pts):
        mesh = self.sys.mesh
        # Per-triangle quadrature points carry their cell on the leading axis.
        if pts.ndim == 3 and pts.shape[0] == mesh.n_triangles:
            bary = _barycentric(mesh, pts)
            return np.einsum("tqk,tkm->tqm", bary, self.x.even[mesh.triangles])
        return _eval_p1_anywhere(mesh, self.x.even, pts)

    def even_grad(self, pts):
        grads = hat_gradients(self.sys.mesh)
        g = np.einsum("tkd,tkm->tmd", grads, self.x.even[self.sys.mesh.triangles])
        return np.broadcast_to(g[:, None], pts.shape[:2] + g.shape[1:])

    def odd(self, pts):
        return np.broadcast_to(self.x.odd[:, None, :], pts.shape[:2] + (self.x.odd.shape[1],))


def _barycentric(mesh, pts):
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # (T, 2, 2)
    rel = pts - p[:, None, 0]
    lam12 = np.linalg.solve(J[:, None], rel[..., None])[..., 0]
    return np.concatenate([1 - lam12.sum(-1, keepdims=True), lam12], axis=-1)


def _eval_p1_anywhere(mesh, coeffs, pts):
    """Point location by brute force; meant for small test meshes."""
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    flat = pts.reshape(-1, 2)
    res = np.empty((flat.shape[0], coeffs.shape[1]))
    for k, x in enumerate(flat):
        lam = np.linalg.solve(J, (x - p[:, 0])[..., None])[..., 0]
        bary = np.column_stack([1 - lam.sum(1), lam])
        t = int(np.argmax(bary.min(axis=1)))
        res[k] = bary[t] @ coeffs[mesh.triangles[t]]
    return res.reshape(pts.shape[:-1] + (coeffs.shape[1],))


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransientConfig:
    tau: float
    t_end: float
    record_every: int = 1

    def __post_init__(self):
        if not (self.tau > 0 and self.t_end > 0 and self.tau <= self.t_end * (1 + 1e-12)):
            raise ConfigurationError("need 0 < tau <= t_end")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.tau - 1e-9))


@dataclass
class EnergyTrace:
    steps: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    dist_to_steady: list[float] = field(default_factory=list)

    def append(self, n, t, energy, dist=math.nan):
        self.steps.append(n)
        self.times.append(t)
        self.energy.append(energy)
        self.dist_to_steady.append(dist)

    def write_csv(self, stream: TextIO) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["step", "t", "energy", "dist_to_steady"])
        for row in zip(self.steps, self.times, self.energy, self.dist_to_steady):
            w.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])


@dataclass
class TransientResult:
    final: ParityField
    trace: EnergyTrace
    snapshots: list[tuple[int, float, ParityField]]


def run_transient(sys: TransportSystem, cfg: TransientConfig,
                  source: Callable[[float], ParityField] | None,
                  initial: ParityField | None = None,
                  solver: SolverConfig = SolverConfig(), *,
                  steady: ParityField | None = None,
                  observer: Callable[[int, float, ParityField], None] | None = None,
                  keep_snapshots: bool = True) -> TransientResult:
    """Implicit Euler: ``(M/tau + B) phi^n = M/tau phi^{n-1} + l(t^n)``.

    ``source(t)`` returns the load functional at ``t`` (``None`` means no
    source).  ``observer`` is called with every step ``(n, t^n, phi^n)``
    including ``n = 0``; snapshots and energy entries are recorded every
    ``record_every`` steps.
    """
    if cfg.tau > 1.0 / (2.0 * sys.sigma_a):
        warnings.warn(
            f"tau = {cfg.tau:g} exceeds 1/(2 sigma_a) = {1 / (2 * sys.sigma_a):g}; "
            "the discrete energy estimate is stated for smaller steps",
            stacklevel=2,
        )
    x = ParityField.zeros(sys) if initial is None else initial.copy()
    sys.check(x)
    trace = EnergyTrace()
    snaps: list[tuple[int, float, ParityField]] = []

    def record(n, t, field):
        if observer is not None:
            observer(n, t, field)
        if n % cfg.record_every == 0 or n == cfg.n_steps:
            dist = mass_norm(sys, field - steady) ** 2 if steady is not None else math.nan
            trace.append(n, t, mass_norm(sys, field) ** 2, dist)
            if keep_snapshots:
                snaps.append((n, t, field.copy()))

    record(0, 0.0, x)
    zero = ParityField.zeros(sys)
    for n in range(1, cfg.n_steps + 1):
        t = n * cfg.tau
        load = source(t) if source is not None else zero
        try:
            x = solve_step(sys, 1.0 / cfg.tau, x, load, solver)
        except SolverError as exc:
            exc.step = n
            raise SolverError(f"time step {n} (t = {t:g}): {exc}", exc.residual,
                              exc.iterations, step=n) from exc
        record(n, t, x)
    return TransientResult(x, trace, snaps)


def energy_bound(sys: TransportSystem, times: Iterable[float], initial_energy: float,
                 source_norms_sq: Iterable[float], tau: float) -> np.ndarray:
    """Right-hand side of the discrete energy estimate at each ``t^n``.

    ``source_norms_sq[k-1]`` is ``||q(t^k)||^2`` for ``k = 1..n``.
    """
    sa = sys.sigma_a
    times = np.asarray(list(times), dtype=float)
    qs = np.asarray(list(source_norms_sq), dtype=float)
    out = np.empty(times.size)
    for i, tn in enumerate(times):
        n = int(round(tn / tau))
        tk = tau * np.arange(1, n + 1)
        out[i] = math.exp(-sa * tn) * initial_energy + (2.0 / sa) * np.sum(
            tau * np.exp(-sa * (tn - tk)) * qs[:n]
        )
    return out
