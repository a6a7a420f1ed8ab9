"""Linear solves for the stationary problem and implicit Euler steps.

The odd block ``M_minus (x) (C_odd + shift)`` is diagonal (P0 in space,
diagonal collision in angle), so the odd unknowns are eliminated exactly
and conjugate gradients run on the SPD even-block Schur complement

    S x+ = K x+ + sum_d G_d^T [(sum_e G_e x+ A_e^T) / D] A_d,
    K x+ = (shift + c_even) M_plus x+ + sum_n E_n x+ B_n.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .errors import ConfigurationError, ContractViolation, SolverError
from .operators import ParityField, TransportSystem, apply_mass, apply_shifted

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    rel_tolerance: float = 1e-10
    max_iterations: int = 10000
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not self.rel_tolerance > 0:
            raise ConfigurationError("rel_tolerance must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ConfigurationError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveInfo:
    """Convergence record of one solve.

    ``residuals`` holds, per CG iteration (index 0 is the initial guess),
    a certified upper bound on the mass-norm residual of the full mixed
    system (lumped-mass dual norm times 2); ``energies``
    the CG quadratic functional ``x.S x / 2 - b.x``, which CG decreases
    monotonically.
    """

    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    load_norm: float = 0.0

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0

    def write_csv(self, stream: TextIO) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["iteration", "residual"])
        for k, r in enumerate(self.residuals):
            w.writerow([k, f"{r:.17g}"])


class SchurComplement:
    """Even-block Schur complement of ``shift * M + B`` (matrix-free)."""

    def __init__(self, sys: TransportSystem, shift: float = 0.0):
        if shift < 0:
            raise ConfigurationError("mass shift must be nonnegative")
        self.sys = sys
        self.shift = float(shift)
        m = sys.spatial.M_minus
        self.odd_diag = m[:, None] * (sys.c_odd + self.shift)[None, :]
        self._diag = None

    def _flux(self, xe: np.ndarray) -> np.ndarray:
        """``sum_d G_d xe A_d^T``: odd-block image of an even field."""
        sys = self.sys
        T = sys.mesh.n_triangles
        gx = sys.G_stacked @ xe
        return np.hstack([gx[:T], gx[T:]]) @ sys.A_stacked_T

    def _spread(self, w: np.ndarray) -> np.ndarray:
        """``sum_d G_d^T w A_d``: adjoint of :meth:`_flux`."""
        sys = self.sys
        ne = sys.basis.n_even
        wa = w @ sys.A_stacked_T.T
        return sys.G_stacked_T @ np.vstack([wa[:, :ne], wa[:, ne:]])

    def apply(self, xe: np.ndarray) -> np.ndarray:
        sys = self.sys
        out = (sys.spatial.M_plus @ xe) * (sys.c_even + self.shift)
        for emass, bmat in sys.boundary_terms:
            out += (emass @ xe) @ bmat
        out += self._spread(self._flux(xe) / self.odd_diag)
        return out

    def reduced_rhs(self, load: ParityField) -> np.ndarray:
        return load.even + self._spread(load.odd / self.odd_diag)

    def recover_odd(self, xe: np.ndarray, load: ParityField) -> np.ndarray:
        return (load.odd - self._flux(xe)) / self.odd_diag

    def diagonal(self) -> np.ndarray:
        if self._diag is None:
            sys = self.sys
            Mp = sys.spatial.M_plus.diagonal()
            diag = Mp[:, None] * (sys.c_even + self.shift)[None, :]
            for emass, bmat in sys.boundary_terms:
                diag += emass.diagonal()[:, None] * np.diag(bmat)[None, :]
            inv = 1.0 / self.odd_diag
            G = sys.spatial.G
            for d in range(2):
                for e in range(2):
                    gg = G[d].multiply(G[e]).T.tocsr()
                    diag += (gg @ inv) @ (sys.A[d] * sys.A[e])
            self._diag = diag
        return self._diag


def schur_for(sys: TransportSystem, shift: float) -> SchurComplement:
    """Cached Schur complement (the Jacobi diagonal is reused across time steps)."""
    cache = sys.solver_cache
    key = ("schur", float(shift))
    if key not in cache:
        if len(cache) > 8:
            cache.clear()
        cache[key] = SchurComplement(sys, shift)
    return cache[key]


def _solve(sys: TransportSystem, shift: float, load: ParityField, cfg: SolverConfig,
           x0: np.ndarray | None = None, log_stream: TextIO | None = None,
           ) -> tuple[ParityField, SolveInfo]:
    sys.check(load)
    schur = schur_for(sys, shift)
    info = SolveInfo(load_norm=sys.mass_dual_norm(load))
    b = schur.reduced_rhs(load)
    lumped_inv = 1.0 / sys.lumped_mass[:, None]

    def residual_bound(r_even: np.ndarray) -> float:
        # Odd rows hold exactly after elimination, so the full residual is
        # (r_even, 0).  With lumped P1 mass, M_L/4 <= M <= M_L, hence
        # ||r||_{M^-1} <= 2 ||r||_{M_L^-1}: a cheap certified upper bound.
        return 2.0 * float(np.sqrt(np.vdot(r_even, r_even * lumped_inv)))

    x = np.zeros(sys.even_shape) if x0 is None else np.array(x0, dtype=float)
    r = b - schur.apply(x) if x0 is not None else b.copy()
    target = cfg.rel_tolerance * info.load_norm
    res = residual_bound(r)
    info.residuals.append(res)
    info.energies.append(float(-0.5 * np.vdot(x, r + b)))

    if info.load_norm > 0.0 and res > target:
        diag_inv = 1.0 / schur.diagonal() if cfg.preconditioner == "jacobi" else None
        z = r * diag_inv if diag_inv is not None else r
        p = z.copy()
        rz = float(np.vdot(r, z))
        for it in range(1, cfg.max_iterations + 1):
            Sp = schur.apply(p)
            alpha = rz / float(np.vdot(p, Sp))
            x += alpha * p
            r -= alpha * Sp
            res = residual_bound(r)
            info.iterations = it
            info.residuals.append(res)
            info.energies.append(float(-0.5 * np.vdot(x, r + b)))
            if res <= target:
                break
            z = r * diag_inv if diag_inv is not None else r
            rz_new = float(np.vdot(r, z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        else:
            raise SolverError(
                f"CG did not converge in {cfg.max_iterations} iterations "
                f"(relative residual {res / info.load_norm:.3e})",
                residual=res, iterations=cfg.max_iterations,
            )
    if log_stream is not None:
        info.write_csv(log_stream)
    log.debug("CG: %d iterations, residual %.3e", info.iterations, info.final_residual)
    return ParityField(x, schur.recover_odd(x, load)), info


def solve_stationary(sys: TransportSystem, load: ParityField,
                     cfg: SolverConfig = SolverConfig(), *, return_info: bool = False,
                     log_stream: TextIO | None = None):
    """Solve ``B(phi; psi) = l(psi)`` for all discrete ``psi``."""
    x, info = _solve(sys, 0.0, load, cfg, log_stream=log_stream)
    return (x, info) if return_info else x


def solve_step(sys: TransportSystem, mass_scale: float, previous: ParityField,
               load: ParityField, cfg: SolverConfig = SolverConfig(), *,
               return_info: bool = False, log_stream: TextIO | None = None):
    """One implicit Euler step: ``(M/tau + B) x = M/tau previous + load``.

    ``mass_scale`` is ``1/tau``; ``previous`` doubles as the initial guess.
    """
    if not mass_scale > 0:
        raise ConfigurationError("mass_scale = 1/tau must be positive")
    rhs = load + mass_scale * apply_mass(sys, previous)
    x, info = _solve(sys, mass_scale, rhs, cfg, x0=previous.even, log_stream=log_stream)
    return (x, info) if return_info else x


def full_residual(sys: TransportSystem, x: ParityField, load: ParityField,
                  shift: float = 0.0) -> ParityField:
    return load - apply_shifted(sys, x, shift)


def dense_oracle_solve(sys: TransportSystem, load: ParityField, *, shift: float = 0.0,
                       previous: ParityField | None = None, kernel=None) -> ParityField:
    """Dense LU solve of ``(shift M + B) x = load (+ shift M previous)``."""
    import scipy.linalg as sla

    from .oracle import MAX_ORACLE_DOFS, dense_matrices

    if sys.n_dofs > MAX_ORACLE_DOFS:
        raise ContractViolation(f"dense oracle limited to {MAX_ORACLE_DOFS} dofs")
    B, M = dense_matrices(sys, kernel)
    A = B + shift * M
    rhs = load.to_vector()
    if previous is not None:
        rhs = rhs + shift * (M @ previous.to_vector())
    lu, piv = sla.lu_factor(A)
    return ParityField.from_vector(sla.lu_solve((lu, piv), rhs), sys)
