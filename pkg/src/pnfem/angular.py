"""Real spherical harmonics, parity bookkeeping and angular matrices.

Modes are stored per parity block and sorted by ``(l, m)``.  Every angular
matrix used by the transport operators lives here: the streaming couplings
``int s_d Y_i Y_j ds`` (odd rows, even columns), the collision eigenvalues
and the half-range boundary matrices ``int |s.n| Y_i Y_j ds``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, InputDomainError

FOUR_PI = 4.0 * math.pi
_UNIT_TOL = 1e-12


class ModeIndex(NamedTuple):
    """Degree ``l`` and order ``m`` of a real spherical harmonic."""

    l: int
    m: int

    @property
    def is_even(self) -> bool:
        return self.l % 2 == 0


def modes_up_to(lmax: int) -> list[ModeIndex]:
    return [ModeIndex(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]


def flat_index(mode: ModeIndex) -> int:
    """Position of ``mode`` in the full ``(l, m)``-sorted list."""
    return mode.l * mode.l + mode.l + mode.m


@dataclass(frozen=True)
class AngularBasis:
    """Truncated real SH basis of odd order ``N`` split by parity."""

    N: int
    even_modes: tuple[ModeIndex, ...]
    odd_modes: tuple[ModeIndex, ...]

    @classmethod
    def create(cls, N: int) -> "AngularBasis":
        if N < 1 or N % 2 == 0:
            raise ConfigurationError(
                f"PN order must be a positive odd integer, got N={N}"
            )
        allm = modes_up_to(N)
        even = tuple(md for md in allm if md.l % 2 == 0)
        odd = tuple(md for md in allm if md.l % 2 == 1)
        return cls(N, even, odd)

    @property
    def n_even(self) -> int:
        return len(self.even_modes)

    @property
    def n_odd(self) -> int:
        return len(self.odd_modes)

    @property
    def even_degrees(self) -> np.ndarray:
        return np.array([md.l for md in self.even_modes], dtype=int)

    @property
    def odd_degrees(self) -> np.ndarray:
        return np.array([md.l for md in self.odd_modes], dtype=int)

    def even_position(self, mode: ModeIndex) -> int:
        return self.even_modes.index(ModeIndex(*mode))

    def odd_position(self, mode: ModeIndex) -> int:
        return self.odd_modes.index(ModeIndex(*mode))


def n_even_modes(N: int) -> int:
    return sum(2 * l + 1 for l in range(0, N + 1, 2))


def n_odd_modes(N: int) -> int:
    return sum(2 * l + 1 for l in range(1, N + 1, 2))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _check_unit(s: np.ndarray, what: str = "direction") -> np.ndarray:
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.shape[-1] != 3:
        raise InputDomainError(f"{what} must have 3 components, got shape {s.shape}")
    norms = np.linalg.norm(s, axis=-1)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        raise InputDomainError(f"{what} is not a unit vector (|s| = {norms.max():.15g})")
    return s


def real_sh_all(lmax: int, s: np.ndarray) -> np.ndarray:
    """Evaluate all real orthonormal SH with ``l <= lmax`` at unit vectors.

    Returns an array of shape ``(npts, (lmax+1)**2)`` with columns in
    ``(l, m)`` order.  The normalization is folded into the associated
    Legendre recursion so no factorials are ever formed.
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    x, y, z = s[:, 0], s[:, 1], s[:, 2]
    npts = s.shape[0]
    rho = np.hypot(x, y)
    phi = np.arctan2(y, x)
    out = np.empty((npts, (lmax + 1) ** 2))

    # pmm holds the normalized P_m^m, updated diagonally.
    pmm = np.full(npts, 1.0 / math.sqrt(FOUR_PI))
    sqrt2 = math.sqrt(2.0)
    for m in range(lmax + 1):
        if m > 0:
            pmm = pmm * math.sqrt((2 * m + 1) / (2.0 * m)) * rho
        if m == 0:
            cos_m = np.ones(npts)
            sin_m = np.zeros(npts)
        else:
            cos_m = sqrt2 * np.cos(m * phi)
            sin_m = sqrt2 * np.sin(m * phi)
        p_prev2 = None
        p_prev = pmm
        for l in range(m, lmax + 1):
            if l == m:
                p = pmm
            elif l == m + 1:
                p = math.sqrt(2 * m + 3) * z * pmm
            else:
                a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
                p = a * (z * p_prev - b * p_prev2)
            if l > m:
                p_prev2, p_prev = p_prev, p
            out[:, l * l + l + m] = p * cos_m
            if m > 0:
                out[:, l * l + l - m] = p * sin_m
    return out


def sh_eval(mode: ModeIndex, s: Sequence[float] | np.ndarray) -> float | np.ndarray:
    """Real orthonormal spherical harmonic ``mode`` at unit vector(s) ``s``."""
    mode = ModeIndex(*mode)
    if mode.l < 0 or abs(mode.m) > mode.l:
        raise InputDomainError(f"invalid mode {mode}")
    arr = np.asarray(s, dtype=float)
    pts = _check_unit(arr)
    vals = real_sh_all(mode.l, pts)[:, flat_index(mode)]
    return float(vals[0]) if arr.ndim == 1 else vals


def eval_basis(basis: AngularBasis, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Even and odd basis values at points, shapes ``(npts, n_even)`` / ``(npts, n_odd)``."""
    full = real_sh_all(basis.N, s)
    ev = [flat_index(md) for md in basis.even_modes]
    od = [flat_index(md) for md in basis.odd_modes]
    return full[:, ev], full[:, od]


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def sphere_quadrature(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre in ``cos(theta)`` times a uniform azimuthal rule.

    Uses ``order`` polar nodes and ``2*(order+1)`` azimuthal nodes, so
    spherical polynomials of degree ``<= 2*order - 1`` are integrated
    exactly.  Returns ``(points, weights)`` with ``points`` of shape
    ``(n, 3)``.
    """
    if order < 1:
        raise InputDomainError("quadrature order must be >= 1")
    mu, wmu = np.polynomial.legendre.leggauss(order)
    return _product_rule(mu, wmu, 2 * (order + 1))


def _product_rule(mu, wmu, n_phi, frame=None):
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    wphi = 2.0 * math.pi / n_phi
    st = np.sqrt(np.clip(1.0 - mu * mu, 0.0, None))
    sx = np.outer(st, np.cos(phi)).ravel()
    sy = np.outer(st, np.sin(phi)).ravel()
    sz = np.repeat(mu, n_phi)
    pts = np.column_stack([sx, sy, sz])
    if frame is not None:
        pts = pts @ frame
    w = np.repeat(wmu * wphi, n_phi)
    return pts, w


def _frame_for(n: np.ndarray) -> np.ndarray:
    """Rows ``(e1, e2, n)`` of an orthonormal frame with ``n`` as third axis."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - np.dot(helper, n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.vstack([e1, e2, n])


def halfrange_quadrature(n: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule for ``int |s.n| f(s) ds``; weights already include ``|s.n|``.

    The polar axis is rotated onto ``n`` and each hemisphere gets its own
    Gauss-Legendre rule, so the kink of ``|s.n|`` sits on a panel edge.
    """
    n = np.asarray(n, dtype=float)
    x, w = np.polynomial.legendre.leggauss(order)
    mu = np.concatenate([0.5 * (x - 1.0), 0.5 * (x + 1.0)])
    wmu = np.concatenate([0.5 * w, 0.5 * w]) * np.abs(mu)
    return _product_rule(mu, wmu, 2 * (order + 1), frame=_frame_for(n))


# ---------------------------------------------------------------------------
# Angular matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StreamingMatrices:
    """``A[d][i, j] = int s_d Y_i Y_j ds`` for odd row ``i`` and even column ``j``."""

    basis: AngularBasis
    A: tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]

    def __getitem__(self, d: int) -> sp.csr_matrix:
        return self.A[d]


def streaming_matrices(basis: AngularBasis) -> StreamingMatrices:
    if basis.N % 2 == 0:
        raise ConfigurationError("streaming matrices need an odd PN order")
    pts, w = sphere_quadrature(basis.N + 2)
    ye, yo = eval_basis(basis, pts)
    le = basis.even_degrees
    lo = basis.odd_degrees
    me = np.array([abs(md.m) for md in basis.even_modes])
    mo = np.array([abs(md.m) for md in basis.odd_modes])
    # Coupling only for l' = l +- 1 and |m'| - |m| in {-1, 0, 1}.
    pattern = (np.abs(lo[:, None] - le[None, :]) == 1) & (
        np.abs(mo[:, None] - me[None, :]) <= 1
    )
    mats = []
    for d in range(3):
        dense = (yo * (w * pts[:, d])[:, None]).T @ ye
        dense[~pattern] = 0.0
        dense[np.abs(dense) < 1e-14] = 0.0
        mats.append(sp.csr_matrix(dense))
    return StreamingMatrices(basis, tuple(mats))


@dataclass(frozen=True)
class CollisionSpectrum:
    """Eigenvalues ``c_l = sigma_t - sigma_{s,l}`` of the collision operator."""

    sigma_t: float
    scattering_moments: np.ndarray
    c: np.ndarray

    @property
    def sigma_a_lower(self) -> float:
        """Coercivity constant: the smallest eigenvalue over the kept degrees."""
        return float(self.c.min())

    def for_degrees(self, degrees: np.ndarray) -> np.ndarray:
        return self.c[np.asarray(degrees)]


def kernel_legendre_moments(kernel: Callable[[np.ndarray], np.ndarray], lmax: int,
                            n_points: int | None = None) -> np.ndarray:
    """``sigma_{s,l} = 2 pi int_{-1}^{1} k(mu) P_l(mu) dmu`` for ``l <= lmax``."""
    npts = n_points or max(64, 2 * lmax + 32)
    mu, w = np.polynomial.legendre.leggauss(npts)
    kv = np.asarray(kernel(mu), dtype=float) * w
    out = np.empty(lmax + 1)
    p_prev, p = np.ones_like(mu), mu.copy()
    for l in range(lmax + 1):
        if l == 0:
            pl = p_prev
        elif l == 1:
            pl = p
        else:
            p_prev, p = p, ((2 * l - 1) * mu * p - (l - 1) * p_prev) / l
            pl = p
        out[l] = 2.0 * math.pi * np.dot(kv, pl)
    return out


def isotropic_moments(sigma_s: float, lmax: int) -> np.ndarray:
    mom = np.zeros(lmax + 1)
    mom[0] = sigma_s
    return mom


def collision_spectrum(sigma_t: float, N: int, *,
                       moments: Sequence[float] | np.ndarray | None = None,
                       kernel: Callable[[np.ndarray], np.ndarray] | None = None,
                       ) -> CollisionSpectrum:
    """Collision eigenvalues per degree ``l <= N`` (Funk-Hecke).

    Either the Legendre moments ``sigma_{s,l}`` of the kernel or the kernel
    ``k(mu)`` itself may be given; missing high moments are taken as zero.
    Raises :class:`ConfigurationError` if any eigenvalue is not positive.
    """
    if kernel is not None and moments is not None:
        raise ConfigurationError("give either kernel or moments, not both")
    if kernel is not None:
        mom = kernel_legendre_moments(kernel, N)
    else:
        mom = np.zeros(N + 1)
        if moments is not None:
            given = np.asarray(moments, dtype=float)[: N + 1]
            mom[: given.size] = given
    c = float(sigma_t) - mom
    if not np.all(np.isfinite(c)) or c.min() <= 0.0:
        raise ConfigurationError(
            f"collision operator not coercive: min_l c_l = {c.min():.6g} <= 0 "
            f"(absorption must be strictly positive)"
        )
    return CollisionSpectrum(float(sigma_t), mom, c)


@dataclass(frozen=True)
class HalfRangeMatrix:
    normal: np.ndarray
    matrix: np.ndarray


def halfrange_matrix(basis: AngularBasis, n: Sequence[float] | np.ndarray) -> HalfRangeMatrix:
    """Dense ``int |s.n| Y_i Y_j ds`` over the even modes of ``basis``."""
    nv = _check_unit(np.asarray(n, dtype=float), "normal")[0]
    pts, w = halfrange_quadrature(nv, basis.N + 2)
    ye, _ = eval_basis(basis, pts)
    mat = (ye * w[:, None]).T @ ye
    mat = 0.5 * (mat + mat.T)
    return HalfRangeMatrix(nv.copy(), mat)


@dataclass
class HalfRangeCache:
    """Half-range matrices keyed by normal; normals closer than 1e-12 share an entry."""

    basis: AngularBasis
    entries: list[HalfRangeMatrix] = field(default_factory=list)

    def get(self, n: Sequence[float] | np.ndarray) -> HalfRangeMatrix:
        nv = np.asarray(n, dtype=float)
        for entry in self.entries:
            if np.linalg.norm(entry.normal - nv) < 1e-12:
                return entry
        entry = halfrange_matrix(self.basis, nv)
        self.entries.append(entry)
        return entry

    def __len__(self) -> int:
        return len(self.entries)
