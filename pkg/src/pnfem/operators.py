"""Global discrete operators of the mixed PN-P1/P0 scheme.

A discrete field is a pair of coefficient blocks: ``even[v, i]`` multiplies
``lambda_v(r) Y_i(s)`` (P1 hat times even SH) and ``odd[K, j]`` multiplies
``chi_K(r) Y_j(s)`` (triangle indicator times odd SH).  Every operator is a
short sum of ``(spatial) @ coeff @ (angular)`` triple products; no global
matrix is ever formed on this path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .angular import (
    AngularBasis,
    CollisionSpectrum,
    HalfRangeCache,
    StreamingMatrices,
    collision_spectrum,
    isotropic_moments,
    streaming_matrices,
)
from .errors import ContractViolation
from .mesh import SpatialMatrices, TriMesh, assemble_spatial

# Mesh axis d corresponds to direction component SPATIAL_AXES[d] of s.
SPATIAL_AXES = (0, 2)


@dataclass
class ParityField:
    """Even (V x n_even) and odd (T x n_odd) coefficient blocks."""

    even: np.ndarray
    odd: np.ndarray

    @classmethod
    def zeros(cls, sys: "TransportSystem") -> "ParityField":
        return cls(np.zeros(sys.even_shape), np.zeros(sys.odd_shape))

    @classmethod
    def random(cls, sys: "TransportSystem", rng: np.random.Generator) -> "ParityField":
        return cls(rng.standard_normal(sys.even_shape), rng.standard_normal(sys.odd_shape))

    @classmethod
    def from_vector(cls, vec: np.ndarray, sys: "TransportSystem") -> "ParityField":
        ne = sys.even_shape[0] * sys.even_shape[1]
        return cls(vec[:ne].reshape(sys.even_shape).copy(),
                   vec[ne:].reshape(sys.odd_shape).copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.even.ravel(), self.odd.ravel()])

    def copy(self) -> "ParityField":
        return ParityField(self.even.copy(), self.odd.copy())

    def dot(self, other: "ParityField") -> float:
        return float(np.vdot(self.even, other.even) + np.vdot(self.odd, other.odd))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.even)) and np.all(np.isfinite(self.odd)))

    def __add__(self, other: "ParityField") -> "ParityField":
        return ParityField(self.even + other.even, self.odd + other.odd)

    def __sub__(self, other: "ParityField") -> "ParityField":
        return ParityField(self.even - other.even, self.odd - other.odd)

    def __mul__(self, alpha: float) -> "ParityField":
        return ParityField(alpha * self.even, alpha * self.odd)

    __rmul__ = __mul__

    def __neg__(self) -> "ParityField":
        return ParityField(-self.even, -self.odd)


@dataclass
class TransportSystem:
    """Factor matrices of the bilinear form for one mesh, PN order and medium."""

    basis: AngularBasis
    mesh: TriMesh
    spatial: SpatialMatrices
    streaming: StreamingMatrices
    collision: CollisionSpectrum
    halfrange: HalfRangeCache
    A: tuple[np.ndarray, np.ndarray] = field(init=False)
    c_even: np.ndarray = field(init=False)
    c_odd: np.ndarray = field(init=False)
    boundary_terms: tuple[tuple[object, np.ndarray], ...] = field(init=False)
    G_stacked: sp.csr_matrix = field(init=False, repr=False)
    G_stacked_T: sp.csr_matrix = field(init=False, repr=False)
    A_stacked_T: np.ndarray = field(init=False, repr=False)
    lumped_mass: np.ndarray = field(init=False, repr=False)
    solver_cache: dict = field(init=False, default_factory=dict, repr=False)
    _mass_lu: object = field(init=False, default=None, repr=False)

    def __post_init__(self):
        b = self.basis
        self.A = tuple(self.streaming[ax].toarray() for ax in SPATIAL_AXES)
        self.c_even = self.collision.for_degrees(b.even_degrees)
        self.c_odd = self.collision.for_degrees(b.odd_degrees)
        terms = []
        for normal2d, emass in self.spatial.boundary:
            n3 = np.array([normal2d[0], 0.0, normal2d[1]])
            terms.append((emass, self.halfrange.get(n3).matrix))
        self.boundary_terms = tuple(terms)
        self.G_stacked = sp.vstack(self.spatial.G).tocsr()
        self.G_stacked_T = self.G_stacked.T.tocsr()
        self.A_stacked_T = np.vstack([A.T for A in self.A])
        self.lumped_mass = np.asarray(self.spatial.M_plus.sum(axis=1)).ravel()
        for A in self.A:
            if A.shape != (b.n_odd, b.n_even):
                raise ContractViolation("streaming matrix has wrong shape")

    @property
    def sigma_a(self) -> float:
        return self.collision.sigma_a_lower

    @property
    def even_shape(self) -> tuple[int, int]:
        return (self.mesh.n_vertices, self.basis.n_even)

    @property
    def odd_shape(self) -> tuple[int, int]:
        return (self.mesh.n_triangles, self.basis.n_odd)

    @property
    def n_dofs(self) -> int:
        return int(np.prod(self.even_shape) + np.prod(self.odd_shape))

    def check(self, x: ParityField) -> None:
        if x.even.shape != self.even_shape or x.odd.shape != self.odd_shape:
            raise ContractViolation(
                f"field shapes {x.even.shape}/{x.odd.shape} do not match system "
                f"{self.even_shape}/{self.odd_shape}"
            )

    def mass_dual_norm(self, r: ParityField) -> float:
        """L2 norm of the Riesz representative of a residual functional."""
        if self._mass_lu is None:
            self._mass_lu = spla.splu(self.spatial.M_plus.tocsc())
        ze = self._mass_lu.solve(r.even)
        zo = r.odd / self.spatial.M_minus[:, None]
        return float(np.sqrt(max(np.vdot(r.even, ze) + np.vdot(r.odd, zo), 0.0)))


def build_system(mesh: TriMesh, N: int, sigma_t: float, *,
                 moments: Sequence[float] | np.ndarray | None = None,
                 kernel: Callable[[np.ndarray], np.ndarray] | None = None,
                 ) -> TransportSystem:
    basis = AngularBasis.create(N)
    coll = collision_spectrum(sigma_t, N, moments=moments, kernel=kernel)
    return TransportSystem(basis, mesh, assemble_spatial(mesh), streaming_matrices(basis),
                           coll, HalfRangeCache(basis))


def build_isotropic_system(mesh: TriMesh, N: int, sigma_a: float, sigma_s: float
                           ) -> TransportSystem:
    """Constant isotropic medium; ``sigma_t = sigma_a + sigma_s``."""
    return build_system(mesh, N, sigma_a + sigma_s, moments=isotropic_moments(sigma_s, N))


def apply_S(sys: TransportSystem, x: ParityField) -> ParityField:
    """Skew part: streaming couplings between the parity blocks."""
    sys.check(x)
    G = sys.spatial.G
    even = np.zeros(sys.even_shape)
    odd = np.zeros(sys.odd_shape)
    for d in range(2):
        odd += (G[d] @ x.even) @ sys.A[d].T
        even -= G[d].T @ (x.odd @ sys.A[d])
    return ParityField(even, odd)


def apply_H(sys: TransportSystem, x: ParityField) -> ParityField:
    """Dissipative part: collision plus half-range boundary term."""
    sys.check(x)
    even = (sys.spatial.M_plus @ x.even) * sys.c_even
    for emass, bmat in sys.boundary_terms:
        even += (emass @ x.even) @ bmat
    odd = x.odd * (sys.spatial.M_minus[:, None] * sys.c_odd[None, :])
    return ParityField(even, odd)


def apply_B(sys: TransportSystem, x: ParityField) -> ParityField:
    return apply_S(sys, x) + apply_H(sys, x)


def apply_mass(sys: TransportSystem, x: ParityField) -> ParityField:
    sys.check(x)
    return ParityField(sys.spatial.M_plus @ x.even, x.odd * sys.spatial.M_minus[:, None])


def apply_shifted(sys: TransportSystem, x: ParityField, shift: float) -> ParityField:
    """``(shift * M + B) x``; the implicit Euler operator for ``shift = 1/tau``."""
    y = apply_B(sys, x)
    if shift:
        y = y + shift * apply_mass(sys, x)
    return y


def mass_norm(sys: TransportSystem, x: ParityField) -> float:
    return float(np.sqrt(max(apply_mass(sys, x).dot(x), 0.0)))
