"""Oracle and property checks runnable from the command line.

Each check is cheap (seconds at most) and seeded; the seed is printed so
a failure can be replayed.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from .angular import (
    AngularBasis,
    collision_spectrum,
    halfrange_matrix,
    kernel_legendre_moments,
    modes_up_to,
    real_sh_all,
    sphere_quadrature,
    streaming_matrices,
)
from .benchmark import ManufacturedSolution, compute_eoc
from .mesh import TriMesh, assemble_spatial, dof_count, unit_square_mesh
from .operators import (
    ParityField,
    apply_B,
    apply_H,
    apply_mass,
    apply_S,
    build_isotropic_system,
    mass_norm,
)
from .oracle import (
    dense_matrices,
    halfrange_reference,
    kernel_from_moments,
    reference_basis_values,
    streaming_reference,
    strong_form_residual,
)
from .solvers import SolverConfig, dense_oracle_solve, solve_stationary

SEED = 20240611


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def two_triangle_mesh() -> TriMesh:
    return TriMesh.from_arrays([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                               [[0, 1, 2], [0, 2, 3]])


def _check_orthonormality(rng):
    pts, w = sphere_quadrature(12)
    Y = real_sh_all(9, pts)
    err = np.abs((Y * w[:, None]).T @ Y - np.eye(Y.shape[1])).max()
    return err < 1e-12, f"max |G - I| = {err:.2e}"


def _check_sh_reference(rng):
    s = rng.standard_normal((200, 3))
    s /= np.linalg.norm(s, axis=1)[:, None]
    modes = modes_up_to(7)
    err = np.abs(real_sh_all(7, s) - reference_basis_values(modes, s)).max()
    return err < 1e-12, f"max deviation from scipy = {err:.2e}"


def _check_streaming(rng):
    worst = 0.0
    for N in (1, 3, 5, 7):
        basis = AngularBasis.create(N)
        sm = streaming_matrices(basis)
        for d in range(3):
            worst = max(worst, np.abs(sm[d].toarray() - streaming_reference(basis, d)).max())
    return worst < 1e-12, f"max entry error = {worst:.2e}"


def _check_halfrange(rng):
    worst = 0.0
    for N in (1, 3, 5, 7):
        basis = AngularBasis.create(N)
        for n in ([1.0, 0, 0], [0, 0, 1.0], [-1.0, 0, 0], [0, 0, -1.0]):
            B = halfrange_matrix(basis, n).matrix
            worst = max(worst, np.abs(B - halfrange_reference(basis, n)).max())
            if np.linalg.eigvalsh(B).min() < -1e-10:
                return False, f"B_n not PSD for N={N}, n={n}"
    return worst < 1e-10, f"max entry error = {worst:.2e}"


def _check_collision(rng):
    mom = rng.uniform(-0.2, 0.2, 8)
    mom[0] = 0.5
    kernel = kernel_from_moments(mom)
    got = kernel_legendre_moments(kernel, 7)
    err = np.abs(got - mom).max()
    spectrum = collision_spectrum(1.0, 7, kernel=kernel)
    ok = err < 1e-11 and np.allclose(spectrum.c, 1.0 - got)
    return ok, f"max moment error = {err:.2e}"


def _check_dense_operators(rng):
    worst = 0.0
    for mesh in (two_triangle_mesh(), unit_square_mesh(2)):
        for N in (1, 3):
            sys_ = build_isotropic_system(mesh, N, 0.3, 0.7)
            B, M = dense_matrices(sys_)
            for _ in range(5):
                x = ParityField.random(sys_, rng)
                v = x.to_vector()
                worst = max(worst,
                            np.abs(apply_B(sys_, x).to_vector() - B @ v).max() / np.abs(B @ v).max(),
                            np.abs(apply_mass(sys_, x).to_vector() - M @ v).max() / np.abs(M @ v).max())
    return worst < 1e-12, f"max relative deviation = {worst:.2e}"


def _check_solver(rng):
    worst = 0.0
    cfg = SolverConfig(rel_tolerance=1e-12)
    for mesh in (two_triangle_mesh(), unit_square_mesh(2)):
        for N in (1, 3):
            sys_ = build_isotropic_system(mesh, N, 0.3, 0.7)
            for _ in range(3):
                load = ParityField.random(sys_, rng)
                x = solve_stationary(sys_, load, cfg)
                ref = dense_oracle_solve(sys_, load)
                worst = max(worst, mass_norm(sys_, x - ref) / mass_norm(sys_, ref))
    return worst < 1e-9, f"max relative mass-norm deviation = {worst:.2e}"


def _check_split(rng):
    sys_ = build_isotropic_system(unit_square_mesh(3), 3, 0.05, 1.0)
    worst_s, worst_h = 0.0, math.inf
    for _ in range(100):
        x = ParityField.random(sys_, rng)
        m2 = mass_norm(sys_, x) ** 2
        worst_s = max(worst_s, abs(apply_S(sys_, x).dot(x)) / m2)
        worst_h = min(worst_h, apply_H(sys_, x).dot(x) - sys_.sigma_a * m2)
    ok = worst_s < 1e-12 and worst_h >= -1e-12
    return ok, f"max |<Sx,x>|/|x|^2 = {worst_s:.2e}, min <Hx,x> - sa|x|^2 = {worst_h:.2e}"


def _check_strong_form(rng):
    sol = ManufacturedSolution(2)
    r = rng.random((50, 2))
    s = rng.standard_normal((50, 3))
    s /= np.linalg.norm(s, axis=1)[:, None]
    t = float(rng.uniform(0.0, 3.0))
    res = strong_form_residual(2, sol.sigma_t, lambda mu: np.full_like(mu, 1 / (4 * np.pi)),
                               sol.pointwise_source, r, s, t)
    err = np.abs(res).max()
    return err < 1e-10, f"max |residual| = {err:.2e}"


def _check_dofs(rng):
    got = [dof_count(N, n_vertices=16129, n_triangles=31752) for N in (1, 3, 5, 7)]
    return got == [111385, 414294, 908727, 1594684], f"dofs = {got}"


def _check_eoc(rng):
    got = [compute_eoc(e, p)[1] for e, p in (((6.06e-2, 2.41e-2), (1, 3)),
                                              ((1.94e-2, 3.77e-3), (8, 16)),
                                              ((3.81e-2, 2.10e-2), (2, 4)))]
    ok = all(abs(g - w) <= 0.01 for g, w in zip(got, (0.84, 2.36, 0.86)))
    return ok, "eoc = " + ", ".join(f"{g:.3f}" for g in got)


def _check_spatial_matrices(rng):
    mesh = unit_square_mesh(5)
    sm = assemble_spatial(mesh)
    ok = abs(sm.M_plus.sum() - 1.0) < 1e-13
    ok &= all(np.abs(np.asarray(G.sum(axis=1))).max() < 1e-14 for G in sm.G)
    closure = sum(e.length * e.normal for e in mesh.boundary_edges)
    ok &= np.abs(closure).max() < 1e-13
    return bool(ok), f"boundary closure = {np.abs(closure).max():.1e}"


CHECKS: dict[str, Callable[[np.random.Generator], tuple[bool, str]]] = {
    "sh-orthonormality": _check_orthonormality,
    "sh-reference": _check_sh_reference,
    "streaming-oracle": _check_streaming,
    "halfrange-oracle": _check_halfrange,
    "collision-moments": _check_collision,
    "spatial-matrices": _check_spatial_matrices,
    "dof-count": _check_dofs,
    "dense-operators": _check_dense_operators,
    "schur-vs-dense": _check_solver,
    "skew-dissipative-split": _check_split,
    "strong-form-source": _check_strong_form,
    "eoc-formula": _check_eoc,
}


def run_all(stream: TextIO = sys.stdout, seed: int = SEED) -> list[CheckResult]:
    print(f"verify: seed {seed}", file=stream)
    results = []
    for k, (name, check) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, k])
        try:
            ok, detail = check(rng)
        except Exception as exc:  # a crash is a failed check, reported like one
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=stream)
    return results
