"""Independent reference computations used to check the fast paths.

Nothing here reuses the production quadratures, SH recursion or factor
matrices: spherical harmonics come from :func:`scipy.special.sph_harm_y`,
angular integrals use Gauss-Legendre in the polar *angle* times
Gauss-Legendre panels in azimuth (split at the kinks of ``|s.n|``), and
the dense system is integrated basis function by basis function.
Everything is dense and meant for tiny problems only.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import sph_harm_y

from .angular import AngularBasis, ModeIndex
from .errors import ContractViolation

MAX_ORACLE_DOFS = 2000


def real_sh_reference(mode: ModeIndex, s: np.ndarray) -> np.ndarray:
    """Real orthonormal SH built from scipy's complex harmonics."""
    l, m = mode
    s = np.atleast_2d(np.asarray(s, dtype=float))
    theta = np.arccos(np.clip(s[:, 2], -1.0, 1.0))
    phi = np.arctan2(s[:, 1], s[:, 0])
    if m == 0:
        return sph_harm_y(l, 0, theta, phi).real
    y = sph_harm_y(l, abs(m), theta, phi)
    sign = (-1.0) ** abs(m)
    if m > 0:
        return math.sqrt(2.0) * sign * y.real
    return math.sqrt(2.0) * sign * y.imag


def reference_basis_values(modes: Sequence[ModeIndex], s: np.ndarray) -> np.ndarray:
    return np.column_stack([real_sh_reference(md, s) for md in modes])


def _gl(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _panels(a: float, b: float, breaks: Sequence[float], n: int, n_uniform: int = 8):
    uniform = np.linspace(a, b, n_uniform + 1)
    cuts = sorted({*uniform.tolist(), *[c for c in breaks if a < c < b]})
    xs, ws = zip(*(_gl(lo, hi, n) for lo, hi in zip(cuts[:-1], cuts[1:])))
    return np.concatenate(xs), np.concatenate(ws)


def angle_rule(n_theta: int = 20, n_phi: int = 20, theta_breaks=(), phi_breaks=()):
    """Points and weights of a polar-angle x azimuth Gauss product rule.

    Both angles are cut into eight uniform panels (plus any requested
    breaks) with ``n_theta`` / ``n_phi`` Gauss nodes per panel.
    """
    th, wth = _panels(0.0, math.pi, theta_breaks, n_theta)
    ph, wph = _panels(-math.pi, math.pi, phi_breaks, n_phi)
    T, P = np.meshgrid(th, ph, indexing="ij")
    W = np.outer(wth * np.sin(th), wph)
    pts = np.column_stack([(np.sin(T) * np.cos(P)).ravel(),
                           (np.sin(T) * np.sin(P)).ravel(),
                           np.cos(T).ravel()])
    return pts, W.ravel()


def halfrange_rule(n: np.ndarray, n_theta: int = 20, n_phi: int = 20):
    """Rule for ``int |s.n| f ds``; weights include ``|s.n|``.

    Exact-kink splitting is done for the polar and in-plane axis normals;
    other normals get per-latitude azimuth panels, which converge only
    algebraically near the latitudes where the kink circle is tangent.
    """
    n = np.asarray(n, dtype=float)
    rho = math.hypot(n[0], n[1])
    if rho < 1e-14:
        pts, w = angle_rule(n_theta, n_phi, theta_breaks=(math.pi / 2,))
        return pts, w * np.abs(pts @ n)
    alpha = math.atan2(n[1], n[0])
    if abs(n[2]) < 1e-14:
        brk = [((alpha + sgn * math.pi / 2 + math.pi) % (2 * math.pi)) - math.pi
               for sgn in (-1, 1)]
        pts, w = angle_rule(n_theta, n_phi, phi_breaks=brk)
        return pts, w * np.abs(pts @ n)
    th0 = math.atan(abs(n[2]) / rho)
    th, wth = _panels(0.0, math.pi, (th0, math.pi - th0), n_theta)
    all_pts, all_w = [], []
    for t, wt in zip(th, wth):
        ratio = -n[2] * math.cos(t) / (rho * math.sin(t))
        brk = []
        if abs(ratio) < 1.0:
            dphi = math.acos(ratio)
            brk = [((alpha + sg * dphi + math.pi) % (2 * math.pi)) - math.pi for sg in (-1, 1)]
        ph, wph = _panels(-math.pi, math.pi, brk, n_phi)
        p = np.column_stack([np.full_like(ph, math.sin(t)) * np.cos(ph),
                             np.full_like(ph, math.sin(t)) * np.sin(ph),
                             np.full_like(ph, math.cos(t))])
        all_pts.append(p)
        all_w.append(wt * math.sin(t) * wph)
    pts = np.vstack(all_pts)
    w = np.concatenate(all_w)
    return pts, w * np.abs(pts @ n)


def gram(modes_a, modes_b, pts, w, weight_fn=None) -> np.ndarray:
    ya = reference_basis_values(modes_a, pts)
    yb = reference_basis_values(modes_b, pts)
    ww = w if weight_fn is None else w * weight_fn(pts)
    return (ya * ww[:, None]).T @ yb


def streaming_reference(basis: AngularBasis, d: int, n: int = 20) -> np.ndarray:
    pts, w = angle_rule(n, n)
    return gram(basis.odd_modes, basis.even_modes, pts, w, lambda p: p[:, d])


def halfrange_reference(basis: AngularBasis, normal, n: int = 20) -> np.ndarray:
    pts, w = halfrange_rule(np.asarray(normal, dtype=float), n, n)
    return gram(basis.even_modes, basis.even_modes, pts, w)


def kernel_from_moments(moments: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """Scattering kernel ``k(mu)`` with the given ``2 pi int k P_l`` moments."""
    mom = np.asarray(moments, dtype=float)
    coef = (2 * np.arange(mom.size) + 1) / (4 * math.pi) * mom
    return lambda mu: np.polynomial.legendre.legval(np.asarray(mu), coef)


def collision_reference(modes, sigma_t: float, kernel, n: int = 6) -> np.ndarray:
    """``sigma_t I - int int k(s.s') Y_i(s) Y_j(s') ds ds'`` by double quadrature."""
    pts, w = angle_rule(n, n)
    Y = reference_basis_values(modes, pts)
    K = kernel(np.clip(pts @ pts.T, -1.0, 1.0))
    scat = (Y * w[:, None]).T @ (K * w[None, :]) @ Y
    return sigma_t * np.eye(len(modes)) - scat


# ---------------------------------------------------------------------------
# Dense assembly
# ---------------------------------------------------------------------------

# Degree-2 three-point rule on the reference triangle (edge midpoints).
_TRI3 = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def _hat_coefficients(p: np.ndarray) -> np.ndarray:
    """Rows ``[a, b, c]`` with ``lambda_k(x, y) = a + b x + c y``."""
    mat = np.column_stack([np.ones(3), p])
    return np.linalg.solve(mat, np.eye(3)).T


def dense_matrices(sys, kernel=None) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``B`` and mass matrices of ``sys`` assembled from basis functions.

    Rows index test functions, columns trial functions, both in the
    flattened ``(even[v, i], odd[K, j])`` order of :class:`ParityField`.
    """
    if sys.n_dofs > MAX_ORACLE_DOFS:
        raise ContractViolation(
            f"dense oracle limited to {MAX_ORACLE_DOFS} dofs, system has {sys.n_dofs}"
        )
    basis, mesh = sys.basis, sys.mesh
    V, T = mesh.n_vertices, mesh.n_triangles
    ne, no = basis.n_even, basis.n_odd
    if kernel is None:
        kernel = kernel_from_moments(sys.collision.scattering_moments)

    pts, w = angle_rule(basis.N + 8, basis.N + 8)
    Ie = gram(basis.even_modes, basis.even_modes, pts, w)
    Io = gram(basis.odd_modes, basis.odd_modes, pts, w)
    Ad = [gram(basis.odd_modes, basis.even_modes, pts, w, lambda p, ax=ax: p[:, ax])
          for ax in (0, 2)]
    allm = list(basis.even_modes) + list(basis.odd_modes)
    C = collision_reference(allm, sys.collision.sigma_t, kernel, n=basis.N // 2 + 5)
    Ce, Co = C[:ne, :ne], C[ne:, ne:]

    Mv = np.zeros((V, V))
    Mt = np.zeros(T)
    Gd = [np.zeros((T, V)) for _ in range(2)]
    for K, tri in enumerate(mesh.triangles):
        p = mesh.vertices[tri]
        area = 0.5 * abs(np.linalg.det(np.column_stack([p[1] - p[0], p[2] - p[0]])))
        coef = _hat_coefficients(p)
        qp = _TRI3 @ p
        lam = coef[:, 0][None, :] + qp @ coef[:, 1:].T  # (3 pts, 3 hats)
        wq = np.full(3, area / 3.0)
        Mv[np.ix_(tri, tri)] += (lam * wq[:, None]).T @ lam
        Mt[K] = wq.sum()
        for d in range(2):
            Gd[d][K, tri] += wq.sum() * coef[:, 1 + d]

    Bee = np.kron(Mv, Ce)
    gx, gw = _gl(0.0, 1.0, 4)
    for edge in mesh.boundary_edges:
        a, b = edge.vertices
        lam = np.column_stack([1.0 - gx, gx])
        Me = (lam * (gw * edge.length)[:, None]).T @ lam
        n3 = np.array([edge.normal[0], 0.0, edge.normal[1]])
        Bn = halfrange_reference(basis, n3, n=basis.N + 8)
        idx = [a, b]
        for r in range(2):
            for c in range(2):
                Bee[idx[r] * ne:(idx[r] + 1) * ne, idx[c] * ne:(idx[c] + 1) * ne] += Me[r, c] * Bn
    Boo = np.kron(np.diag(Mt), Co)
    # Odd rows / even columns: (s.grad phi+, psi-); even rows / odd columns: -(phi-, s.grad psi+).
    Boe = sum(np.kron(Gd[d], Ad[d]) for d in range(2))
    Beo = -Boe.T
    B = np.block([[Bee, Beo], [Boe, Boo]])
    M = np.block([[np.kron(Mv, Ie), np.zeros((V * ne, T * no))],
                  [np.zeros((T * no, V * ne)), np.kron(np.diag(Mt), Io)]])
    return B, M


# ---------------------------------------------------------------------------
# Pointwise strong form
# ---------------------------------------------------------------------------


def manufactured_pointwise(n_max: int, r: np.ndarray, s: np.ndarray, t: float):
    """Analytic ``phi``, ``d phi/dt`` and ``s.grad phi`` of the benchmark solution."""
    r = np.atleast_2d(r)
    s = np.atleast_2d(s)
    prof = np.sin(np.pi * r[:, 0]) * np.sin(np.pi * r[:, 1])
    d1 = np.pi * np.cos(np.pi * r[:, 0]) * np.sin(np.pi * r[:, 1])
    d3 = np.pi * np.sin(np.pi * r[:, 0]) * np.cos(np.pi * r[:, 1])
    ang = sum(real_sh_reference(ModeIndex(l, 0), s) / (l + 1) ** 2 for l in range(n_max + 1))
    g, dg = 1.0 - math.exp(-t), math.exp(-t)
    return g * prof * ang, dg * prof * ang, g * (s[:, 0] * d1 + s[:, 2] * d3) * ang


def strong_form_residual(n_max: int, sigma_t: float, kernel, source, r, s, t,
                         n_quad: int = 10) -> np.ndarray:
    """``d_t phi + s.grad phi + C phi - q`` at paired samples ``(r_k, s_k)``.

    ``source(r, s, t)`` is the manufactured source under test.  The
    scattering integral is evaluated by brute-force sphere quadrature.
    """
    r = np.atleast_2d(r)
    s = np.atleast_2d(s)
    phi, dphi, stream = manufactured_pointwise(n_max, r, s, t)
    qp, qw = angle_rule(n_quad, n_quad)
    out = np.empty(len(r))
    for k in range(len(r)):
        phi_sp, _, _ = manufactured_pointwise(n_max, np.repeat(r[k:k + 1], len(qp), 0), qp, t)
        scat = np.dot(qw * kernel(np.clip(qp @ s[k], -1.0, 1.0)), phi_sp)
        coll = sigma_t * phi[k] - scat
        out[k] = dphi[k] + stream[k] + coll - float(np.squeeze(source(r[k:k + 1], s[k:k + 1], t)))
    return out
