import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pnfem.angular import (
    AngularBasis,
    HalfRangeCache,
    ModeIndex,
    collision_spectrum,
    flat_index,
    halfrange_matrix,
    halfrange_quadrature,
    isotropic_moments,
    kernel_legendre_moments,
    modes_up_to,
    n_even_modes,
    n_odd_modes,
    real_sh_all,
    sh_eval,
    sphere_quadrature,
    streaming_matrices,
)
from pnfem.errors import ConfigurationError, InputDomainError
from pnfem.oracle import (
    angle_rule,
    gram,
    halfrange_reference,
    kernel_from_moments,
    reference_basis_values,
    streaming_reference,
)

from conftest import random_unit


def test_constant_mode_value():
    assert sh_eval(ModeIndex(0, 0), [0.6, 0.0, 0.8]) == pytest.approx(0.28209479177387814, abs=1e-14)


def test_y10_at_pole():
    assert sh_eval(ModeIndex(1, 0), [0.0, 0.0, 1.0]) == pytest.approx(0.48860251190291987, abs=1e-14)


def test_non_unit_direction_rejected():
    with pytest.raises(InputDomainError):
        sh_eval(ModeIndex(1, 0), [0.0, 0.0, 1.1])


def test_matches_scipy_reference(rng):
    s = random_unit(rng, 300)
    ref = reference_basis_values(modes_up_to(9), s)
    assert np.abs(real_sh_all(9, s) - ref).max() < 1e-12


def test_parity_exact(rng):
    s = random_unit(rng, 10_000)
    Y = real_sh_all(7, s)
    Yneg = real_sh_all(7, -s)
    sign = np.array([(-1.0) ** md.l for md in modes_up_to(7)])
    assert np.abs(Yneg - sign * Y).max() < 1e-13


def test_gram_identity_l9():
    pts, w = sphere_quadrature(12)
    Y = real_sh_all(9, pts)
    assert np.abs((Y * w[:, None]).T @ Y - np.eye(100)).max() < 1e-12


def test_gram_identity_independent_rule():
    pts, w = angle_rule(16, 16)
    Y = real_sh_all(9, pts)
    assert np.abs((Y * w[:, None]).T @ Y - np.eye(100)).max() < 1e-12


@pytest.mark.parametrize("order", [1, 2, 5, 17])
def test_quadrature_weights_sum(order):
    _, w = sphere_quadrature(order)
    assert abs(w.sum() - 4 * math.pi) < 1e-13


def test_quadrature_second_moment():
    s, w = sphere_quadrature(4)
    assert abs(w @ s[:, 2] ** 2 - 4 * math.pi / 3) < 1e-12


@pytest.mark.parametrize("n", [(0, 0, 1.0), (1.0, 0, 0), (0, 0, -1.0)])
def test_abs_cosine_integral(n):
    # |s.n| has a kink on a great circle; the half-range rule is split there
    # and carries |s.n| in its weights.
    s, w = halfrange_quadrature(np.array(n), 8)
    assert abs(w.sum() - 2 * math.pi) < 1e-10
    assert np.allclose(np.linalg.norm(s, axis=1), 1.0)


def test_basis_counts():
    b = AngularBasis.create(3)
    assert (b.n_even, b.n_odd) == (6, 10)
    b = AngularBasis.create(5)
    assert (b.n_even, b.n_odd) == (15, 21)
    assert all(md.l % 2 == 0 for md in b.even_modes)
    assert all(md.l % 2 == 1 for md in b.odd_modes)


@given(st.integers(0, 20).map(lambda k: 2 * k + 1))
def test_basis_count_formula(N):
    assert n_even_modes(N) == sum(2 * l + 1 for l in range(0, N + 1, 2))
    assert n_odd_modes(N) == sum(2 * l + 1 for l in range(1, N + 1, 2))
    assert n_even_modes(N) + n_odd_modes(N) == (N + 1) ** 2


@pytest.mark.parametrize("N", [0, 2, 4, -1])
def test_even_or_nonpositive_order_rejected(N):
    with pytest.raises(ConfigurationError):
        AngularBasis.create(N)


def test_mode_ordering_sorted():
    b = AngularBasis.create(5)
    for modes in (b.even_modes, b.odd_modes):
        assert list(modes) == sorted(modes)
    assert flat_index(ModeIndex(2, -2)) == 4


def test_streaming_known_entry():
    b = AngularBasis.create(1)
    A3 = streaming_matrices(b)[2]
    assert A3[b.odd_position(ModeIndex(1, 0)), b.even_position(ModeIndex(0, 0))] == pytest.approx(
        0.57735026918962584, abs=1e-12)


@pytest.mark.parametrize("N", [1, 3, 5, 7])
def test_streaming_vs_oracle(N):
    b = AngularBasis.create(N)
    sm = streaming_matrices(b)
    for d in range(3):
        A = sm[d]
        assert A.shape == (b.n_odd, b.n_even)
        assert np.all(np.isfinite(A.data))
        assert np.abs(A.toarray() - streaming_reference(b, d)).max() < 1e-12


def test_equal_parity_couplings_vanish():
    b = AngularBasis.create(5)
    pts, w = angle_rule(10, 10)
    for modes in (b.even_modes, b.odd_modes):
        for d in range(3):
            G = gram(modes, modes, pts, w, lambda s, d=d: s[:, d])
            assert np.abs(G).max() < 1e-12


def test_collision_benchmark_parameters():
    spectrum = collision_spectrum(1.01, 7, moments=isotropic_moments(1.0, 7))
    assert spectrum.c[0] == pytest.approx(0.01, abs=1e-14)
    assert np.allclose(spectrum.c[1:], 1.01, atol=1e-14)
    assert spectrum.sigma_a_lower == pytest.approx(0.01)


def test_isotropic_kernel_moments_by_quadrature():
    mom = kernel_legendre_moments(lambda mu: np.full_like(mu, 1 / (4 * math.pi)), 6)
    assert mom[0] == pytest.approx(1.0, abs=1e-14)
    assert np.abs(mom[1:]).max() < 1e-14


def test_pure_absorber():
    spectrum = collision_spectrum(1.0, 5)
    assert np.allclose(spectrum.c, 1.0)


def test_random_kernel_moments(rng):
    mom = rng.uniform(-0.1, 0.1, 10)
    mom[0] = 0.4
    got = kernel_legendre_moments(kernel_from_moments(mom), 9)
    assert np.abs(got - mom).max() < 1e-11


def test_noncoercive_rejected():
    with pytest.raises(ConfigurationError):
        collision_spectrum(1.0, 3, moments=isotropic_moments(1.0, 3))


def test_halfrange_constant_mode():
    b = AngularBasis.create(3)
    for n in ([1.0, 0, 0], [0, 0, 1.0], [0.6, 0, 0.8]):
        assert halfrange_matrix(b, n).matrix[0, 0] == pytest.approx(0.5, abs=1e-14)


def test_halfrange_non_unit_rejected():
    with pytest.raises(InputDomainError):
        halfrange_matrix(AngularBasis.create(1), [1.0, 0, 0.5])


@pytest.mark.parametrize("N", [1, 3, 5, 7])
@pytest.mark.parametrize("n", [(1.0, 0, 0), (-1.0, 0, 0), (0, 0, 1.0), (0, 0, -1.0)])
def test_halfrange_vs_oracle(N, n):
    b = AngularBasis.create(N)
    B = halfrange_matrix(b, n).matrix
    assert np.array_equal(B, B.T)
    assert np.abs(B - halfrange_reference(b, n)).max() < 1e-10
    assert np.linalg.eigvalsh(B).min() >= -1e-10


def test_halfrange_oblique_normal():
    # The oracle converges slowly for oblique normals; a looser check.
    b = AngularBasis.create(3)
    n = np.array([0.6, 0.0, 0.8])
    assert np.abs(halfrange_matrix(b, n).matrix - halfrange_reference(b, n)).max() < 1e-8


def test_halfrange_cache_dedupes():
    cache = HalfRangeCache(AngularBasis.create(3))
    a = cache.get([1.0, 0, 0])
    b = cache.get([1.0, 1e-14, 0])
    cache.get([0, 0, 1.0])
    assert a is b
    assert len(cache) == 2
