import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pnfem.errors import ConfigurationError, ContractViolation
from pnfem.mesh import TriMesh, unit_square_mesh
from pnfem.operators import (
    ParityField,
    apply_B,
    apply_H,
    apply_mass,
    apply_S,
    apply_shifted,
    build_isotropic_system,
    build_system,
    mass_norm,
)
from pnfem.oracle import dense_matrices, kernel_from_moments


def _rel(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


def test_zero_maps_to_zero(tiny_system):
    y = apply_B(tiny_system, ParityField.zeros(tiny_system))
    assert not y.even.any() and not y.odd.any()


def test_constant_even_field_single_triangle():
    mesh = TriMesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    sys_ = build_isotropic_system(mesh, 1, 0.25, 0.5)
    x = ParityField.zeros(sys_)
    x.even[:, 0] = 1.0
    S = apply_S(sys_, x)
    assert np.abs(S.odd).max() < 1e-15
    coll = (sys_.spatial.M_plus @ x.even) * sys_.c_even
    assert np.allclose(coll[:, 0], 0.25 * sys_.spatial.M_plus.sum(axis=1).A1)


def test_apply_vs_dense(tiny_system, rng):
    B, M = dense_matrices(tiny_system)
    for _ in range(5):
        x = ParityField.random(tiny_system, rng)
        v = x.to_vector()
        assert _rel(apply_B(tiny_system, x).to_vector(), B @ v) < 1e-12
        assert _rel(apply_mass(tiny_system, x).to_vector(), M @ v) < 1e-12


def test_dense_block_structure(tiny_system):
    B, M = dense_matrices(tiny_system)
    ne = np.prod(tiny_system.even_shape)
    Bee, Beo, Boe, Boo = B[:ne, :ne], B[:ne, ne:], B[ne:, :ne], B[ne:, ne:]
    assert np.abs(Beo + Boe.T).max() < 1e-13
    assert np.abs(Bee - Bee.T).max() < 1e-13
    assert np.abs(Boo - Boo.T).max() < 1e-13
    assert np.isfinite(np.linalg.cond(B))


def test_anisotropic_kernel_vs_dense(two_triangles, rng):
    mom = [0.5, 0.2, -0.1, 0.05]
    sys_ = build_system(two_triangles, 3, 1.0, moments=mom)
    B, _ = dense_matrices(sys_, kernel=kernel_from_moments(mom))
    x = ParityField.random(sys_, rng)
    assert _rel(apply_B(sys_, x).to_vector(), B @ x.to_vector()) < 1e-12


def test_split_sums_exactly(tiny_system, rng):
    x = ParityField.random(tiny_system, rng)
    d = apply_S(tiny_system, x) + apply_H(tiny_system, x) - apply_B(tiny_system, x)
    assert np.abs(d.to_vector()).max() == 0.0


@pytest.mark.parametrize("N", [1, 3, 5])
def test_skew_and_coercive(N, rng):
    sys_ = build_isotropic_system(unit_square_mesh(4), N, 0.01, 1.0)
    for _ in range(100):
        x = ParityField.random(sys_, rng)
        m2 = mass_norm(sys_, x) ** 2
        assert abs(apply_S(sys_, x).dot(x)) <= 1e-12 * m2
        assert apply_H(sys_, x).dot(x) >= sys_.sigma_a * m2 - 1e-12


@given(st.integers(0, 2**32 - 1))
def test_mass_positive(seed):
    sys_ = build_isotropic_system(unit_square_mesh(2), 3, 0.5, 0.5)
    x = ParityField.random(sys_, np.random.default_rng(seed))
    assert apply_mass(sys_, x).dot(x) > 0


def test_constant_even_mass_is_area_weighted():
    sys_ = build_isotropic_system(unit_square_mesh(3), 1, 1.0, 0.0)
    x = ParityField.zeros(sys_)
    x.even[:] = 1.0
    x.odd[:] = 1.0
    y = apply_mass(sys_, x)
    assert y.even[:, 0].sum() == pytest.approx(1.0)
    assert np.allclose(y.odd[:, 0], sys_.mesh.areas)


@given(st.floats(0.0, 100.0), st.integers(0, 1000))
def test_shifted_linear(shift, seed):
    sys_ = build_isotropic_system(unit_square_mesh(2), 1, 0.5, 0.5)
    r = np.random.default_rng(seed)
    x, z = ParityField.random(sys_, r), ParityField.random(sys_, r)
    lhs = apply_shifted(sys_, x + 2.0 * z, shift)
    rhs = apply_shifted(sys_, x, shift) + 2.0 * apply_shifted(sys_, z, shift)
    assert np.allclose(lhs.to_vector(), rhs.to_vector(), rtol=1e-12, atol=1e-12)


def test_shape_mismatch_rejected():
    sys_ = build_isotropic_system(unit_square_mesh(2), 1, 0.5, 0.5)
    other = build_isotropic_system(unit_square_mesh(2), 3, 0.5, 0.5)
    with pytest.raises(ContractViolation):
        apply_B(sys_, ParityField.zeros(other))


def test_zero_absorption_rejected():
    with pytest.raises(ConfigurationError):
        build_isotropic_system(unit_square_mesh(1), 1, 0.0, 1.0)


def test_dense_oracle_size_guard():
    sys_ = build_isotropic_system(unit_square_mesh(16), 3, 0.5, 0.5)
    with pytest.raises(ContractViolation):
        dense_matrices(sys_)


def test_vector_round_trip(tiny_system, rng):
    x = ParityField.random(tiny_system, rng)
    y = ParityField.from_vector(x.to_vector(), tiny_system)
    assert np.array_equal(x.even, y.even) and np.array_equal(x.odd, y.odd)
    assert x.is_finite()
