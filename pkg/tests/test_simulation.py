import io
import math

import numpy as np
import pytest

from pnfem.benchmark import ManufacturedLoad, ManufacturedSolution
from pnfem.errors import ConfigurationError, SolverError
from pnfem.mesh import unit_square_mesh
from pnfem.operators import ParityField, apply_shifted, build_isotropic_system, mass_norm
from pnfem.simulation import (
    DiscreteSeriesField,
    ZeroField,
    TransientConfig,
    bilinear_load,
    elliptic_projection,
    energy_bound,
    interpolate,
    run_transient,
)
from pnfem.solvers import SolverConfig, solve_stationary, solve_step

TIGHT = SolverConfig(rel_tolerance=1e-13)


@pytest.fixture(scope="module")
def small_sys():
    return build_isotropic_system(unit_square_mesh(4), 3, 1.0, 1.0)


def test_config_validation():
    for tau, t_end in ((0.0, 1.0), (2.0, 1.0), (-1.0, 1.0)):
        with pytest.raises(ConfigurationError):
            TransientConfig(tau, t_end)
    with pytest.raises(ConfigurationError):
        TransientConfig(0.1, 1.0, record_every=0)
    assert TransientConfig(0.1, 1.0).n_steps == 10
    assert TransientConfig(0.3, 1.0).n_steps == 4


def test_large_step_warns_but_runs():
    sys_ = build_isotropic_system(unit_square_mesh(2), 1, 0.01, 1.0)
    with pytest.warns(UserWarning, match="exceeds"):
        run_transient(sys_, TransientConfig(60.0, 60.0), None)


def test_zero_source_zero_state(small_sys):
    res = run_transient(small_sys, TransientConfig(0.1, 0.5), None)
    assert all(not s.even.any() and not s.odd.any() for _, _, s in res.snapshots)
    assert res.trace.energy == [0.0] * 6


def test_projection_of_zero(small_sys):
    x = elliptic_projection(small_sys, ZeroField(small_sys.basis))
    assert not x.even.any() and not x.odd.any()


@pytest.mark.parametrize("N", [1, 3])
def test_projection_idempotent(N, rng):
    sys_ = build_isotropic_system(unit_square_mesh(3), N, 0.2, 1.0)
    x = ParityField.random(sys_, rng)
    p = elliptic_projection(sys_, DiscreteSeriesField(sys_, x), TIGHT)
    assert mass_norm(sys_, p - x) <= 1e-9 * mass_norm(sys_, x)


def test_bilinear_load_of_discrete_field_is_apply_b(rng):
    sys_ = build_isotropic_system(unit_square_mesh(3), 3, 0.2, 1.0)
    x = ParityField.random(sys_, rng)
    y = bilinear_load(sys_, DiscreteSeriesField(sys_, x))
    ref = apply_shifted(sys_, x, 0.0)
    assert np.abs((y - ref).to_vector()).max() < 1e-12 * np.abs(ref.to_vector()).max()


@pytest.mark.parametrize("divisions", [4, 8])
def test_projection_quasi_optimal(divisions):
    sol = ManufacturedSolution(2, 0.5, 1.0)
    sys_ = build_isotropic_system(unit_square_mesh(divisions), 3, 0.5, 1.0)
    target = sol.field_at(1.0, 3)
    from pnfem.benchmark import ErrorEvaluator

    ev = ErrorEvaluator(sol, sys_)
    g = sol.g(1.0)

    def err(x):
        ep, _, em = ev.squared(g, x)
        return math.sqrt(ep + em)

    proj = elliptic_projection(sys_, target, TIGHT)
    assert err(proj) <= 100.0 * err(interpolate(sys_, target))


def test_exponential_stability():
    sys_ = build_isotropic_system(unit_square_mesh(6), 3, 1.0, 1.0)
    sol = ManufacturedSolution(2, 1.0, 1.0)
    load = ManufacturedLoad(sol, sys_)(math.inf)
    steady = solve_stationary(sys_, load, TIGHT)
    res = run_transient(sys_, TransientConfig(0.05, 5.0), lambda t: load, None, TIGHT,
                        steady=steady, keep_snapshots=False)
    s0 = mass_norm(sys_, steady) ** 2
    t = np.array(res.trace.times)
    dist = np.array(res.trace.dist_to_steady)
    assert np.all(dist <= np.exp(-sys_.sigma_a * t) * s0 + 1e-10)


def test_steady_state_is_fixed_point():
    sys_ = build_isotropic_system(unit_square_mesh(4), 3, 0.5, 1.0)
    sol = ManufacturedSolution(2, 0.5, 1.0)
    load = ManufacturedLoad(sol, sys_)(math.inf)
    steady = solve_stationary(sys_, load, TIGHT)
    res = run_transient(sys_, TransientConfig(0.1, 1.0), lambda t: load, steady,
                        SolverConfig(1e-10), steady=steady)
    scale = mass_norm(sys_, steady)
    assert max(res.trace.dist_to_steady) <= (1e-9 * scale) ** 2


def test_monotone_decay_without_source(rng):
    sys_ = build_isotropic_system(unit_square_mesh(4), 3, 0.05, 1.0)
    res = run_transient(sys_, TransientConfig(0.05, 2.0), None, ParityField.random(sys_, rng))
    e = np.sqrt(res.trace.energy)
    assert np.all(np.diff(e) <= 1e-12 * e[0])


def test_discrete_energy_estimate(rng):
    sol = ManufacturedSolution(2)
    sys_ = build_isotropic_system(unit_square_mesh(6), 3, 0.01, 1.0)
    tau = 0.1
    assert tau <= 1 / (2 * sys_.sigma_a)
    x0 = ParityField.random(sys_, rng) * 0.1
    res = run_transient(sys_, TransientConfig(tau, 3.0), ManufacturedLoad(sol, sys_), x0)
    t = np.array(res.trace.times)
    qn = [sol.source_norm_sq(k * tau) for k in range(1, len(t))]
    bound = energy_bound(sys_, t, mass_norm(sys_, x0) ** 2, qn, tau)
    assert np.all(np.array(res.trace.energy) <= bound + 1e-9)


def test_half_steps_consistency_order():
    # one step of tau vs two of tau/2 differ by O(tau^2)
    sys_ = build_isotropic_system(unit_square_mesh(4), 1, 0.5, 1.0)
    sol = ManufacturedSolution(2, 0.5, 1.0)
    x0 = elliptic_projection(sys_, sol.field_at(1.0, 1), TIGHT)
    zero = ParityField.zeros(sys_)
    diffs = []
    for tau in (0.025, 0.0125, 0.00625, 0.003125):
        one = solve_step(sys_, 1 / tau, x0, zero, TIGHT)
        two = solve_step(sys_, 2 / tau, solve_step(sys_, 2 / tau, x0, zero, TIGHT), zero, TIGHT)
        diffs.append(mass_norm(sys_, one - two))
    orders = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    assert np.all(np.abs(orders - 2.0) <= 0.5)


def test_record_every_and_csv(small_sys, rng):
    res = run_transient(small_sys, TransientConfig(0.1, 1.0, record_every=3), None,
                        ParityField.random(small_sys, rng))
    assert res.trace.steps == [0, 3, 6, 9, 10]
    buf = io.StringIO()
    res.trace.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "step,t,energy,dist_to_steady"
    assert len(lines) == 6
    assert lines[1].split(",")[3] == "nan"
    assert all(math.isfinite(e) and e >= 0 for e in res.trace.energy)


def test_observer_sees_every_step(small_sys):
    seen = []
    run_transient(small_sys, TransientConfig(0.25, 1.0, record_every=2), None,
                  observer=lambda n, t, x: seen.append((n, t)))
    assert seen == [(0, 0.0), (1, 0.25), (2, 0.5), (3, 0.75), (4, 1.0)]


def test_solver_failure_names_step(rng):
    sys_ = build_isotropic_system(unit_square_mesh(6), 3, 0.01, 1.0)
    with pytest.raises(SolverError) as exc:
        run_transient(sys_, TransientConfig(10.0, 30.0), lambda t: ParityField.random(sys_, rng),
                      None, SolverConfig(1e-12, 2))
    assert exc.value.step == 1
    assert "time step 1" in str(exc.value)
