import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from salr.dynamics import (IntegrationError, SolverConfig, hamiltonian, integrate, interaction_energy,
                           minkowski_distance, pairwise_force, rhs, to_solver_space)
from salr.particles import ParticleSystem
from salr.potential import (FlatPotential, InteractionSpec, QuadraticWell, confining_from_mask,
                            solve_interaction_params, v_int, v_int_prime)

SPEC = InteractionSpec(-1.0, 2.0, 13.0)


@pytest.fixture(scope="module")
def params():
    return solve_interaction_params(SPEC)


def make_system(positions, momenta=None, charges=1.0, mass=1.0, p=2.0):
    pos = np.asarray(positions, float)
    mom = np.zeros_like(pos) if momenta is None else np.asarray(momenta, float)
    N = len(pos)
    return ParticleSystem(pos, mom, np.broadcast_to(charges, (N,)).astype(float), np.full(N, mass), p)


@pytest.mark.parametrize("p,expected", [(2, 5.0), (math.inf, 4.0), (1, 7.0), (3, (27 + 64) ** (1 / 3))])
def test_minkowski_examples(p, expected):
    assert minkowski_distance([0, 0], [3, 4], p) == pytest.approx(expected)


def test_minkowski_errors():
    with pytest.raises(ValueError):
        minkowski_distance([0, 0], [1, 1], 0.5)
    with pytest.raises(ValueError):
        minkowski_distance([0, 0], [1, 1, 1], 2)


def central_gradient(positions, charges, params, p, h=1e-6):
    g = np.zeros_like(positions)
    for i in range(positions.shape[0]):
        for a in range(positions.shape[1]):
            up, dn = positions.copy(), positions.copy()
            up[i, a] += h
            dn[i, a] -= h
            g[i, a] = (interaction_energy(up, charges, params, 1.0, p)
                       - interaction_energy(dn, charges, params, 1.0, p)) / (2 * h)
    return g


def test_pair_force_zero_at_r0(params):
    f = pairwise_force(np.array([[0.0, 0.0], [2.0, 0.0]]), np.ones(2), params)
    assert np.abs(f).max() < 1e-4


@pytest.mark.parametrize("sep", [3.0, 6.0, 10.0, 12.5])
def test_pair_force_attractive_between_r0_and_ra(params, sep):
    pos = np.array([[0.0, 0.0], [sep, 0.0]])
    f = pairwise_force(pos, np.ones(2), params)
    assert f[0, 0] > 0 and f[1, 0] < 0


def test_pair_force_repulsive_inside_core(params):
    f = pairwise_force(np.array([[0.0, 0.0], [1.0, 0.0]]), np.ones(2), params)
    assert f[0, 0] < 0 and f[1, 0] > 0


@pytest.mark.parametrize("p", [2.0, 1.5, 3.0])
def test_pair_force_matches_energy_gradient(params, rng, p):
    pos = rng.uniform(0, 12, size=(3, 2))
    q = rng.uniform(0.5, 1.5, size=3)
    f = pairwise_force(pos, q, params, p=p)
    g = central_gradient(pos, q, params, p)
    np.testing.assert_allclose(f, -g, rtol=1e-5, atol=1e-8)


def test_pair_force_max_metric_matches_energy_gradient(params):
    # generic positions: unique largest axis difference for every pair
    pos = np.array([[0.0, 0.0, 0.0], [4.0, 1.0, -0.5], [1.5, 7.0, 2.0]])
    f = pairwise_force(pos, np.ones(3), params, p=math.inf)
    g = central_gradient(pos, np.ones(3), params, math.inf)
    np.testing.assert_allclose(f, -g, rtol=1e-5, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), N=st.integers(2, 25), n=st.integers(1, 4),
       p=st.sampled_from([1.0, 2.0, 3.0, math.inf]))
def test_force_reciprocity(params, seed, N, n, p):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, 20, size=(N, n))
    f = pairwise_force(pos, rng.uniform(0.1, 1, N), params, p=p)
    assert np.abs(f.sum(axis=0)).max() < 1e-10


def test_coincident_particles_contribute_nothing(params):
    pos = np.array([[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_array_equal(pairwise_force(pos, np.ones(2), params), 0.0)


def test_pair_force_negligible_beyond_three_ra(params):
    near = np.abs(v_int_prime(np.linspace(0.0, 3 * SPEC.ra, 10_000), params)).max()
    far = np.abs(v_int_prime(np.linspace(3 * SPEC.ra, 30 * SPEC.ra, 10_000), params)).max()
    assert far < 1e-3 * near


@pytest.mark.parametrize("p", [1.0, 2.0, math.inf])
def test_pruned_force_equals_direct_when_cutoff_covers_all_pairs(params, rng, p):
    pos = rng.uniform(0, 30, size=(40, 2))
    full = pairwise_force(pos, np.ones(40), params, p=p)
    pruned = pairwise_force(pos, np.ones(40), params, p=p, cutoff=100.0)
    np.testing.assert_allclose(pruned, full, rtol=1e-12, atol=1e-14)


def test_pruned_force_drops_only_distant_pairs(params):
    pos = np.array([[0.0, 0.0], [5.0, 0.0], [100.0, 0.0]])
    pruned = pairwise_force(pos, np.ones(3), params, cutoff=3 * SPEC.ra)
    pair = pairwise_force(pos[:2], np.ones(2), params)
    np.testing.assert_allclose(pruned[:2], pair, rtol=1e-12)
    assert np.all(pruned[2] == 0)


def test_rhs_fixed_point_at_well_minimum(params):
    sys = make_system([[3.0, -1.0]])
    dr, dp = rhs(10.0, sys, QuadraticWell([3.0, -1.0]), params, SolverConfig())
    assert np.all(dr == 0) and np.all(dp == 0)


def test_damping_coefficient_at_t_1000(params):
    sys = make_system([[0.0, 0.0]], momenta=[[1.0, 0.0]], charges=0.0)
    _, dp = rhs(1000.0, sys, FlatPotential(), params, SolverConfig(alpha_rate=5e-4))
    assert dp[0, 0] == pytest.approx(-0.5)


def test_pure_damping_with_zero_charges(params, rng):
    mom = rng.standard_normal((6, 3))
    sys = make_system(rng.uniform(0, 10, (6, 3)), momenta=mom, charges=0.0, mass=2.0)
    t = 37.0
    dr, dp = rhs(t, sys, FlatPotential(), params, SolverConfig(alpha_rate=1e-3))
    np.testing.assert_allclose(dr, mom / 2.0)
    np.testing.assert_allclose(dp, -1e-3 * t / 2.0 * mom, rtol=1e-15)


def test_rhs_gradient_uses_chain_rule(params):
    # solver coordinates are data coordinates times the scale
    sys = make_system([[8.0, 0.0]], charges=0.0)
    well = QuadraticWell([0.0, 0.0], stiffness=2.0)
    _, dp = rhs(0.0, sys, well, params, SolverConfig(), solver_scale=4.0)
    # data position 2 -> grad 4, divided by the scale
    np.testing.assert_allclose(dp, [[-1.0, 0.0]])


def test_damped_particle_relaxes_to_minimum(params):
    sys = make_system([[5.0]], momenta=[[0.0]], charges=0.0)
    cfg = SolverConfig(alpha_rate=0.05, t_end=400.0, conv_speed=1e-4)
    out = integrate(sys, QuadraticWell([1.0], 0.2), params, cfg)
    assert out.converged
    assert abs(out.system.positions[0, 0] - 1.0) < 1e-2


def test_two_particles_settle_at_r0(params):
    # oracle: dense scan of the pair energy
    r = np.linspace(0.2, 13.0, 200_001)
    r_eq = r[np.argmin(v_int(r, params))]
    assert r_eq == pytest.approx(2.0, abs=1e-3)
    sys = make_system([[0.0, 0.0], [0.6 * SPEC.ra, 0.0]], momenta=[[0.0, 0.01], [0.0, -0.01]])
    out = integrate(sys, FlatPotential(), params, SolverConfig())
    sep = np.linalg.norm(out.system.positions[0] - out.system.positions[1])
    assert sep == pytest.approx(r_eq, rel=0.05)


def test_harmonic_energy_drift(params):
    well = QuadraticWell([0.0, 0.0], stiffness=1.0)
    sys = make_system([[1.0, 0.0]], momenta=[[0.0, 0.5]], charges=0.0)
    h0 = hamiltonian(sys, well, params, k=0.0)
    cfg = SolverConfig(alpha_rate=0.0, coupling_k=0.0, rel_tol=1e-6, abs_tol=1e-9, t_end=100.0,
                       conv_speed=0.0, record=True)
    out = integrate(sys, well, params, cfg)
    assert out.t == pytest.approx(100.0)
    # exact harmonic oracle: rotation in phase space
    x = np.array([out.system.positions[0, 0], out.system.momenta[0, 1]])
    exact = np.array([np.cos(100.0), 0.5 * np.cos(100.0)])
    assert abs(hamiltonian(out.system, well, params, k=0.0) - h0) / h0 < 1e-3
    np.testing.assert_allclose(x, exact, atol=1e-2)


def test_five_particle_hamiltonian_conserved(params):
    rng = np.random.default_rng(5)
    well = QuadraticWell([0.0, 0.0], stiffness=0.01)
    sys = make_system(rng.uniform(-5, 5, (5, 2)), momenta=0.05 * rng.standard_normal((5, 2)), charges=1.0)
    h0 = hamiltonian(sys, well, params)
    cfg = SolverConfig(alpha_rate=0.0, rel_tol=1e-6, abs_tol=1e-9, t_end=50.0, conv_speed=0.0)
    out = integrate(sys, well, params, cfg)
    assert out.t == pytest.approx(50.0)
    assert abs(hamiltonian(out.system, well, params) - h0) / abs(h0) < 1e-2


@pytest.fixture(scope="module")
def relaxed_run():
    m = np.zeros((40, 40), bool)
    m[8:32, 8:32] = True
    V = confining_from_mask(m)
    prm = solve_interaction_params(SPEC)
    rng = np.random.default_rng(2)
    sys = make_system(rng.uniform(12, 28, (6, 2)), momenta=0.01 * rng.standard_normal((6, 2)),
                      charges=6 ** (-1 / 3))
    return sys, V, prm, integrate(sys, V, prm, SolverConfig(record=True))


def trajectory_energy(sys, V, prm, history):
    energy = []
    for _, pos, mom in history:
        state = sys.copy()
        state.positions, state.momenta = pos, mom
        energy.append(hamiltonian(state, V, prm))
    return np.array(energy)


def test_damped_energy_never_increases_in_analytic_well(params):
    # dH/dt = -alpha |p|^2 / m exactly when forces are true gradients
    rng = np.random.default_rng(4)
    well = QuadraticWell([0.0, 0.0], stiffness=0.01)
    sys = make_system(rng.uniform(-6, 6, (6, 2)), momenta=0.05 * rng.standard_normal((6, 2)),
                      charges=6 ** (-1 / 3))
    cfg = SolverConfig(alpha_rate=5e-3, rel_tol=1e-7, abs_tol=1e-10, t_end=100.0, record=True)
    out = integrate(sys, well, params, cfg)
    energy = trajectory_energy(sys, well, params, out.history)
    assert np.all(np.diff(energy) <= 1e-7 * np.abs(energy).max())
    assert energy[-1] < energy[0]


def test_grid_well_run_loses_energy(relaxed_run):
    sys, V, prm, out = relaxed_run
    assert out.converged
    energy = trajectory_energy(sys, V, prm, out.history)
    assert energy[-1] < energy[0] - 1.0


def test_late_time_cooling(relaxed_run):
    _, _, _, out = relaxed_run
    t = np.array([h[0] for h in out.history])
    speed = np.array([np.linalg.norm(h[2], axis=1).mean() for h in out.history])
    grid = np.linspace(0.75 * out.t, out.t, 100)
    width = SolverConfig().conv_window
    windowed = np.array([speed[(t > g - width) & (t <= g)].mean() for g in grid])
    assert windowed[-1] < 0.2 * windowed[0]
    # oscillations slower than the window leave ripples of a few percent
    assert np.all(np.diff(windowed) <= 0.05 * windowed.max())


def test_speed_window_span_bounded(params):
    sys = make_system([[0.0, 0.0], [7.0, 0.0]])
    out = integrate(sys, FlatPotential(), params, SolverConfig(conv_window=3.0))
    ts = [s[0] for s in out.speed_window]
    assert ts[-1] - ts[0] <= 3.0 + 1e-9


def test_integration_is_deterministic(params):
    rng = np.random.default_rng(9)
    pos = rng.uniform(0, 10, (8, 2))
    mom = 0.01 * rng.standard_normal((8, 2))
    a = integrate(make_system(pos, mom), QuadraticWell([5, 5], 0.01), params)
    b = integrate(make_system(pos, mom), QuadraticWell([5, 5], 0.01), params)
    np.testing.assert_array_equal(a.system.positions, b.system.positions)
    assert a.step_count == b.step_count


def test_unconverged_run_returns_state(params):
    sys = make_system([[0.0, 0.0], [7.0, 0.0]])
    out = integrate(sys, FlatPotential(), params, SolverConfig(t_end=6.0, conv_speed=1e-12))
    assert not out.converged and out.t == pytest.approx(6.0)
    assert out.stats["particles"] == 2


def test_step_size_underflow_raises(params):
    class Stiff:
        def value_at(self, pts):
            return np.zeros(len(pts))

        def grad_at(self, pts):
            return np.full_like(pts, np.nan)

    with pytest.raises(IntegrationError, match="underflow"):
        integrate(make_system([[0.0, 0.0]]), Stiff(), params)


@pytest.mark.parametrize("kwargs", [{"rel_tol": 0}, {"abs_tol": -1}, {"t_end": 4, "conv_window": 5},
                                    {"metric_p": 0.5}, {"alpha_rate": -1}])
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_solver_space_scale():
    params, scale = to_solver_space(InteractionSpec(-1.0, 0.5, 2.0), ell=12.0)
    assert scale == pytest.approx(6.0)
    assert params.r0 == pytest.approx(3.0) and params.ra == pytest.approx(12.0)
    _, unit = to_solver_space(SPEC)
    assert unit == 1.0
    with pytest.raises(ValueError):
        to_solver_space(SPEC, ell=0.0)
