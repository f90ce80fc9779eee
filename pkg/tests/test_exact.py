import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from spinbath.exact import (
    INTERACTION,
    SCHROEDINGER,
    EigenmodeDecomposition,
    NormDriftError,
    SingleExcitationState,
    StepPolicy,
    Trajectory,
    diagonalize_model,
    eigenmode_propagate,
    initial_state,
    integrate,
    rhs,
    to_interaction_picture,
    to_schroedinger_picture,
    uniform_schedule,
)
from spinbath.model import SpinBathInstance, SpinBathSpec, build_instance


def small(n=30, kappa="none", seed=3, rate=0.05, width=1.0):
    return build_instance(SpinBathSpec(n_spins=n, freq_width=width, target_rate=rate, kappa_mode=kappa, seed=seed))


def rabi(g=0.1):
    return SpinBathInstance(omegas=[1.0], gammas=[g])


# -- rhs -------------------------------------------------------------------


def test_rhs_initial_state():
    inst = small(kappa="same")
    d = rhs(inst, initial_state(inst))
    assert d[0] == 0
    np.testing.assert_allclose(d[1:], -1j * inst.gammas, rtol=0, atol=1e-17)


def test_rhs_decoupled_is_zero():
    inst = SpinBathInstance(omegas=[0.5, 1.4], gammas=[0.0, 0.0], kappas=np.zeros((2, 2)))
    c = np.array([0.3, 0.4j, -0.5 + 0.1j])
    assert np.all(rhs(inst, c, 2.7) == 0)


def test_rhs_two_level_closed_form():
    # interaction picture, resonant: dC0 = -i g C1, dC1 = -i g C0
    g = 0.2
    inst = rabi(g)
    for t in (0.0, 1.3, 7.0):
        c = np.array([math.cos(g * t), -1j * math.sin(g * t)])
        np.testing.assert_allclose(rhs(inst, c, t), [-1j * g * c[1], -1j * g * c[0]], atol=1e-16)


def test_rhs_matches_hamiltonian_in_rotating_frame():
    inst = small(n=12, kappa="same")
    rng = np.random.default_rng(0)
    c = rng.normal(size=13) + 1j * rng.normal(size=13)
    t = 3.1
    # dC_I/dt = -i P^* (H - D) P C_I with P = exp(-i f_site t)
    f = inst.site_frequencies
    h = inst.hamiltonian_matrix() - np.diag(f)
    p = np.exp(-1j * f * t)
    expected = -1j * np.conj(p) * (h @ (p * c))
    np.testing.assert_allclose(rhs(inst, c, t), expected, atol=1e-14)


def test_rhs_length_mismatch():
    with pytest.raises(ValueError):
        rhs(small(), np.ones(5, complex), 0.0)


def test_rhs_rejects_schroedinger_state():
    inst = small()
    s = SingleExcitationState(np.eye(inst.n_spins + 1)[0].astype(complex), 0.0, SCHROEDINGER)
    with pytest.raises(ValueError):
        rhs(inst, s)


# -- pictures --------------------------------------------------------------


def test_picture_identity_at_zero():
    inst = small()
    s = SingleExcitationState(np.linspace(0, 1, inst.n_spins + 1) + 0j, 0.0, SCHROEDINGER)
    assert np.array_equal(to_interaction_picture(s, inst).amplitudes, s.amplitudes)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0, 1e4), seed=st.integers(0, 1000))
def test_picture_round_trip(t, seed):
    inst = small(n=8)
    rng = np.random.default_rng(seed)
    a = rng.normal(size=9) + 1j * rng.normal(size=9)
    s = SingleExcitationState(a / np.linalg.norm(a), t, SCHROEDINGER)
    i = to_interaction_picture(s, inst)
    assert i.picture == INTERACTION
    np.testing.assert_allclose(i.populations, s.populations, rtol=1e-14, atol=1e-16)
    np.testing.assert_allclose(to_schroedinger_picture(i, inst).amplitudes, s.amplitudes, atol=1e-14)


# -- integrate -------------------------------------------------------------


def test_rabi_oscillation():
    g = 0.1
    times = np.linspace(0, 2 * math.pi / g, 401)
    traj = integrate(rabi(g), times[-1], snapshot_schedule=times)
    np.testing.assert_allclose(traj.qubit, np.cos(g * times) ** 2, rtol=0, atol=1e-8)


def test_zero_coupling_is_constant():
    inst = SpinBathInstance(omegas=np.linspace(0.5, 1.5, 5), gammas=np.zeros(5))
    traj = integrate(inst, 50.0)
    assert np.all(traj.qubit == 1.0)
    assert np.all(traj.populations[:, 1:] == 0.0)


def test_snapshots_hit_exactly():
    traj = integrate(small(), 3.0, snapshot_schedule=[0.0, 0.013, 1.0, 2.9999, 3.0])
    np.testing.assert_array_equal(traj.times, [0.0, 0.013, 1.0, 2.9999, 3.0])
    assert traj.populations[0, 0] == 1.0


def test_schedule_validation():
    with pytest.raises(ValueError):
        integrate(small(), 1.0, snapshot_schedule=[0.0, 2.0])
    with pytest.raises(ValueError):
        integrate(small(), 1.0, snapshot_schedule=[0.5, 0.2])
    with pytest.raises(ValueError):
        integrate(small(), 0.0)


def test_norm_drift_error():
    inst = small(n=20, rate=5.0, width=40.0)
    with pytest.raises(NormDriftError, match="smaller"):
        integrate(inst, 10.0, StepPolicy(dt=1.0, max_halvings=1))


def test_record_subsets_keep_diagnostics():
    inst = small(kappa="same")
    full = integrate(inst, 20.0)
    part = integrate(inst, 20.0, record=[0, 5])
    np.testing.assert_array_equal(part.populations, full.populations[:, [0, 5]])
    np.testing.assert_array_equal(part.norms, full.norms)
    assert not part.complete and full.complete
    q = integrate(inst, 20.0, record="qubit")
    np.testing.assert_array_equal(q.qubit, full.qubit)


def test_stored_amplitudes_give_populations():
    inst = small()
    traj = integrate(inst, 5.0, store_amplitudes=True)
    np.testing.assert_allclose(np.abs(traj.amplitudes) ** 2, traj.populations, atol=1e-16)
    assert traj.state(3).picture == INTERACTION


def test_deterministic_mode_bit_identical():
    inst = small(n=200, kappa="same")
    a = integrate(inst, 30.0)
    b = integrate(inst, 30.0)
    assert a.populations.tobytes() == b.populations.tobytes()


def test_fast_mode_within_relaxed_tolerance():
    inst = small(n=500, rate=0.03, width=2.0)
    a = integrate(inst, 100.0)
    b = integrate(inst, 100.0, deterministic=False)
    assert np.max(np.abs(a.populations - b.populations)) <= 1e-5


def test_ode_norm_and_hamiltonian_conserved():
    inst = small(n=150, kappa="same", rate=0.03, width=2.0)
    traj = integrate(inst, 200.0)
    assert np.max(np.abs(traj.norms - 1)) <= 1e-6
    assert np.max(np.abs(traj.energies - inst.Omega)) <= 1e-6


def test_two_spin_recurrence():
    # symmetric detunings: site energies Omega, Omega +- d; mode splittings are multiples of sqrt(d^2 + 2 g^2)
    d, g = 0.3, 0.05
    inst = SpinBathInstance(omegas=[1.0 + d, 1.0 - d], gammas=[g, g])
    period = 2 * math.pi / math.sqrt(d**2 + 2 * g**2)
    traj = integrate(inst, 3 * period, snapshot_schedule=[0.0, period / 2, period, 2 * period, 3 * period])
    assert traj.qubit[1] < 0.99
    for k in (2, 3, 4):
        assert abs(traj.qubit[k] - 1.0) <= 1e-6


# -- eigenmodes ------------------------------------------------------------


def test_decoupled_modes():
    inst = SpinBathInstance(omegas=[0.5, 1.5, 0.8], gammas=[0.0, 0.0, 0.0])
    dec = diagonalize_model(inst)
    np.testing.assert_array_equal(np.sort(dec.frequencies), [0.5, 0.8, 1.0, 1.5])
    u = np.abs(dec.unitary)
    assert np.array_equal(u, (u > 0.5).astype(float))


def test_rabi_splitting():
    dec = diagonalize_model(rabi(0.2))
    np.testing.assert_allclose(dec.frequencies, [0.8, 1.2], atol=1e-15)


def test_decomposition_invariants():
    inst = small(n=80, kappa="same")
    dec = diagonalize_model(inst)
    u = dec.unitary
    np.testing.assert_allclose(u @ u.conj().T, np.eye(81), atol=1e-13)
    assert dec.frequencies.sum() == pytest.approx(inst.Omega + inst.omegas.sum(), abs=1e-12)
    d = dec.diagonalized(inst.hamiltonian_matrix())
    np.testing.assert_allclose(d, np.diag(dec.frequencies), atol=1e-13)


def test_dense_guard():
    inst = SpinBathInstance(omegas=np.linspace(0.0, 2.0, 10_001), gammas=np.zeros(10_001))
    with pytest.raises(MemoryError):
        diagonalize_model(inst)


def test_eigenmode_initial_state_exact():
    inst = small(kappa="same")
    traj = eigenmode_propagate(inst, None, [0.0, 1.0])
    assert traj.picture == SCHROEDINGER
    assert traj.populations[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_eigenmode_rabi():
    g = 0.1
    times = np.linspace(0, 4 * math.pi / g, 301)
    traj = eigenmode_propagate(rabi(g), None, times)
    np.testing.assert_allclose(traj.qubit, np.cos(g * times) ** 2, atol=1e-12)


def test_eigenmode_matches_matrix_exponential():
    inst = small(n=20, kappa="same")
    h = inst.hamiltonian_matrix()
    t = 37.5
    expected = expm(-1j * h * t)[:, 0]
    traj = eigenmode_propagate(inst, None, [t], store_amplitudes=True)
    np.testing.assert_allclose(traj.amplitudes[0], expected, atol=1e-12)


def test_decomposition_must_match_instance():
    with pytest.raises(ValueError):
        eigenmode_propagate(small(n=10), diagonalize_model(small(n=11)), [1.0])


def test_chunking_does_not_change_results():
    inst = small(n=40, kappa="same")
    times = uniform_schedule(100.0, 0.5)
    a = eigenmode_propagate(inst, None, times, chunk=7)
    b = eigenmode_propagate(inst, None, times, chunk=1000)
    np.testing.assert_allclose(a.populations, b.populations, atol=1e-14)


@pytest.mark.parametrize("kappa", ["none", "same"])
def test_methods_agree(kappa):
    inst = small(n=100, kappa=kappa, rate=0.03, width=2.0, seed=11)
    times = uniform_schedule(150.0, 1.0)
    a = integrate(inst, 150.0, snapshot_schedule=times)
    b = eigenmode_propagate(inst, None, times)
    assert np.max(np.abs(a.populations - b.populations)) <= 1e-6


# -- trajectory container --------------------------------------------------


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(times=[0.0, 0.0], populations=[[1.0], [1.0]], indices=[0], norms=[1, 1])
    with pytest.raises(ValueError):
        Trajectory(times=[0.0, 1.0], populations=[[1.0]], indices=[0], norms=[1, 1])


def test_trajectory_slice_and_concatenate():
    traj = integrate(small(), 10.0)
    head, tail = traj.slice_time(-1.0, 4.0), traj.slice_time(4.0, 10.0)
    joined = head.concatenate(tail)
    np.testing.assert_array_equal(joined.populations, traj.populations)
    np.testing.assert_array_equal(joined.times, traj.times)
    with pytest.raises(ValueError):
        tail.concatenate(head)


def test_missing_site_column():
    traj = integrate(small(), 2.0, record="qubit")
    with pytest.raises(KeyError):
        traj.column(3)


def test_state_needs_amplitudes():
    with pytest.raises(ValueError):
        integrate(small(), 2.0).state(0)


def test_eigendecomposition_type():
    dec = diagonalize_model(rabi())
    assert isinstance(dec, EigenmodeDecomposition) and dec.n_sites == 2
