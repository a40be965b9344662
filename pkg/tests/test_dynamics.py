import numpy as np
import pytest

from src.analytic.grushin import GRUSHIN_START, grushin_optimal_controls, grushin_system
from src.analytic.spin import spin_drift, spin_system
from src.analytic.warmup import warmup_energy_optimal, warmup_system, warmup_time_optimal
from src.domain.dto import ControlLaw, Representation, StateVector, TimeGrid
from src.domain.errors import DimensionMismatchError, NonFiniteError, ScenarioValidationError
from src.domain.models import BilinearSystem, LindbladModel
from src.dynamics.exponential import expm, expm_frechet, step_exponential
from src.dynamics.lindblad import propagate_lindblad, unvectorize, vectorize
from src.dynamics.propagator import interval_propagators, propagate
from tests.helpers import SX, SZ, random_hermitian, random_state


def test_expm_matches_rotation():
    theta = 0.7
    a = np.array([[0.0, -theta], [theta, 0.0]])
    expected = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    assert np.allclose(expm(a), expected, rtol=0, atol=1e-14)
    assert np.allclose(expm(10.0 * a), expm(a) @ expm(9.0 * a), rtol=0, atol=1e-12)


def test_expm_rejects_non_finite_generators():
    with pytest.raises(NonFiniteError):
        expm(np.array([[np.nan, 0.0], [0.0, 0.0]]))


def test_frechet_derivative_matches_finite_difference(rng):
    a = -1j * random_hermitian(rng, 3)
    e = -1j * random_hermitian(rng, 3)
    _, d = expm_frechet(a, e)
    h = 1e-6
    fd = (expm(a + h * e) - expm(a - h * e)) / (2 * h)
    assert np.allclose(d, fd, rtol=0, atol=1e-8)


def test_step_exponential_keeps_the_representation():
    state = StateVector([1.0, 0.0], Representation.REAL_ORTHOGONAL)
    out = step_exponential(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.pi / 2, state)
    assert np.allclose(out.entries, [0.0, -1.0], atol=1e-14)
    with pytest.raises(ValueError):
        step_exponential(np.eye(3), 0.1, state)


def test_warmup_energy_optimal_transfer_lands_on_target():
    T = 1.0
    u = warmup_energy_optimal(T)
    assert u == pytest.approx(np.pi / 2)
    control = ControlLaw.constant(TimeGrid(0.0, T, 10), u)
    traj = propagate(warmup_system(), control, StateVector([1.0, 0.0], Representation.REAL_ORTHOGONAL))
    assert np.allclose(traj.final, [0.0, -1.0], rtol=0, atol=1e-12)


def test_warmup_time_optimal_transfer_lands_on_target():
    u_max = 2.5
    T = warmup_time_optimal(u_max)
    control = ControlLaw.constant(TimeGrid(0.0, T, 1), u_max)
    traj = propagate(warmup_system(), control, StateVector([1.0, 0.0], Representation.REAL_ORTHOGONAL))
    assert np.allclose(traj.final, [0.0, -1.0], rtol=0, atol=1e-10)


def test_unitarity_over_ten_thousand_steps(rng):
    system = BilinearSystem(Representation.COMPLEX_UNITARY, random_hermitian(rng, 2), (random_hermitian(rng, 2),))
    grid = TimeGrid(0.0, 10.0, 10_000)
    control = ControlLaw(grid, rng.uniform(-1.0, 1.0, (1, grid.n_steps)))
    psi = StateVector(random_state(rng, 2), Representation.COMPLEX_UNITARY)
    chi = StateVector(random_state(rng, 2), Representation.COMPLEX_UNITARY)
    traj = propagate(system, control, psi)
    assert np.max(np.abs(traj.norms() - 1.0)) < 1e-9

    # a costate carried by the same propagators keeps its overlap with the state
    back = propagate(system, control, chi)
    overlaps = np.einsum("ka,ka->k", back.states.conj(), traj.states)
    assert np.max(np.abs(overlaps - overlaps[0])) < 1e-9


def _unit(v):
    return v / np.linalg.norm(v)


@pytest.mark.parametrize(
    "system,rep",
    [
        ("two-level", Representation.COMPLEX_UNITARY),
        ("spin", Representation.REAL_ORTHOGONAL),
    ],
)
def test_pairing_is_conserved_under_a_common_control(rng, system, rep):
    if system == "two-level":
        model = BilinearSystem(rep, random_hermitian(rng, 2), (random_hermitian(rng, 2),))
        psi0, chi0 = random_state(rng, 2), random_state(rng, 2)
    else:
        model = spin_system(0.5)
        psi0, chi0 = _unit(rng.standard_normal(3)), _unit(rng.standard_normal(3))
    grid = TimeGrid(0.0, 5.0, 500)
    control = ControlLaw(grid, rng.uniform(-1.0, 1.0, (1, grid.n_steps)))
    psi = propagate(model, control, StateVector(psi0, rep)).states
    chi = propagate(model, control, StateVector(chi0, rep)).states
    start = np.vdot(chi0, psi0)
    for k in range(grid.n_steps + 1):
        assert abs(np.vdot(chi[k], psi[k]) - start) <= 1e-9


def test_drift_only_systems_propagate_without_controls():
    model = BilinearSystem(Representation.REAL_ORTHOGONAL, spin_drift(0.5))
    grid = TimeGrid(0.0, 2.0, 40)
    control = ControlLaw(grid, np.zeros((0, grid.n_steps)))
    assert control.channels == 0
    assert control.energy() == 0.0
    q0 = np.array([1.0, 0.0, 0.0])
    traj = propagate(model, control, StateVector(q0, Representation.REAL_ORTHOGONAL))
    assert np.allclose(traj.states[-1], expm(spin_drift(0.5) * 2.0) @ q0, rtol=0, atol=1e-12)
    assert traj.states[-1] == pytest.approx([np.cos(1.0), np.sin(1.0), 0.0], abs=1e-12)
    assert ControlLaw.constant(grid, []).values.shape == (0, grid.n_steps)


def test_identical_intervals_share_one_exponential():
    control = ControlLaw.constant(TimeGrid(0.0, 1.0, 5), 0.3)
    steps = interval_propagators(warmup_system(), control)
    assert all(s is steps[0] for s in steps)


def test_propagate_checks_dimensions():
    control = ControlLaw.constant(TimeGrid(0.0, 1.0, 5), [0.1, 0.2])
    with pytest.raises(DimensionMismatchError):
        propagate(warmup_system(), control, StateVector([1.0, 0.0], Representation.REAL_ORTHOGONAL))
    control = ControlLaw.constant(TimeGrid(0.0, 1.0, 5), 0.1)
    with pytest.raises(DimensionMismatchError):
        propagate(warmup_system(), control, StateVector([1.0, 0.0, 0.0], Representation.REAL_ORTHOGONAL))


def test_vectorization_stacks_columns():
    rho = np.array([[1, 2], [3, 4]])
    assert vectorize(rho).tolist() == [1, 3, 2, 4]
    assert np.array_equal(unvectorize(vectorize(rho), 2), rho)


def test_amplitude_damping_decays_and_keeps_trace(builtin):
    scenario = builtin("amplitude-damping")
    control = ControlLaw.constant(scenario.grid(), 0.0)
    traj = propagate_lindblad(scenario.system, control, scenario.initial_density())
    populations = np.array([unvectorize(s, 2)[1, 1].real for s in traj.states])
    assert populations[-1] == pytest.approx(np.exp(-0.5), abs=1e-10)
    assert np.all(np.diff(populations) < 0)

    driven = propagate_lindblad(scenario.system, ControlLaw.constant(scenario.grid(), 0.8), scenario.initial_density())
    traces = [np.trace(unvectorize(s, 2)).real for s in driven.states]
    assert np.max(np.abs(np.array(traces) - 1.0)) < 1e-8


def test_negative_rates_need_an_explicit_waiver():
    ham = BilinearSystem(Representation.COMPLEX_UNITARY, 0.5 * SZ, (SX,))
    basis = (
        np.array([[0, 1], [0, 0]], dtype=complex),
        np.array([[0, 0], [1, 0]], dtype=complex),
        np.diag([1.0, -1.0]).astype(complex) / np.sqrt(2.0),
    )
    model = LindbladModel(ham, basis, np.diag([0.1, -0.05, 0.0]))
    control = ControlLaw.constant(TimeGrid(0.0, 0.1, 10), 0.0)
    rho0 = np.diag([0.5, 0.5]).astype(complex)
    with pytest.raises(ScenarioValidationError) as info:
        propagate_lindblad(model, control, rho0)
    assert info.value.invariant == "complete-positivity"
    traj = propagate_lindblad(model, control, rho0, waive_positivity=True)
    assert traj.states.shape == (11, 4)


def test_lindblad_rejects_bad_initial_density(builtin):
    scenario = builtin("amplitude-damping")
    control = ControlLaw.constant(scenario.grid(), 0.0)
    with pytest.raises(ScenarioValidationError):
        propagate_lindblad(scenario.system, control, np.diag([1.0, 1.0]))
    with pytest.raises(DimensionMismatchError):
        propagate_lindblad(scenario.system, control, np.eye(3) / 3.0)


def test_grushin_optimal_controls_reach_a_pole():
    T = np.pi * np.sqrt(3.0) / 2.0
    grid = TimeGrid(0.0, T, 20_000)
    control = ControlLaw.from_function(grid, lambda t: grushin_optimal_controls(1, 1, t))
    start = StateVector(GRUSHIN_START, Representation.REAL_ORTHOGONAL)
    traj = propagate(grushin_system(), control, start)
    assert np.allclose(traj.final[:2], 0.0, rtol=0, atol=1e-8)
    assert abs(traj.final[2]) == pytest.approx(1.0, abs=1e-8)
