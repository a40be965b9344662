import numpy as np
import pytest

from src.analytic.grushin import (
    grushin_controls,
    grushin_covector,
    grushin_extremal,
    quantization_residual,
)
from src.analytic.spin import (
    SOUTH_POLE,
    seeded_abnormal_start,
    seeded_normal_start,
    spin_omega,
    spin_scenario,
)
from src.domain.dto import Representation
from src.domain.errors import SingularArcError
from src.domain.models import BilinearSystem
from src.pmp.arcs import arc_sequence, classify_arcs, summarize_arcs
from src.pmp.chart import SphericalChart
from src.pmp.extremal import integrate_extremal
from src.pmp.hamiltonian import (
    BilinearFlow,
    abnormal_control_system,
    normal_controls,
    pre_hamiltonian,
    switching_function,
)
from src.pmp.rules import (
    AbnormalBilinearRule,
    BallTimeOptimalRule,
    BangRule,
    NormalQuadraticRule,
    rule_for_scenario,
)
from src.pmp.shooting import (
    STATUS_CONVERGED,
    ShootingProblem,
    group_families,
    multi_start,
    newton_batch,
    shoot,
)
from tests.helpers import SX, SZ, random_hermitian, random_state

DELTA = 0.5
GRUSHIN_T = np.pi * np.sqrt(3.0) / 2.0


# -- Hamiltonian and rules ---------------------------------------------------


def test_switching_function_is_the_costate_pairing(rng):
    system = BilinearSystem(Representation.COMPLEX_UNITARY, random_hermitian(rng, 3), (random_hermitian(rng, 3),))
    psi, chi = random_state(rng, 3), random_state(rng, 3)
    flow = BilinearFlow(system)
    phi = flow.phi(psi[None], chi[None])[0]
    assert np.allclose(phi, normal_controls(psi, chi, system), atol=1e-14)


def test_single_input_abnormal_system_is_singular(rng):
    system = BilinearSystem(Representation.COMPLEX_UNITARY, SZ, (SX,))
    out = abnormal_control_system(random_state(rng, 2), random_state(rng, 2), system)
    assert out.singular
    assert out.u is None
    assert out.constraint == pytest.approx(out.s[0])


def test_two_input_abnormal_control_solves_the_bracket_system():
    system = BilinearSystem(
        Representation.COMPLEX_UNITARY,
        np.diag([0.0, 0.3, 1.1]),
        (
            np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex),
            np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex),
        ),
    )
    psi = np.array([0.6, 0.0, 0.8], dtype=complex)
    chi = np.array([1.0, 0.0, 0.0], dtype=complex)
    out = abnormal_control_system(psi, chi, system)
    assert not out.singular
    assert out.r[0, 1] == pytest.approx(0.8)
    assert np.allclose(out.r @ out.u, out.s)


def test_pre_hamiltonian_agrees_between_chart_and_ambient(builtin):
    scenario = builtin("grushin-energy")
    chart = SphericalChart()
    theta, phi = 1.1, 0.4
    x = chart.from_chart(theta, phi)
    p = np.array([0.3, -0.7, 1.2])
    v = np.array([0.8, -0.5])
    u = chart.rotate_controls(phi, v)
    p_chart = np.array(chart.covector_to_chart(x, p))
    ambient = pre_hamiltonian(scenario, x, p, u, -0.5)
    local = pre_hamiltonian(chart, np.array([theta, phi]), p_chart, v, -0.5)
    assert ambient == pytest.approx(local, abs=1e-12)
    assert np.sum(u**2) == pytest.approx(np.sum(v**2))
    with pytest.raises(ValueError):
        pre_hamiltonian(scenario, x, p, u, 1.0)


def test_chart_pullback_at_the_grushin_start():
    chart = SphericalChart()
    p_theta, p_phi = chart.covector_to_chart([1.0, 0.0, 0.0], [0.0, 0.4, -0.9])
    assert p_theta == pytest.approx(-0.4)
    assert p_phi == pytest.approx(-0.9)
    with pytest.raises(ValueError):
        chart.to_chart([0.0, 1.0, 0.0])


def test_rule_selection_follows_cost_and_bounds(builtin):
    assert isinstance(rule_for_scenario(builtin("grushin")), BallTimeOptimalRule)
    assert isinstance(rule_for_scenario(builtin("spin-p1")), BangRule)
    assert rule_for_scenario(builtin("spin-p1"), abnormal=True).p0 == 0.0
    energy = rule_for_scenario(builtin("grushin-energy"))
    assert isinstance(energy, NormalQuadraticRule) and energy.p0 == -0.5
    fidelity = rule_for_scenario(builtin("two-level-transfer"))
    assert fidelity.p0 == -1.0 and np.allclose(fidelity.weights, 0.05)
    assert isinstance(rule_for_scenario(builtin("grushin-energy"), abnormal=True), AbnormalBilinearRule)
    with pytest.raises(ValueError):
        rule_for_scenario(builtin("unbounded-time-optimal"))
    with pytest.raises(ValueError):
        BangRule([-1.0], [1.0], junction="sometimes")


def test_time_optimal_normalization_zeroes_the_hamiltonian(builtin):
    scenario = builtin("grushin")
    rule = rule_for_scenario(scenario)
    flow = BilinearFlow(scenario.bilinear)
    q = scenario.initial_state.entries[None]
    p = rule.normalize(flow, q, np.array([[0.0, 2.0, -0.3]]))
    assert rule.maximized_hamiltonian(flow, q, p)[0] == pytest.approx(0.0, abs=1e-14)


# -- Grushin extremals ---------------------------------------------------------


@pytest.mark.parametrize("a", [0.0, 1.0 / np.sqrt(3.0), -1.0 / np.sqrt(3.0), 1.0])
@pytest.mark.parametrize("branch", [1, -1])
def test_numeric_grushin_extremal_matches_closed_form(builtin, a, branch):
    scenario = builtin("grushin-energy")
    ext = integrate_extremal(scenario, grushin_covector(a, branch), GRUSHIN_T, n_steps=2000)
    t = ext.grid.nodes
    assert np.max(np.abs(ext.trajectory.states - grushin_extremal(a, branch, t))) < 1e-6
    assert np.max(np.abs(ext.control.values.T - grushin_controls(a, branch, t[:-1]))) < 1e-6
    assert ext.hamiltonian_spread() < 1e-6
    # unit speed: the energy extremal sits on H = 1/2
    assert ext.hamiltonian_trace[0] == pytest.approx(0.5, abs=1e-12)


def test_grushin_optimal_extremal_reaches_a_pole(builtin):
    scenario = builtin("grushin-energy")
    ext = integrate_extremal(scenario, grushin_covector(1.0 / np.sqrt(3.0), 1), GRUSHIN_T, n_steps=2000)
    assert np.allclose(ext.trajectory.final, [0.0, 0.0, -1.0], atol=1e-8)
    assert ext.cost == pytest.approx(GRUSHIN_T, abs=1e-6)


def test_grushin_multi_start_finds_the_shortest_family(builtin):
    scenario = builtin("grushin")
    problem = ShootingProblem(scenario, n_steps=500)
    results = multi_start(problem, n_starts=24, seed=7, workers=2)
    converged = [r for r in results if r.converged]
    assert converged

    chart = SphericalChart()
    q_in = scenario.initial_state.entries
    for r in converged:
        assert np.allclose(r.extremal.trajectory.final, scenario.target.state, atol=1e-8)
        _, p_phi = chart.covector_to_chart(q_in, r.p_in)
        assert quantization_residual(p_phi, r.T) < 1e-5
        assert r.extremal.hamiltonian_spread() < 1e-6
        assert abs(r.extremal.hamiltonian_trace).max() < 1e-6

    families = group_families(results)
    best = families[0]
    assert best.T == pytest.approx(GRUSHIN_T, abs=1e-6)
    p_theta, p_phi = chart.covector_to_chart(q_in, best.representative.p_in)
    assert abs(p_phi) == pytest.approx(1.0 / np.sqrt(3.0), abs=1e-6)
    assert abs(p_theta) == pytest.approx(1.0, abs=1e-6)


def test_multi_start_is_reproducible(builtin):
    problem = ShootingProblem(builtin("warmup"))
    first = multi_start(problem, n_starts=4, seed=11)
    second = multi_start(problem, n_starts=4, seed=11)
    assert [r.start for r in first] == [r.start for r in second]
    assert np.array_equal(np.array([r.x for r in first]), np.array([r.x for r in second]))


# -- shooting --------------------------------------------------------------------


def test_warmup_energy_shooting_recovers_the_constant_control(builtin):
    scenario = builtin("warmup")
    result = shoot(ShootingProblem(scenario), np.array([0.0, -1.0]))
    assert result.status == STATUS_CONVERGED
    u = result.extremal.control.values[0]
    assert np.allclose(np.abs(u), np.pi / 2, atol=1e-6)
    assert np.allclose(result.extremal.trajectory.final, [0.0, -1.0], atol=1e-8)


def test_shooting_excludes_the_zero_covector(builtin):
    problem = ShootingProblem(builtin("warmup"))
    with pytest.raises(ValueError):
        shoot(problem, np.zeros(2))


def test_newton_batch_solves_independent_systems():
    def fun(X):
        return np.column_stack([X[:, 0] ** 2 - 2.0, X[:, 1] - X[:, 0]])

    X, _, norms, status, _ = newton_batch(fun, np.array([[1.0, 0.0], [-1.0, 0.0]]), 1e-12)
    assert list(status) == [STATUS_CONVERGED, STATUS_CONVERGED]
    assert X[0] == pytest.approx([np.sqrt(2.0), np.sqrt(2.0)], abs=1e-9)
    assert X[1] == pytest.approx([-np.sqrt(2.0), -np.sqrt(2.0)], abs=1e-9)
    assert np.all(norms < 1e-12)


def test_newton_batch_flags_singular_jacobians():
    def fun(X):
        return np.column_stack([X[:, 0] - 1.0, np.zeros(len(X))])

    _, _, _, status, _ = newton_batch(fun, np.array([[0.0, 0.0]]), 1e-12)
    assert status[0] == "singular-jacobian"


# -- spin extremals from seeded states -------------------------------------------


def _interior_nodes(ext, margin: int = 2):
    """Nodes whose neighbouring intervals see no switch."""
    t = ext.grid.nodes
    dt = ext.grid.dt
    keep = np.zeros(len(t), dtype=bool)
    keep[margin:-margin] = True
    for ts in ext.switch_times:
        keep &= np.abs(t - ts) > margin * dt
    return np.flatnonzero(keep)


@pytest.mark.parametrize("seed", range(10))
def test_normal_spin_extremal_obeys_the_switching_law(seed):
    q, p = seeded_normal_start(DELTA, seed)
    omega = spin_omega(DELTA)
    T = 3.0 * np.pi / omega
    scenario = spin_scenario(DELTA, SOUTH_POLE, initial=q, horizon=T, steps=6000)
    ext = integrate_extremal(scenario, p, T, BangRule([-1.0], [1.0], -1.0))

    assert ext.kind == "normal"
    norms = np.linalg.norm(ext.costate.entries, axis=1)
    assert norms.max() - norms.min() < 1e-9
    assert np.max(np.abs(ext.hamiltonian_trace)) < 1e-8

    phi = ext.switching_trace[:, 0]
    u = np.concatenate([ext.control.values[0], ext.control.values[0, -1:]])
    dt = ext.grid.dt
    k = _interior_nodes(ext)
    k = k[u[k - 1] == u[k]]
    second = (phi[k + 1] - 2.0 * phi[k] + phi[k - 1]) / dt**2
    expected = -(omega**2) * phi[k] + u[k]
    assert np.max(np.abs(second - expected)) < 1e-4 * max(1.0, np.abs(phi).max())


@pytest.mark.parametrize("seed", range(10))
def test_abnormal_spin_switches_are_evenly_spaced(seed):
    q, p = seeded_abnormal_start(DELTA, seed)
    omega = spin_omega(DELTA)
    T = 4.0 * np.pi / omega
    scenario = spin_scenario(DELTA, SOUTH_POLE, initial=q, horizon=T, steps=2000)
    ext = integrate_extremal(scenario, p, T, BangRule([-1.0], [1.0], 0.0))

    assert ext.kind == "abnormal"
    gaps = np.diff(ext.switch_times)
    assert len(ext.switch_times) >= 3
    assert np.allclose(gaps, np.pi / omega, atol=1e-6)
    assert np.max(np.abs(ext.hamiltonian_trace)) < 1e-8


def test_switching_function_helper_matches_the_flow():
    q, p = seeded_normal_start(DELTA, 0)
    assert switching_function(p, q) == pytest.approx(0.0, abs=1e-12)


# -- arc classification ------------------------------------------------------------


def test_arc_classification_of_a_bang_bang_extremal():
    q, p = seeded_normal_start(DELTA, 3)
    T = 3.0 * np.pi / spin_omega(DELTA)
    scenario = spin_scenario(DELTA, SOUTH_POLE, initial=q, horizon=T, steps=3000)
    ext = integrate_extremal(scenario, p, T, BangRule([-1.0], [1.0], -1.0))
    labels = classify_arcs(ext)
    assert len(labels) == ext.grid.n_steps
    seq = arc_sequence(labels)
    assert "singular" not in seq
    assert seq.count("switch") == len(ext.switch_times)
    runs = summarize_arcs(labels, ext.grid)
    assert runs[0]["t_start"] == 0.0
    assert runs[-1]["t_end"] == pytest.approx(T)


def test_singular_junction_off_the_equator_is_an_error():
    # phi and its rate vanish at the north pole for p = (0, 0, 1), but the pole is off the singular locus
    scenario = spin_scenario(DELTA, SOUTH_POLE, steps=200)
    rule = BangRule([-1.0], [1.0], -1.0, "singular")
    with pytest.raises(SingularArcError):
        integrate_extremal(scenario, np.array([0.0, 0.0, 1.0]), 1.0, rule)
