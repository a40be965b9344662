import numpy as np
import pytest

from src.domain.dto import ControlLaw
from src.domain.errors import DimensionMismatchError, ScenarioValidationError
from src.grape.optimizer import fidelity_gradient, grape_cost, grape_gradient, grape_optimize
from src.pmp.rules import rule_for_scenario
from src.pmp.shooting import ShootingProblem, shoot
from tests.helpers import fidelity_scenario

FD_STEP = 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    scenario = fidelity_scenario(rng, T=1.0, steps=20)
    grid = scenario.grid()
    control = ControlLaw(grid, rng.uniform(-1.0, 1.0, (1, grid.n_steps)))
    grad = grape_gradient(scenario, control)

    # J decreases along the ascent direction: dJ/du_k = -dt * grad_k
    fd = np.empty_like(grad)
    for k in range(grid.n_steps):
        up, down = control.values.copy(), control.values.copy()
        up[0, k] += FD_STEP
        down[0, k] -= FD_STEP
        fd[0, k] = (grape_cost(scenario, control.with_values(up)) - grape_cost(scenario, control.with_values(down))) / (
            2 * FD_STEP
        )
    expected = -grid.dt * grad
    rel = np.abs(fd - expected) / np.maximum(np.abs(expected), 1e-6)
    assert rel.max() < 1e-5


def test_backward_costate_starts_from_the_transversality_condition(rng):
    scenario = fidelity_scenario(rng)
    control = ControlLaw.constant(scenario.grid(), 0.2)
    pieces = fidelity_gradient(scenario, control)
    target = scenario.target.state
    assert np.allclose(pieces.chi[-1], 2.0 * np.vdot(target, pieces.psi[-1]) * target)
    # chi and psi share the propagators, so their overlap is constant
    overlaps = np.einsum("ka,ka->k", pieces.chi.conj(), pieces.psi)
    assert np.allclose(overlaps, overlaps[-1], atol=1e-12)


def test_two_level_transfer_converges_with_decreasing_cost(builtin):
    scenario = builtin("two-level-transfer")
    run = grape_optimize(scenario, ControlLaw.constant(scenario.grid(), 0.1), max_iters=500)
    assert run.converged
    assert np.all(np.diff(run.costs) < 0)
    assert run.fidelity > 0.999
    # stationarity: u_j equals Im<chi|H_j|psi> / lambda up to the gradient tolerance
    coupling = fidelity_gradient(scenario, run.control).coupling
    lam = scenario.cost.energy_weight
    assert np.max(np.abs(run.control.values - coupling / lam)) < 1e-6 / lam
    assert run.history_frame()["cost"].is_monotonic_decreasing


def test_grape_result_polishes_into_a_shooting_extremal(builtin):
    scenario = builtin("two-level-transfer")
    run = grape_optimize(scenario, ControlLaw.constant(scenario.grid(), 0.1), max_iters=500)
    problem = ShootingProblem(scenario, rule_for_scenario(scenario))
    polished = shoot(problem, run.costate0)
    assert polished.converged
    assert polished.cost == pytest.approx(run.cost, abs=1e-4)
    assert np.allclose(polished.extremal.control.values, run.control.values, atol=1e-3)


def test_max_iters_stops_without_convergence(builtin):
    scenario = builtin("two-level-transfer")
    run = grape_optimize(scenario, ControlLaw.constant(scenario.grid(), 0.1), max_iters=2)
    assert run.status == "max-iters"
    assert not run.converged
    assert run.iterations == 2


def test_grape_refuses_point_targets_and_channel_mismatch(builtin, rng):
    with pytest.raises(ScenarioValidationError):
        grape_cost(builtin("amplitude-damping"), ControlLaw.constant(builtin("amplitude-damping").grid(), 0.0))
    scenario = fidelity_scenario(rng)
    with pytest.raises(DimensionMismatchError):
        grape_cost(scenario, ControlLaw.constant(scenario.grid(), [0.1, 0.2]))
    with pytest.raises(ValueError):
        grape_optimize(scenario, ControlLaw.constant(scenario.grid(), 0.1), eps0=0.0)
