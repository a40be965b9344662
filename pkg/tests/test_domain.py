import json

import numpy as np
import pytest

from src.domain.dto import ControlBounds, ControlLaw, Representation, StateVector, TimeGrid
from src.domain.errors import ScenarioParseError, ScenarioValidationError
from src.domain.models import BilinearSystem, Cost, LindbladModel, Scenario, Target, TimeSpec
from src.infra.persistence import SCHEMA
from src.infra.scenario_store import builtin_names, dump_scenario, load_scenario, parse_scenario, save_scenario


def _two_level_doc(e0=0.0, e1=1.0, **overrides):
    doc = {
        "schema": SCHEMA,
        "name": "two-level",
        "system": {
            "representation": "complex-unitary",
            "drift": [[[e0, 0], [0, 0]], [[0, 0], [e1, 0]]],
            "controls": [[[[0, 0], [1, 0]], [[1, 0], [0, 0]]]],
        },
        "initial_state": {"vector": [[1, 0], [0, 0]]},
        "target": {"kind": "point", "state": [[0, 0], [1, 0]]},
        "cost": {"kind": "energy"},
        "time": {"mode": "fixed", "horizon": 1.0, "steps": 10},
    }
    doc.update(overrides)
    return doc


def test_minimal_two_level_scenario_parses():
    scenario = parse_scenario(json.dumps(_two_level_doc(0.0, 2.0)))
    assert scenario.dimension == 2
    assert scenario.bilinear.n_controls == 1
    assert scenario.representation is Representation.COMPLEX_UNITARY
    assert scenario.bounds.kind == "unbounded"


def test_broken_skew_symmetry_is_rejected():
    drift = [[0.0, 1.0], [-1.0 + 1e-6, 0.0]]
    with pytest.raises(ScenarioValidationError) as info:
        BilinearSystem(Representation.REAL_ORTHOGONAL, drift, ())
    assert info.value.invariant == "skew-symmetric"


def test_non_hermitian_control_is_rejected():
    doc = _two_level_doc()
    doc["system"]["controls"] = [[[[0, 0], [1, 0]], [[0.5, 0], [0, 0]]]]
    with pytest.raises(ScenarioValidationError):
        parse_scenario(json.dumps(doc))


def test_free_target_needs_terminal_cost():
    doc = _two_level_doc(target={"kind": "free", "state": [[0, 0], [1, 0]]}, cost={"kind": "time"})
    with pytest.raises(ScenarioValidationError) as info:
        parse_scenario(json.dumps(doc))
    assert info.value.invariant == "terminal-cost"


def test_malformed_json_and_unknown_keys_are_parse_errors():
    with pytest.raises(ScenarioParseError):
        parse_scenario("{ not json")
    doc = _two_level_doc()
    doc["surprise"] = 1
    with pytest.raises(ScenarioParseError):
        parse_scenario(json.dumps(doc))


def test_wrong_schema_is_a_parse_error():
    with pytest.raises(ScenarioParseError):
        parse_scenario(json.dumps(_two_level_doc(schema="pmp-qoc/0")))


def test_complex_entry_in_real_representation_is_rejected():
    doc = {
        "system": {"representation": "real-orthogonal", "drift": [[0, [1, 0]], [-1, 0]]},
        "initial_state": {"vector": [1, 0]},
        "target": {"kind": "point", "state": [0, 1]},
        "cost": {"kind": "energy"},
        "time": {"horizon": 1.0},
    }
    with pytest.raises(ScenarioParseError):
        parse_scenario(json.dumps(doc))


def test_off_sphere_state_is_a_validation_error():
    doc = _two_level_doc(initial_state={"vector": [[1, 0], [1, 0]]})
    with pytest.raises(ScenarioValidationError):
        parse_scenario(json.dumps(doc))


@pytest.mark.parametrize("name", builtin_names())
def test_builtin_scenarios_load_and_round_trip(name, tmp_path):
    scenario = load_scenario(name)
    again = parse_scenario(json.dumps(dump_scenario(scenario)))
    assert again == scenario
    path = save_scenario(scenario, tmp_path / f"{name}.json")
    assert load_scenario(path) == scenario


def test_builtin_lookup_accepts_underscores_and_suffix():
    assert load_scenario("unbounded_time_optimal.json").name == "unbounded-time-optimal"
    with pytest.raises(ScenarioParseError):
        load_scenario("no-such-scenario")


def test_lindblad_builtin_starts_from_a_density():
    scenario = load_scenario("amplitude-damping")
    assert scenario.is_lindblad
    assert scenario.dimension == 4
    rho = scenario.initial_density()
    assert np.allclose(rho, np.diag([0.0, 1.0]))


def test_lindblad_basis_must_be_orthonormal_and_traceless():
    ham = BilinearSystem(Representation.COMPLEX_UNITARY, np.diag([0.0, 1.0]), ())
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    upper = lower.T.copy()
    diag = np.diag([1.0, -1.0]) / np.sqrt(2.0)
    with pytest.raises(ScenarioValidationError) as info:
        LindbladModel(ham, (lower, upper, np.eye(2)), np.zeros((3, 3)))
    assert info.value.invariant == "traceless-basis"
    with pytest.raises(ScenarioValidationError):
        LindbladModel(ham, (lower, upper), np.zeros((2, 2)))
    LindbladModel(ham, (lower, upper, diag), np.zeros((3, 3)))


def test_time_grid_nodes_are_computed_from_the_index():
    grid = TimeGrid(0.0, 1.0, 3)
    assert grid.node(3) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(grid.nodes, np.array([0.0, 1.0, 2.0, 3.0]) / 3.0, rtol=0.0, atol=1e-15)
    assert grid.interval_of(0.0) == 0
    assert grid.interval_of(grid.node(1)) == 1
    assert grid.interval_of(1.0) == 2
    with pytest.raises(ValueError):
        grid.interval_of(1.5)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 4)


def test_control_law_is_right_continuous():
    grid = TimeGrid(0.0, 1.0, 4)
    law = ControlLaw(grid, [[1.0, 2.0, 3.0, 4.0]])
    assert law.at(0.25)[0] == 2.0
    assert law.at(0.2499)[0] == 1.0
    assert law.at(1.0)[0] == 4.0
    assert law.energy() == pytest.approx(0.25 * 30.0)


def test_control_law_respects_bounds():
    grid = TimeGrid(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        ControlLaw(grid, [[0.5, 1.5]], ControlBounds.box([-1.0], [1.0]))
    with pytest.raises(ValueError):
        ControlLaw(grid, [[0.5, 0.0]], ControlBounds.discrete([[-1.0], [1.0]]))
    ControlLaw(grid, [[0.6, 0.0], [0.8, 1.0]], ControlBounds.ball(1.0))


def test_bounds_compactness_and_convexity():
    assert not ControlBounds.unbounded().is_compact
    assert ControlBounds.box([-1.0], [1.0]).is_compact
    assert not ControlBounds.box([-np.inf], [1.0]).is_compact
    assert ControlBounds.ball(2.0).is_compact
    two = ControlBounds.discrete([[-1.0], [1.0]])
    assert two.is_compact and not two.is_convex


def test_state_vector_on_sphere_check():
    StateVector([1.0, 0.0], Representation.REAL_ORTHOGONAL)
    with pytest.raises(ValueError):
        StateVector([1.0, 1.0], Representation.REAL_ORTHOGONAL)
    StateVector([1.0, 1.0], Representation.REAL_LINEAR, on_sphere=False)


def test_cost_normalization_of_the_abnormal_multiplier():
    assert Cost("energy").default_p0 == -0.5
    assert Cost("time").default_p0 == -1.0
    assert Cost("fidelity", energy_weight=0.2).channel_weights(2).tolist() == [0.1, 0.1]
    with pytest.raises(ScenarioValidationError):
        Cost("quadratic")


def test_scenario_checks_bounds_against_channels():
    system = BilinearSystem(Representation.REAL_ORTHOGONAL, np.zeros((2, 2)), (np.array([[0, 1], [-1, 0]]),))
    with pytest.raises(ScenarioValidationError) as info:
        Scenario(
            name="bad",
            system=system,
            initial_state=StateVector([1.0, 0.0], Representation.REAL_ORTHOGONAL),
            target=Target("point", [0.0, 1.0]),
            cost=Cost("time"),
            time=TimeSpec("free", 1.0, 10),
            bounds=ControlBounds.box([-1.0, -1.0], [1.0, 1.0]),
        )
    assert info.value.invariant == "bounds-channels"
