import numpy as np
import pytest

from src.algebra.lie import check_controllability, lie_closure, manifold_dimension
from src.analytic.grushin import grushin_system
from src.analytic.spin import spin_drift, spin_system
from src.domain.dto import Representation
from src.domain.models import BilinearSystem
from tests.helpers import SX, SY, SZ


def test_pauli_pair_generates_su2():
    algebra = lie_closure([1j * SZ, 1j * SX])
    assert algebra.dimension == 3
    assert algebra.label() == "su(2)"
    assert algebra.residual(1j * SY) < 1e-12
    assert algebra.residual(1j * np.eye(2)) > 0.5


def test_commuting_generators_do_not_grow():
    algebra = lie_closure([1j * SZ, 2j * SZ])
    assert algebra.dimension == 1


def test_closure_basis_is_orthonormal():
    algebra = lie_closure([1j * SZ, 1j * SX])
    rows = np.array([np.concatenate([b.real.ravel(), b.imag.ravel()]) for b in algebra.basis])
    assert np.allclose(rows @ rows.T, np.eye(3), atol=1e-12)


def test_lie_closure_rejects_empty_and_mixed_shapes():
    with pytest.raises(ValueError):
        lie_closure([])
    with pytest.raises(ValueError):
        lie_closure([np.eye(2), np.eye(3)])


def test_spin_system_is_controllable():
    report = check_controllability(spin_system(0.5))
    assert report.mode == "drifted"
    assert report.dimension == 3
    assert report.controllable
    assert report.verdict == "so(3), controllable"
    assert report.tangent_ranks.min() == 2


def test_grushin_is_controllable_without_drift():
    report = check_controllability(grushin_system(), n_samples=20, seed=3)
    assert report.mode == "driftless"
    assert report.controllable
    assert any("U = R^m" in note for note in report.notes)


def test_drift_alone_is_not_controllable():
    system = BilinearSystem(Representation.REAL_ORTHOGONAL, spin_drift(0.5), ())
    report = check_controllability(system, n_samples=10)
    assert report.dimension == 1
    assert not report.controllable
    assert report.verdict.endswith("not controllable")


def test_two_level_drift_plus_control_spans_su2():
    system = BilinearSystem(Representation.COMPLEX_UNITARY, SZ, (SX,))
    report = check_controllability(system, n_samples=10)
    assert report.algebra.label() == "su(2)"
    assert report.manifold_dimension == manifold_dimension(system) == 3
    assert report.controllable


def test_real_linear_systems_get_no_verdict():
    system = BilinearSystem(Representation.REAL_LINEAR, -np.eye(2), (np.array([[0.0, 1.0], [-1.0, 0.0]]),))
    report = check_controllability(system, n_samples=5)
    assert not report.controllable
    assert any("not compact" in note for note in report.notes)
