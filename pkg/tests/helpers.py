import numpy as np

from src.domain.dto import Representation, StateVector
from src.domain.models import BilinearSystem, Cost, Scenario, Target, TimeSpec

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def random_hermitian(rng, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


def random_state(rng, n: int) -> np.ndarray:
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def fidelity_scenario(rng, n: int = 2, T: float = 1.0, steps: int = 20, lam: float = 0.1) -> Scenario:
    """Random pure-state transfer with a free target and the fidelity cost."""
    system = BilinearSystem(Representation.COMPLEX_UNITARY, random_hermitian(rng, n), (random_hermitian(rng, n),))
    return Scenario(
        name="random-fidelity",
        system=system,
        initial_state=StateVector(random_state(rng, n), Representation.COMPLEX_UNITARY),
        target=Target("free", random_state(rng, n)),
        cost=Cost("fidelity", energy_weight=lam),
        time=TimeSpec("fixed", T, steps),
    )
