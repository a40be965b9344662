from __future__ import annotations

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Protocol

import numpy as np

if TYPE_CHECKING:
    from src.pmp.hamiltonian import BilinearFlow


class ControlDynamics(Protocol):
    """Anything the pre-Hamiltonian can be evaluated on: velocity, running cost, pairing."""

    def velocity(self, q, u) -> np.ndarray: ...

    def running_cost(self, q, u) -> float: ...

    def pairing(self, p, v) -> float: ...


class ControlRule(ABC):
    """Step 1 of the PMP workflow: the control maximizing the pre-Hamiltonian.

    All methods work on batches: q and p are B x n arrays, controls come back as B x m.
    """

    p0: float = -1.0
    label: str = "regular"

    @abstractmethod
    def resolve(self, flow: "BilinearFlow", q: np.ndarray, p: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def maximized_hamiltonian(self, flow: "BilinearFlow", q: np.ndarray, p: np.ndarray) -> np.ndarray: ...

    def normalize(self, flow: "BilinearFlow", q: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Rescale p so the maximized Hamiltonian vanishes (free final time)."""
        return p

    @property
    def abnormal(self) -> bool:
        return self.p0 == 0.0
