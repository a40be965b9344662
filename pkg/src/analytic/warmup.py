from __future__ import annotations

import numpy as np

from src.domain.dto import Representation
from src.domain.models import BilinearSystem

# q = (cos theta, sin theta) with theta' = -u
WARMUP_CONTROL = np.array([[0.0, 1.0], [-1.0, 0.0]])


def warmup_system() -> BilinearSystem:
    return BilinearSystem(Representation.REAL_ORTHOGONAL, np.zeros((2, 2)), (WARMUP_CONTROL,))


def warmup_energy_optimal(T: float) -> float:
    """Constant control of least energy turning theta from 0 to -pi/2 in time T."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    return np.pi / (2.0 * T)


def warmup_time_optimal(u_max: float) -> float:
    """Minimal transfer time with |u| <= u_max."""
    if not u_max > 0:
        raise ValueError(f"u_max must be positive, got {u_max}")
    return np.pi / (2.0 * u_max)


def warmup_angle(u: float, t: float, theta0: float = 0.0) -> float:
    return theta0 - u * t
