"""Non-convex control set {-1, 1}: fast switching approaches a point no admissible
trajectory reaches, so the reachable set is not closed."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from src.domain.dto import ControlBounds, ControlLaw, Representation, StateVector, TimeGrid, Trajectory
from src.domain.models import BilinearSystem
from src.dynamics.propagator import propagate

# A_u = A0 + u A1 gives A_1 = [[-1, 1], [-1, 0]] and A_-1 = [[-1, -1], [1, 0]]
CHATTER_DRIFT = np.array([[-1.0, 0.0], [0.0, 0.0]])
CHATTER_CONTROL = np.array([[0.0, 1.0], [-1.0, 0.0]])
Q_IN = np.array([1.0, 0.0])


def chattering_system() -> BilinearSystem:
    return BilinearSystem(Representation.REAL_LINEAR, CHATTER_DRIFT, (CHATTER_CONTROL,))


def chattering_bounds() -> ControlBounds:
    return ControlBounds.discrete([[-1.0], [1.0]])


def chattering_control(n_switches: int, T: float) -> ControlLaw:
    grid = TimeGrid(0.0, T, n_switches + 1)
    values = np.where(np.arange(n_switches + 1) % 2 == 0, 1.0, -1.0)[None, :]
    return ControlLaw(grid, values, chattering_bounds())


def chattering_demo(n_switches: int, T: float = 1.0) -> tuple[float, Trajectory]:
    if int(n_switches) != n_switches or n_switches < 0:
        raise ValueError("n_switches must be a non-negative integer")
    control = chattering_control(int(n_switches), T)
    traj = propagate(chattering_system(), control, StateVector(Q_IN, Representation.REAL_LINEAR, on_sphere=False))
    d = float(np.linalg.norm(traj.final - np.exp(-T) * Q_IN))
    return d, traj


def switch_counts(max_switches: int) -> list[int]:
    counts, k = [], 1
    while k <= max_switches:
        counts.append(k)
        k *= 2
    if counts and counts[-1] != max_switches:
        counts.append(max_switches)
    return counts


def chattering_sweep(max_switches: int, T: float = 1.0, workers: int = 1) -> pd.DataFrame:
    counts = switch_counts(max_switches)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        dists = list(pool.map(lambda n: chattering_demo(n, T)[0], counts))
    return pd.DataFrame({"N_s": counts, "d": dists})
