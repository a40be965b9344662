from __future__ import annotations

import numpy as np
from loguru import logger

from src.domain.dto import ControlLaw, StateVector, Trajectory
from src.domain.errors import DimensionMismatchError
from src.domain.models import BilinearSystem
from src.dynamics.exponential import expm

NORM_TOL = 1e-9


def check_compatible(system: BilinearSystem, control: ControlLaw, initial: StateVector) -> None:
    if control.channels != system.n_controls:
        raise DimensionMismatchError(
            f"control has {control.channels} channels, system expects {system.n_controls}"
        )
    if initial.representation is not system.representation:
        raise DimensionMismatchError(
            f"state is {initial.representation.value}, system is {system.representation.value}"
        )
    if initial.dimension != system.dimension:
        raise DimensionMismatchError(
            f"state has {initial.dimension} entries, system dimension is {system.dimension}"
        )


def interval_propagators(system: BilinearSystem, control: ControlLaw) -> list[np.ndarray]:
    """exp(dt * generator_k) for every interval; identical control values share one exponential."""
    g0, gc = system.flow_generators()
    dt = control.grid.dt
    cache: dict[bytes, np.ndarray] = {}
    out = []
    for k in range(control.grid.n_steps):
        u = control.values[:, k]
        key = u.tobytes()
        step = cache.get(key)
        if step is None:
            step = expm((g0 + np.tensordot(u, gc, axes=1)) * dt)
            cache[key] = step
        out.append(step)
    return out


def propagate(system: BilinearSystem, control: ControlLaw, initial: StateVector) -> Trajectory:
    check_compatible(system, control, initial)
    steps = interval_propagators(system, control)
    states = np.empty((control.grid.n_steps + 1, system.dimension), dtype=system.representation.dtype)
    states[0] = initial.entries
    for k, step in enumerate(steps):
        states[k + 1] = step @ states[k]

    on_sphere = system.on_sphere and initial.on_sphere
    if on_sphere:
        drift = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0)))
        if drift > NORM_TOL:
            logger.warning(f"norm drift {drift:.3e} over {control.grid.n_steps} steps")
    return Trajectory(control.grid, states, control, system.representation, on_sphere=on_sphere)
