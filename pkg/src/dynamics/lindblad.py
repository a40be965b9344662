"""Vectorized Kossakowski-Lindblad evolution.

Column stacking: vec(A X B) = (B^T kron A) vec(X). The superoperator H acts as
i d/dt vec(rho) = H vec(rho) with

    H = I kron H(u) - H(u)^T kron I + i D,
    D = sum_kl a_kl [conj(V_l) kron V_k - 1/2 I kron (V_l^+ V_k) - 1/2 (V_l^+ V_k)^T kron I].
"""
from __future__ import annotations

import numpy as np
from loguru import logger

from src.domain.dto import ControlLaw, Representation, Trajectory
from src.domain.errors import DimensionMismatchError, ScenarioValidationError, TraceDriftError
from src.domain.models import LindbladModel, validate_lindblad_positivity
from src.dynamics.exponential import expm

TRACE_TOL = 1e-8


def vectorize(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvectorize(vec: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(vec).reshape(n, n, order="F")


def dissipator(model: LindbladModel) -> np.ndarray:
    n = model.dimension
    eye = np.eye(n)
    out = np.zeros((n * n, n * n), dtype=complex)
    for k, vk in enumerate(model.basis):
        for l, vl in enumerate(model.basis):
            a = model.coefficients[k, l]
            if a == 0:
                continue
            prod = vl.conj().T @ vk
            out += a * (np.kron(vl.conj(), vk) - 0.5 * np.kron(eye, prod) - 0.5 * np.kron(prod.T, eye))
    return out


def lindblad_superoperator(model: LindbladModel, u, dissipative: np.ndarray | None = None) -> np.ndarray:
    ham = model.hamiltonian
    u = np.atleast_1d(np.asarray(u, dtype=float))
    h = ham.drift + sum((uj * hj for uj, hj in zip(u, ham.controls)), np.zeros_like(ham.drift))
    eye = np.eye(model.dimension)
    d = dissipator(model) if dissipative is None else dissipative
    return np.kron(eye, h) - np.kron(h.T, eye) + 1j * d


def propagate_lindblad(
    model: LindbladModel,
    control: ControlLaw,
    rho0: np.ndarray,
    waive_positivity: bool = False,
    tol: float = TRACE_TOL,
) -> Trajectory:
    n = model.dimension
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (n, n):
        raise DimensionMismatchError(f"density matrix must be {n}x{n}, got {rho0.shape}")
    if control.channels != model.n_controls:
        raise DimensionMismatchError(f"control has {control.channels} channels, model expects {model.n_controls}")
    if not waive_positivity:
        positive, min_eig = validate_lindblad_positivity(model)
        if not positive:
            raise ScenarioValidationError(
                "complete-positivity", f"coefficient matrix has eigenvalue {min_eig:.3e} < 0"
            )
    if abs(np.trace(rho0) - 1.0) > tol:
        raise ScenarioValidationError("unit-trace", f"initial density has trace {np.trace(rho0)}")

    d = dissipator(model)
    dt = control.grid.dt
    cache: dict[bytes, np.ndarray] = {}
    states = np.empty((control.grid.n_steps + 1, n * n), dtype=complex)
    states[0] = vectorize(rho0)
    for k in range(control.grid.n_steps):
        u = control.values[:, k]
        key = u.tobytes()
        step = cache.get(key)
        if step is None:
            step = expm(-1j * lindblad_superoperator(model, u, d) * dt)
            cache[key] = step
        states[k + 1] = step @ states[k]
        rho = unvectorize(states[k + 1], n)
        drift = abs(np.trace(rho) - 1.0)
        if drift > tol:
            raise TraceDriftError(k + 1, float(drift))
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        if herm > tol:
            raise TraceDriftError(k + 1, herm, what="hermiticity")
    logger.debug(f"lindblad propagation over {control.grid.n_steps} steps done")
    return Trajectory(control.grid, states, control, Representation.COMPLEX_UNITARY, on_sphere=False)
