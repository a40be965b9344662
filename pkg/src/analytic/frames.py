"""Rotating-frame maps taking resonant ladder systems to their reduced real generators.

Convention: the lab Hamiltonian is H(t) = diag(E) + sum_k (W_k |k><k+1| + h.c.) with the
resonant drive W_k = u_k exp(i (E_{k+1} - E_k) t). The frame Y(t) = diag(exp(-i (E_k t + phase_k)))
removes the diagonal, and ψ = Y ψ' gives i dψ'/dt = (Y^-1 H Y - i Y^-1 dY/dt) ψ'.
"""
from __future__ import annotations

import numpy as np

from src.domain.errors import DimensionMismatchError

# Y(0) = diag(1, i): the two-level system becomes theta' = -u
TWO_LEVEL_PHASES = (0.0, -np.pi / 2.0)
# Y(0) = diag(1, -i, -1): the three-level system becomes the Grushin pair
THREE_LEVEL_PHASES = (0.0, np.pi / 2.0, np.pi)
REAL_TOL = 1e-12


def _levels(energies, phases) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(energies, dtype=float)
    ph = np.zeros_like(e) if phases is None else np.asarray(phases, dtype=float)
    if ph.shape != e.shape:
        raise DimensionMismatchError(f"{len(ph)} phases for {len(e)} levels")
    return e, ph


def diagonal_frame(energies, t: float, phases=None) -> np.ndarray:
    e, ph = _levels(energies, phases)
    return np.diag(np.exp(-1j * (e * t + ph)))


def frame_derivative(energies, t: float, phases=None) -> np.ndarray:
    e, _ = _levels(energies, phases)
    return -1j * np.diag(e) @ diagonal_frame(energies, t, phases)


def resonant_drive(energies, controls, t: float) -> np.ndarray:
    """Lab Hamiltonian of a ladder driven on resonance with real amplitudes u_k."""
    e = np.asarray(energies, dtype=float)
    u = np.asarray(controls, dtype=float)
    if len(u) != len(e) - 1:
        raise DimensionMismatchError(f"a {len(e)}-level ladder takes {len(e) - 1} drives, got {len(u)}")
    h = np.diag(e).astype(complex)
    for k, amp in enumerate(u):
        w = amp * np.exp(1j * (e[k + 1] - e[k]) * t)
        h[k, k + 1] = w
        h[k + 1, k] = np.conj(w)
    return h


def rotating_hamiltonian(hamiltonian, energies, t: float, phases=None) -> np.ndarray:
    y = diagonal_frame(energies, t, phases)
    y_inv = y.conj().T
    return y_inv @ np.asarray(hamiltonian, dtype=complex) @ y - 1j * y_inv @ frame_derivative(energies, t, phases)


def real_frame(hamiltonian, energies, t: float, phases=None) -> np.ndarray:
    """Real generator -i H' of the rotating-frame Hamiltonian; raises if it is not real."""
    gen = -1j * rotating_hamiltonian(hamiltonian, energies, t, phases)
    if np.max(np.abs(gen.imag)) > REAL_TOL:
        raise ValueError("the frame phases do not make the generator real")
    return gen.real


def reduced_generators(energies, phases, t: float = 0.0) -> list[np.ndarray]:
    """Real generators of the unit drives u = e_j in the rotating frame."""
    m = len(energies) - 1
    out = []
    for j in range(m):
        u = np.zeros(m)
        u[j] = 1.0
        out.append(real_frame(resonant_drive(energies, u, t), energies, t, phases))
    return out
