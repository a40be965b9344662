from __future__ import annotations

import math

import numpy as np

from src.domain.dto import StateVector
from src.domain.errors import NonFiniteError

SCALED_NORM = 0.5
TERM_TOL = 1e-16
MAX_TERMS = 60


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring of the truncated Taylor series.

    The squaring count s is the smallest one with ||a|| / 2**s <= 0.5 (1-norm); the
    series stops once a term drops below 1e-16 relative to the partial sum.
    """
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("generator has non-finite entries")
    norm = np.linalg.norm(a, 1) if a.size else 0.0
    s = 0
    if norm > SCALED_NORM:
        s = int(math.ceil(math.log2(norm / SCALED_NORM)))
    x = a / (2.0**s)
    result = np.eye(a.shape[0], dtype=np.result_type(a, float))
    term = result.copy()
    for k in range(1, MAX_TERMS):
        term = term @ x / k
        result = result + term
        if np.linalg.norm(term, 1) <= TERM_TOL * max(1.0, np.linalg.norm(result, 1)):
            break
    for _ in range(s):
        result = result @ result
    return result


def expm_frechet(a: np.ndarray, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """exp(a) and its Frechet derivative along e, read off the block [[a, e], [0, a]]."""
    n = a.shape[0]
    block = np.zeros((2 * n, 2 * n), dtype=np.result_type(a, e))
    block[:n, :n] = a
    block[:n, n:] = e
    block[n:, n:] = a
    big = expm(block)
    return big[:n, :n], big[:n, n:]


def step_exponential(generator: np.ndarray, dt: float, state: StateVector) -> StateVector:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    gen = np.asarray(generator)
    if gen.shape != (state.dimension, state.dimension):
        raise ValueError(f"generator shape {gen.shape} does not match state dimension {state.dimension}")
    out = expm(gen * dt) @ state.entries
    return StateVector(out, state.representation, on_sphere=False)
