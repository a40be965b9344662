from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from loguru import logger

from src.domain.dto import ControlBounds, ControlLaw, Representation, TimeGrid
from src.domain.models import BilinearSystem

# x' = (u1 F1 + u2 F2) x on S^2, the resonant three-level system in its real frame
GRUSHIN_F1 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
GRUSHIN_F2 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
GRUSHIN_START = np.array([1.0, 0.0, 0.0])
ZERO_NORM_TOL = 1e-14
MAX_REFINE = 64


def grushin_system() -> BilinearSystem:
    return BilinearSystem(Representation.REAL_ORTHOGONAL, np.zeros((3, 3)), (GRUSHIN_F1, GRUSHIN_F2))


def _check_branch(p_theta0: int) -> None:
    if p_theta0 not in (-1, 1):
        raise ValueError(f"p_theta0 must be +1 or -1, got {p_theta0}")


def grushin_extremal(a: float, p_theta0: int, t) -> np.ndarray:
    """Closed-form arc-length extremal from (1, 0, 0); x2 carries the sign -p_theta0."""
    _check_branch(p_theta0)
    t = np.asarray(t, dtype=float)
    b = np.sqrt(1.0 + a * a)
    x1 = a * np.sin(a * t) * np.sin(b * t) / b + np.cos(a * t) * np.cos(b * t)
    x2 = -p_theta0 * np.sin(b * t) / b
    x3 = np.sin(a * t) * np.cos(b * t) - a * np.sin(b * t) * np.cos(a * t) / b
    return np.stack([x1, x2, x3], axis=-1)


def grushin_controls(a: float, p_theta0: int, t) -> np.ndarray:
    """Controls generating grushin_extremal: u1 = -p_theta0 cos(at), u2 = p_theta0 sin(at)."""
    _check_branch(p_theta0)
    t = np.asarray(t, dtype=float)
    return np.stack([-p_theta0 * np.cos(a * t), p_theta0 * np.sin(a * t)], axis=-1)


def grushin_covector(a: float, p_theta0: int) -> np.ndarray:
    """Ambient initial covector whose energy extremal (p0 = -1/2) is grushin_extremal.

    In the (theta, phi) chart this is p_theta = p_theta0 and p_phi = -a.
    """
    _check_branch(p_theta0)
    return np.array([0.0, -float(p_theta0), -float(a)])


def grushin_quantized(n1: int, n2: int) -> tuple[float, float]:
    """(a, T) of the extremal reaching the poles (0, 0, +-1) for integers n1, n2."""
    if int(n1) != n1 or int(n2) != n2:
        raise ValueError("n1 and n2 must be integers")
    if n1 < 1:
        raise ValueError(f"n1 must be positive, got {n1}")
    r = (n2 + 0.5) / n1
    if not abs(r) < 1.0:
        raise ValueError(f"need |n2 + 1/2| < n1, got n1={n1}, n2={n2}")
    a = r / np.sqrt(1.0 - r * r)
    T = np.pi * n1 * np.sqrt(1.0 - r * r)
    return float(a), float(T)


def quantization_residual(a: float, T: float) -> float:
    """Distance of (a, T) from sqrt(1 + a^2) T in pi Z and a T in pi/2 + pi Z."""
    k1 = np.sqrt(1.0 + a * a) * T / np.pi
    k2 = (a * T - np.pi / 2.0) / np.pi
    return float(max(abs(k1 - np.rint(k1)), abs(k2 - np.rint(k2))) * np.pi)


def grushin_optimal_controls(sign_u1: int, epsilon: int, t) -> np.ndarray:
    """The four optimal controls u1 = +-cos(t/sqrt3), u2 = -+eps sin(t/sqrt3)."""
    if sign_u1 not in (-1, 1) or epsilon not in (-1, 1):
        raise ValueError("sign_u1 and epsilon must be +1 or -1")
    t = np.asarray(t, dtype=float)
    s = t / np.sqrt(3.0)
    return np.stack([sign_u1 * np.cos(s), -sign_u1 * epsilon * np.sin(s)], axis=-1)


@dataclass(frozen=True)
class GrushinSolution:
    a: float
    p_theta0: int
    n1: int
    n2: int
    T: float

    def state(self, t) -> np.ndarray:
        return grushin_extremal(self.a, self.p_theta0, t)

    def controls(self, t) -> np.ndarray:
        return grushin_controls(self.a, self.p_theta0, t)

    def covector(self) -> np.ndarray:
        return grushin_covector(self.a, self.p_theta0)

    @property
    def endpoint(self) -> np.ndarray:
        return self.state(self.T)

    @property
    def cost(self) -> float:
        # arc length with unit speed
        return self.T


def grushin_solutions(max_n1: int = 3) -> list[GrushinSolution]:
    """All quantized extremals with n1 <= max_n1, both p_theta branches, shortest first."""
    out = []
    for n1 in range(1, max_n1 + 1):
        for n2 in range(-n1, n1):
            if not abs(n2 + 0.5) < n1:
                continue
            a, T = grushin_quantized(n1, n2)
            for branch in (-1, 1):
                out.append(GrushinSolution(a, branch, n1, n2, T))
    out.sort(key=lambda s: (s.T, s.a, s.p_theta0))
    return out


def grushin_optimal() -> list[GrushinSolution]:
    sols = grushin_solutions(1)
    best = min(s.T for s in sols)
    return [s for s in sols if abs(s.T - best) <= 1e-12]


def arc_length_normalize(control: ControlLaw) -> tuple[ControlLaw, float]:
    """Reparameterize a driftless control to unit speed; returns the new law on [0, L] and L.

    Interval k lasts dt |u_k| after reparameterization. When these lengths share a common
    step the result is exact; otherwise it is resampled at the new midpoints.
    """
    norms = control.norms()
    keep = norms > ZERO_NORM_TOL
    if not np.any(keep):
        raise ValueError("an all-zero control has no arc-length reparameterization")
    if not np.all(keep):
        logger.warning(f"dropping {int(np.sum(~keep))} zero-norm intervals")
    norms = norms[keep]
    unit_values = control.values[:, keep] / norms
    dt = control.grid.dt
    length = float(dt * norms.sum())
    bounds = ControlBounds.ball(1.0)

    base = norms.min()
    for div in range(1, MAX_REFINE + 1):
        counts = norms / (base / div)
        reps = np.rint(counts)
        if np.all(np.abs(counts - reps) <= 1e-9 * counts.max()):
            reps = reps.astype(int)
            grid = TimeGrid(0.0, length, int(reps.sum()))
            return ControlLaw(grid, np.repeat(unit_values, reps, axis=1), bounds), length

    logger.warning("interval lengths are incommensurate; resampling the unit-speed control")
    n_new = len(norms) * MAX_REFINE
    grid = TimeGrid(0.0, length, n_new)
    edges = np.concatenate([[0.0], np.cumsum(dt * norms)])
    mids = (np.arange(n_new) + 0.5) * grid.dt
    idx = np.clip(np.searchsorted(edges, mids, side="right") - 1, 0, len(norms) - 1)
    return ControlLaw(grid, unit_values[:, idx], bounds), length
