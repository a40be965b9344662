from __future__ import annotations

import numpy as np

POLE_TOL = 1e-12


class SphericalChart:
    """(theta, phi) chart on S^2 with x = (sin t cos f, cos t, sin t sin f).

    Singular at theta in {0, pi}; near the poles work in ambient coordinates instead.
    In the chart the Grushin system reads theta' = v1, phi' = v2 cot(theta).
    """

    @staticmethod
    def from_chart(theta: float, phi: float) -> np.ndarray:
        return np.array([np.sin(theta) * np.cos(phi), np.cos(theta), np.sin(theta) * np.sin(phi)])

    @staticmethod
    def to_chart(x) -> tuple[float, float]:
        x = np.asarray(x, dtype=float)
        theta = float(np.arccos(np.clip(x[1] / np.linalg.norm(x), -1.0, 1.0)))
        if np.sin(theta) < POLE_TOL:
            raise ValueError("the spherical chart is singular at the poles x = (0, +-1, 0)")
        return theta, float(np.arctan2(x[2], x[0]))

    @staticmethod
    def tangent_frame(theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
        """d x / d theta and d x / d phi."""
        d_theta = np.array([np.cos(theta) * np.cos(phi), -np.sin(theta), np.cos(theta) * np.sin(phi)])
        d_phi = np.array([-np.sin(theta) * np.sin(phi), 0.0, np.sin(theta) * np.cos(phi)])
        return d_theta, d_phi

    def covector_to_chart(self, x, p) -> tuple[float, float]:
        """Pull an ambient covector back: p_theta = <p, dx/dtheta>, p_phi = <p, dx/dphi>."""
        theta, phi = self.to_chart(x)
        d_theta, d_phi = self.tangent_frame(theta, phi)
        p = np.asarray(p, dtype=float)
        return float(p @ d_theta), float(p @ d_phi)

    def chart_controls(self, q, p_chart) -> np.ndarray:
        """Normal energy extremal (p0 = -1/2): v1 = p_theta, v2 = p_phi cot(theta)."""
        theta = q[0]
        return np.array([p_chart[0], p_chart[1] / np.tan(theta)])

    @staticmethod
    def rotate_controls(phi: float, v) -> np.ndarray:
        """Chart controls back to the ambient ones; the map preserves u1^2 + u2^2."""
        v1, v2 = v
        return np.array([-v1 * np.cos(phi) + v2 * np.sin(phi), v1 * np.sin(phi) + v2 * np.cos(phi)])

    # ControlDynamics, so pre_hamiltonian works in the chart as well

    def velocity(self, q, v) -> np.ndarray:
        theta = q[0]
        return np.array([v[0], v[1] / np.tan(theta)])

    def running_cost(self, q, v) -> float:
        return float(np.sum(np.asarray(v, dtype=float) ** 2))

    @staticmethod
    def pairing(p, v) -> float:
        return float(np.dot(p, v))
