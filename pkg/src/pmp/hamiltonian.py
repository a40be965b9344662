from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.domain.dto import StateVector
from src.domain.interfaces import ControlDynamics
from src.domain.models import BilinearSystem

# rotation about the x axis, the control generator of the spin system
X_ROTATION = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
ABNORMAL_COND_MAX = 1e8


def _entries(v) -> np.ndarray:
    return v.entries if isinstance(v, StateVector) else np.asarray(v)


class BilinearFlow:
    """Batched state/costate vector field of q' = A(u) q, p' = -A(u)^+ p.

    Pairings are the real parts of <p|v>, which covers real and complex systems alike.
    """

    def __init__(self, system: BilinearSystem):
        self.system = system
        self.g0, self.gc = system.flow_generators()
        self.complex = system.representation.is_complex

    @property
    def n(self) -> int:
        return self.system.dimension

    @property
    def m(self) -> int:
        return self.system.n_controls

    def phi(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        """phi_j = Re <p|G_j q>, shape B x m."""
        gq = np.einsum("jac,bc->bja", self.gc, q)
        return np.einsum("ba,bja->bj", p.conj(), gq).real

    def drift_pairing(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.einsum("ba,ba->b", p.conj(), q @ self.g0.T).real

    def generator(self, u: np.ndarray) -> np.ndarray:
        return self.g0[None] + np.einsum("bj,jkl->bkl", u, self.gc)

    def rhs(self, u: np.ndarray, q: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = self.generator(u)
        dq = np.einsum("bkl,bl->bk", a, q)
        dp = -np.einsum("blk,bl->bk", a.conj(), p)
        return dq, dp

    def commutator_pairing(self, q: np.ndarray, p: np.ndarray, c: np.ndarray) -> np.ndarray:
        return np.einsum("ba,ba->b", p.conj(), q @ c.T).real


def pre_hamiltonian(model: ControlDynamics, q, p, u, p0: float) -> float:
    """<p, f(q, u)> + p0 f0(q, u)."""
    if p0 > 0:
        raise ValueError("the abnormal multiplier must be non-positive")
    q, p = _entries(q), _entries(p)
    return model.pairing(p, model.velocity(q, u)) + p0 * model.running_cost(q, u)


def normal_control_bilinear(psi, chi, h_j: np.ndarray) -> float:
    """u_j = Im <chi|H_j|psi> (normal extremal, p0 = -1, unbounded controls)."""
    psi, chi = _entries(psi), _entries(chi)
    return float(np.imag(np.vdot(chi, np.asarray(h_j) @ psi)))


def normal_controls(psi, chi, system: BilinearSystem) -> np.ndarray:
    return np.array([normal_control_bilinear(psi, chi, h) for h in system.controls])


@dataclass(frozen=True)
class AbnormalControl:
    r: np.ndarray
    s: np.ndarray
    u: np.ndarray | None
    singular: bool
    constraint: float | None = None


def abnormal_control_system(psi, chi, system: BilinearSystem) -> AbnormalControl:
    """Solve R u = s with R_kj = Re<chi|[H_k, H_j]|psi>, s_k = Re<chi|[H_0, H_k]|psi>."""
    psi, chi = _entries(psi), _entries(chi)
    n = system.dimension
    if psi.shape != (n,) or chi.shape != (n,):
        raise ValueError(f"psi and chi must have {n} entries")
    hs = system.controls
    m = len(hs)

    def bracket(a, b) -> float:
        return float(np.real(np.vdot(chi, (a @ b - b @ a) @ psi)))

    r = np.array([[bracket(hs[k], hs[j]) for j in range(m)] for k in range(m)]).reshape(m, m)
    s = np.array([bracket(system.drift, hs[k]) for k in range(m)])
    cond = np.linalg.cond(r) if m else np.inf
    if m and np.isfinite(cond) and cond < ABNORMAL_COND_MAX:
        return AbnormalControl(r, s, np.linalg.solve(r, s), False)
    constraint = s[0] if m == 1 else None
    return AbnormalControl(r, s, None, True, constraint)


def switching_function(p, q, g: np.ndarray = X_ROTATION) -> float:
    """Phi = p G q, the control coefficient of the spin pre-Hamiltonian."""
    p, q = _entries(p), _entries(q)
    return float(np.real(np.vdot(p, np.asarray(g) @ q)))
