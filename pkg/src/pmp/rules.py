from __future__ import annotations

import numpy as np

from src.domain.dto import ControlBounds
from src.domain.interfaces import ControlRule
from src.domain.models import Scenario
from src.pmp.hamiltonian import ABNORMAL_COND_MAX, BilinearFlow

JUNCTION_POLICIES = ("switch", "singular", "continue")


def _positive_scale(alpha: np.ndarray) -> np.ndarray:
    # rescaling only makes sense for a positive factor; otherwise keep the covector
    ok = np.isfinite(alpha) & (alpha > 0)
    return np.where(ok, alpha, 1.0)


class NormalQuadraticRule(ControlRule):
    """u_j = -phi_j / (2 p0 w_j), clipped to a box or ball when the controls are bounded."""

    def __init__(self, weights, p0: float = -0.5, bounds: ControlBounds | None = None):
        if not p0 < 0:
            raise ValueError("a normal rule needs p0 < 0")
        self.weights = np.asarray(weights, dtype=float)
        self.p0 = float(p0)
        self.bounds = bounds or ControlBounds()
        if self.bounds.kind == "discrete":
            raise ValueError("quadratic costs over a discrete control set have no pointwise maximizer")

    def resolve(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        u = flow.phi(q, p) / (-2.0 * self.p0 * self.weights)
        if self.bounds.kind == "box":
            u = np.clip(u, self.bounds.lower, self.bounds.upper)
        elif self.bounds.kind == "ball":
            norm = np.linalg.norm(u, axis=1, keepdims=True)
            u = u * np.minimum(1.0, self.bounds.radius / np.maximum(norm, 1e-300))
        return u

    def maximized_hamiltonian(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        u = self.resolve(flow, q, p)
        phi = flow.phi(q, p)
        return flow.drift_pairing(q, p) + np.sum(u * phi, axis=1) + self.p0 * np.sum(self.weights * u**2, axis=1)

    def normalize(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        # H(alpha p) = alpha d + alpha^2 c for the unclipped rule
        d = flow.drift_pairing(q, p)
        c = np.sum(flow.phi(q, p) ** 2 / (-4.0 * self.p0 * self.weights), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = -d / c
        return p * _positive_scale(alpha)[:, None]


class BallTimeOptimalRule(ControlRule):
    """Time-optimal control on the disc of radius r: u = r phi / |phi|."""

    def __init__(self, radius: float = 1.0, p0: float = -1.0):
        self.radius = float(radius)
        self.p0 = float(p0)

    def resolve(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        phi = flow.phi(q, p)
        norm = np.linalg.norm(phi, axis=1, keepdims=True)
        return np.where(norm > 0, self.radius * phi / np.maximum(norm, 1e-300), 0.0)

    def maximized_hamiltonian(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        return flow.drift_pairing(q, p) + self.radius * np.linalg.norm(flow.phi(q, p), axis=1) + self.p0

    def normalize(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        s = flow.drift_pairing(q, p) + self.radius * np.linalg.norm(flow.phi(q, p), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = -self.p0 / s
        return p * _positive_scale(alpha)[:, None]


class BangRule(ControlRule):
    """Box-bounded controls: u_j at the bound selected by the sign of phi_j.

    At a tangential zero of a single switching function (a junction) the policy decides:
    ``switch`` flips to the other bound, ``continue`` keeps the bound and ``singular``
    enters a singular arc, left after ``singular_duration`` with the sign ``exit_sign``.
    """

    label = "bang"

    def __init__(
        self,
        lower,
        upper,
        p0: float = -1.0,
        junction: str = "switch",
        singular_duration: float | None = None,
        exit_sign: int = 1,
    ):
        if junction not in JUNCTION_POLICIES:
            raise ValueError(f"junction policy must be one of {JUNCTION_POLICIES}, got {junction!r}")
        if singular_duration is not None and singular_duration < 0:
            raise ValueError("singular_duration must be non-negative")
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        self.p0 = float(p0)
        self.junction = junction
        self.singular_duration = singular_duration
        self.exit_sign = 1 if exit_sign >= 0 else -1

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def bang(self, sign) -> np.ndarray:
        sign = np.asarray(sign)
        return np.where(sign > 0, self.upper, np.where(sign < 0, self.lower, self.midpoint))

    def resolve(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        return self.bang(np.sign(flow.phi(q, p)))

    def maximized_hamiltonian(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        phi = flow.phi(q, p)
        best = np.maximum(self.lower * phi, self.upper * phi)
        return flow.drift_pairing(q, p) + best.sum(axis=1) + self.p0

    def normalize(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        phi = flow.phi(q, p)
        s = flow.drift_pairing(q, p) + np.maximum(self.lower * phi, self.upper * phi).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = -self.p0 / s
        return p * _positive_scale(alpha)[:, None]


class AbnormalBilinearRule(ControlRule):
    """p0 = 0 with unbounded controls: the constraint phi = 0 held by u = R^-1 s."""

    p0 = 0.0

    def resolve(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        # R_kj = Re <p|[G_k, G_j] q>, s_k = Re <p|[G_0, G_k] q> in flow-generator form
        gc, g0 = flow.gc, flow.g0
        comm = np.einsum("kab,jbc->kjac", gc, gc) - np.einsum("jab,kbc->kjac", gc, gc)
        drift = np.einsum("ab,kbc->kac", g0, gc) - np.einsum("kab,bc->kac", gc, g0)
        r = np.einsum("ba,kjac,bc->bkj", p.conj(), comm, q).real
        s = np.einsum("ba,kac,bc->bk", p.conj(), drift, q).real
        u = np.zeros_like(s)
        for b in range(len(s)):
            if np.linalg.cond(r[b]) < ABNORMAL_COND_MAX:
                # d/dt phi_k = Re<p|[G_k, G_0 + sum u_j G_j] q> = 0
                u[b] = np.linalg.solve(r[b], s[b])
        return u

    def maximized_hamiltonian(self, flow: BilinearFlow, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        u = self.resolve(flow, q, p)
        return flow.drift_pairing(q, p) + np.sum(u * flow.phi(q, p), axis=1)


def rule_for_scenario(
    scenario: Scenario,
    abnormal: bool = False,
    junction: str = "switch",
    singular_duration: float | None = None,
    exit_sign: int = 1,
) -> ControlRule:
    """Pick the control-resolution rule matching the scenario's cost and bounds."""
    if scenario.is_lindblad:
        raise ValueError("extremals are integrated on the Hamiltonian part only; pass the bilinear scenario")
    bounds = scenario.bounds
    cost = scenario.cost
    if bounds.kind == "box":
        p0 = 0.0 if abnormal else -1.0
        return BangRule(bounds.lower, bounds.upper, p0, junction, singular_duration, exit_sign)
    if abnormal:
        if bounds.kind != "unbounded":
            raise ValueError(f"no abnormal rule for {bounds.kind} bounds")
        return AbnormalBilinearRule()
    if cost.kind == "time":
        if bounds.kind == "ball":
            return BallTimeOptimalRule(bounds.radius)
        raise ValueError(f"minimum time over {bounds.kind} controls has no maximizing control")
    m = scenario.bilinear.n_controls
    return NormalQuadraticRule(cost.channel_weights(m), cost.default_p0, bounds)
