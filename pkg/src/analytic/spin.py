from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.domain.dto import ControlBounds, Representation, StateVector
from src.domain.models import BilinearSystem, Cost, Scenario, Target, TimeSpec
from src.dynamics.exponential import expm
from src.pmp.extremal import Extremal, integrate_extremal
from src.pmp.rules import BangRule

NORTH_POLE = np.array([0.0, 0.0, 1.0])
SOUTH_POLE = np.array([0.0, 0.0, -1.0])
X_AXIS = np.array([1.0, 0.0, 0.0])
SPIN_G = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


def _check_delta(delta: float) -> None:
    if not abs(delta) <= 1.0:
        raise ValueError(f"the synthesis assumes |delta| <= 1, got {delta}")


def spin_drift(delta: float) -> np.ndarray:
    return np.array([[0.0, -delta, 0.0], [delta, 0.0, 0.0], [0.0, 0.0, 0.0]])


def spin_system(delta: float) -> BilinearSystem:
    """Normalized Bloch equation q' = (F + u G) q, a z-rotation drift and an x-rotation control."""
    return BilinearSystem(Representation.REAL_ORTHOGONAL, spin_drift(delta), (SPIN_G,))


def spin_omega(delta: float) -> float:
    return float(np.sqrt(1.0 + delta * delta))


def spin_scenario(delta: float, target, initial=NORTH_POLE, horizon: float | None = None, steps: int = 2000):
    """Minimum-time transfer with |u| <= 1 and free final time."""
    horizon = horizon or 2.0 * np.pi / spin_omega(delta)
    return Scenario(
        name=f"spin-delta-{delta:g}",
        system=spin_system(delta),
        initial_state=StateVector(np.asarray(initial, dtype=float), Representation.REAL_ORTHOGONAL),
        target=Target("point", np.asarray(target, dtype=float)),
        cost=Cost("time"),
        time=TimeSpec("free", horizon, steps),
        bounds=ControlBounds.box([-1.0], [1.0]),
    )


def spin_bang_arc(delta: float, epsilon: int, t) -> np.ndarray:
    """Bang arc u = epsilon from the north pole, in closed form."""
    _check_delta(delta)
    if epsilon not in (-1, 1):
        raise ValueError("epsilon must be +1 or -1")
    t = np.asarray(t, dtype=float)
    om = spin_omega(delta)
    x = epsilon * delta / om**2 * (1.0 - np.cos(om * t))
    y = -epsilon / om * np.sin(om * t)
    z = 1.0 + (np.cos(om * t) - 1.0) / om**2
    return np.stack([x, y, z], axis=-1)


def equator_times(delta: float) -> tuple[float, float]:
    """First two zeros of z along a bang arc from the north pole."""
    _check_delta(delta)
    om = spin_omega(delta)
    c = np.arccos(delta * delta)
    return float((np.pi - c) / om), float((np.pi + c) / om)


@dataclass(frozen=True)
class SpinArc:
    kind: str  # bang | singular
    sign: int  # bound for bang arcs, 0 on singular arcs
    duration: float

    @property
    def control(self) -> float:
        return float(self.sign) if self.kind == "bang" else 0.0

    @property
    def label(self) -> str:
        return "singular" if self.kind == "singular" else f"bang({self.sign:+d})"


@dataclass(frozen=True)
class SpinSynthesis:
    delta: float
    problem: str
    arcs: tuple[SpinArc, ...]

    @property
    def omega(self) -> float:
        return spin_omega(self.delta)

    @property
    def total_duration(self) -> float:
        return float(sum(a.duration for a in self.arcs))

    @property
    def switch_times(self) -> list[float]:
        return list(np.cumsum([a.duration for a in self.arcs])[:-1])

    def arc_list(self) -> list[dict]:
        return [{"type": a.label, "control": a.control, "duration": a.duration} for a in self.arcs]


def spin_p1(delta: float) -> tuple[SpinSynthesis, SpinSynthesis]:
    """North to south pole: bang(eps, t1) then bang(-eps, t2), and the variant with t2 first."""
    _check_delta(delta)
    t1, t2 = equator_times(delta)
    eps = 1
    main = SpinSynthesis(delta, "P1", (SpinArc("bang", eps, t1), SpinArc("bang", -eps, t2)))
    variant = SpinSynthesis(delta, "P1", (SpinArc("bang", eps, t2), SpinArc("bang", -eps, t1)))
    return main, variant


def singular_duration_p2(delta: float) -> float:
    return float(np.arctan(np.sqrt(1.0 - delta * delta) / delta) / delta)


def spin_p2(delta: float) -> SpinSynthesis:
    """North pole to (1, 0, 0): bang(+1, t1) to the equator, then the singular rotation."""
    _check_delta(delta)
    if not delta > 0:
        raise ValueError(
            f"P2 needs 0 < delta <= 1: the singular arc lasts arctan(sqrt(1-d^2)/d)/d, unbounded as d -> 0 (got {delta})"
        )
    t1, _ = equator_times(delta)
    return SpinSynthesis(delta, "P2", (SpinArc("bang", 1, t1), SpinArc("singular", 0, singular_duration_p2(delta))))


def arc_generator(delta: float, control: float) -> np.ndarray:
    return spin_drift(delta) + control * SPIN_G


def propagate_synthesis(synth: SpinSynthesis, q0=NORTH_POLE) -> list[np.ndarray]:
    """Exact states at every arc boundary, starting with q0."""
    states = [np.asarray(q0, dtype=float)]
    for arc in synth.arcs:
        states.append(expm(arc_generator(synth.delta, arc.control) * arc.duration) @ states[-1])
    return states


def synthesis_frame(synth: SpinSynthesis, samples_per_arc: int = 200, q0=NORTH_POLE) -> pd.DataFrame:
    """Sampled trajectory (t, x, y, z, u) of a synthesis, each arc evaluated exactly."""
    rows = []
    q = np.asarray(q0, dtype=float)
    t0 = 0.0
    for arc in synth.arcs:
        a = arc_generator(synth.delta, arc.control)
        for s in np.linspace(0.0, arc.duration, samples_per_arc, endpoint=False):
            x = expm(a * s) @ q
            rows.append((t0 + s, x[0], x[1], x[2], arc.control))
        q = expm(a * arc.duration) @ q
        t0 += arc.duration
    rows.append((t0, q[0], q[1], q[2], synth.arcs[-1].control))
    return pd.DataFrame(rows, columns=["t", "x", "y", "z", "u"])


def junction_costate(delta: float, point) -> np.ndarray:
    """Covector with phi = phi' = 0 and H = 0 (p0 = -1) at an equator point."""
    if delta == 0:
        raise ValueError("the junction covector needs delta != 0")
    x, y, _ = point
    return np.array([-y, x, 0.0]) / delta


def synthesis_costate(synth: SpinSynthesis) -> np.ndarray:
    """Initial covector at the north pole whose extremal follows the synthesis.

    The first arc ends on the equator at a tangential zero of phi; the junction covector
    there is carried back along the first arc.
    """
    first = synth.arcs[0]
    states = propagate_synthesis(synth)
    p_junction = junction_costate(synth.delta, states[1])
    # p' = -A^T p = A p for the skew generator, so p moves like the state
    back = expm(-arc_generator(synth.delta, first.control) * first.duration)
    return back @ p_junction


def seeded_normal_start(delta: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random state and a normal covector (p0 = -1, H = 0) placed on a transversal switch."""
    rng = np.random.default_rng(seed)
    f = spin_drift(delta)
    while True:
        q = rng.standard_normal(3)
        q /= np.linalg.norm(q)
        p_hat = np.cross(q, SPIN_G @ q)
        pf = p_hat @ f @ q
        rate = p_hat @ (SPIN_G @ f - f @ SPIN_G) @ q
        if abs(pf) > 1e-2 and abs(rate) > 1e-2 * abs(pf):
            return q, p_hat / pf


def seeded_abnormal_start(delta: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random state and an abnormal covector (p0 = 0, H = 0) with sign(phi) = s."""
    rng = np.random.default_rng(seed)
    f = spin_drift(delta)
    while True:
        q = rng.standard_normal(3)
        q /= np.linalg.norm(q)
        s = 1 if rng.random() < 0.5 else -1
        p = np.cross(q, f @ q + s * (SPIN_G @ q))
        phi = p @ SPIN_G @ q
        if abs(phi) > 1e-2:
            return q, p * np.sign(phi) * s


def synthesis_rule(synth: SpinSynthesis) -> BangRule:
    """Bang rule whose junction policy reproduces the synthesis."""
    if any(a.kind == "singular" for a in synth.arcs):
        t_s = next(a.duration for a in synth.arcs if a.kind == "singular")
        exit_sign = synth.arcs[-1].sign if synth.arcs[-1].kind == "bang" else 1
        return BangRule([-1.0], [1.0], -1.0, "singular", t_s, exit_sign)
    return BangRule([-1.0], [1.0], -1.0, "switch")


def synthesis_extremal(synth: SpinSynthesis, n_steps: int = 2000) -> Extremal:
    """Integrate the PMP flow from the junction-seeded covector over the synthesis duration."""
    target = SOUTH_POLE if synth.problem == "P1" else X_AXIS
    T = synth.total_duration
    scenario = spin_scenario(synth.delta, target, horizon=T, steps=n_steps)
    return integrate_extremal(scenario, synthesis_costate(synth), T, synthesis_rule(synth), n_steps)
