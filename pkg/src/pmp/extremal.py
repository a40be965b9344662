from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from src.config import settings
from src.domain.dto import ControlBounds, ControlLaw, TimeGrid, Trajectory
from src.domain.errors import SingularArcError
from src.domain.interfaces import ControlRule
from src.domain.models import Scenario
from src.dynamics.exponential import expm
from src.pmp.hamiltonian import BilinearFlow
from src.pmp.rules import BangRule, rule_for_scenario

NONTRIVIAL_TOL = 1e-12
SWITCH_TIME_TOL = 1e-10
JUNCTION_RATE_TOL = 1e-6
EVENT_GAP = 1e-8
PHI_TOL = settings.PHI_TOL


@dataclass(frozen=True, eq=False)
class Costate:
    """Costate samples p(t_k), one row per node, with the constant multiplier p0."""

    entries: np.ndarray
    p0: float

    def __post_init__(self):
        if self.p0 > 0:
            raise ValueError(f"p0 must be non-positive, got {self.p0}")
        entries = np.array(self.entries, ndmin=2)
        size = np.linalg.norm(entries, axis=1) + abs(self.p0)
        if np.any(size <= NONTRIVIAL_TOL):
            k = int(np.argmin(size))
            raise ValueError(f"(p, p0) vanishes at node {k}")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @property
    def initial(self) -> np.ndarray:
        return self.entries[0]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.entries, axis=1)


@dataclass(frozen=True, eq=False)
class Extremal:
    trajectory: Trajectory
    costate: Costate
    control: ControlLaw
    kind: str  # normal | abnormal
    control_types: tuple[str, ...]
    hamiltonian_trace: np.ndarray
    switching_trace: np.ndarray  # (n + 1) x m
    cost: float
    switch_times: tuple[float, ...] = ()
    junction_times: tuple[float, ...] = ()
    singular_intervals: tuple[tuple[float, float], ...] = field(default=())

    @property
    def p0(self) -> float:
        return self.costate.p0

    @property
    def grid(self) -> TimeGrid:
        return self.trajectory.grid

    @property
    def duration(self) -> float:
        return self.grid.duration

    def hamiltonian_spread(self) -> float:
        h = self.hamiltonian_trace
        return float((h.max() - h.min()) / max(1.0, abs(float(h.mean()))))


def rk4_batch(
    flow: BilinearFlow,
    rule: ControlRule,
    q0: np.ndarray,
    p0: np.ndarray,
    durations: np.ndarray,
    n_steps: int,
    store: bool = False,
):
    """Classical RK4 on a batch of (q, p) pairs, trajectory i with step durations[i] / n_steps.

    Returns the endpoints, or the full (n_steps + 1) x B x n node arrays when store is set.
    """
    h = (np.asarray(durations, dtype=float) / n_steps)[:, None]
    q, p = np.array(q0), np.array(p0)

    def field_(q_, p_):
        return flow.rhs(rule.resolve(flow, q_, p_), q_, p_)

    if store:
        qs = np.empty((n_steps + 1,) + q.shape, dtype=q.dtype)
        ps = np.empty((n_steps + 1,) + p.shape, dtype=p.dtype)
        qs[0], ps[0] = q, p
    for k in range(n_steps):
        k1q, k1p = field_(q, p)
        k2q, k2p = field_(q + 0.5 * h * k1q, p + 0.5 * h * k1p)
        k3q, k3p = field_(q + 0.5 * h * k2q, p + 0.5 * h * k2p)
        k4q, k4p = field_(q + h * k3q, p + h * k3p)
        q = q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if store:
            qs[k + 1], ps[k + 1] = q, p
    if store:
        return qs, ps
    return q, p


def _trapezoid(values: np.ndarray, dt: float) -> float:
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))


def _terminal(scenario: Scenario, q_final: np.ndarray) -> float:
    if not scenario.cost.has_terminal:
        return 0.0
    return -float(abs(np.vdot(scenario.target.state, q_final)) ** 2)


def _extremal_cost(scenario: Scenario, grid: TimeGrid, node_controls: np.ndarray, q_final) -> float:
    """Running cost integrated over the node samples plus the terminal term."""
    if scenario.cost.kind == "time":
        return grid.duration
    w = scenario.cost.channel_weights(node_controls.shape[1])
    running = np.sum(w * node_controls**2, axis=1)
    return _trapezoid(running, grid.dt) + _terminal(scenario, q_final)


def integrate_extremal(
    scenario: Scenario,
    p_in,
    T: float,
    rule: ControlRule | None = None,
    n_steps: int | None = None,
    phi_tol: float = PHI_TOL,
) -> Extremal:
    """Integrate the joint (q, p) flow from (q_in, p_in) over [0, T]."""
    rule = rule or rule_for_scenario(scenario)
    flow = BilinearFlow(scenario.bilinear)
    p_in = np.asarray(p_in, dtype=scenario.representation.dtype)
    if p_in.shape != (flow.n,):
        raise ValueError(f"initial covector needs {flow.n} entries, got shape {p_in.shape}")
    if not T > 0:
        raise ValueError(f"extremal duration must be positive, got {T}")
    grid = TimeGrid(0.0, float(T), n_steps or scenario.time.steps)
    if isinstance(rule, BangRule):
        return _integrate_bang(scenario, flow, rule, p_in, grid, phi_tol)

    q_in = scenario.initial_state.entries
    qs, ps = rk4_batch(flow, rule, q_in[None], p_in[None], np.array([grid.duration]), grid.n_steps, store=True)
    qs, ps = qs[:, 0], ps[:, 0]
    u_nodes = rule.resolve(flow, qs, ps)
    ham = rule.maximized_hamiltonian(flow, qs, ps)
    phi = flow.phi(qs, ps)
    control = ControlLaw(grid, u_nodes[:-1].T, _law_bounds(scenario, u_nodes))
    traj = Trajectory(grid, qs, control, scenario.representation, scenario.initial_state.on_sphere)
    kind = "abnormal" if rule.abnormal else "normal"
    cost = _extremal_cost(scenario, grid, u_nodes, qs[-1])
    logger.debug(f"extremal on [0, {T:.6g}]: H spread {np.ptp(ham):.3e}, cost {cost:.10g}")
    return Extremal(
        traj,
        Costate(ps, rule.p0),
        control,
        kind,
        tuple(rule.label for _ in range(grid.n_steps)),
        ham,
        phi,
        cost,
    )


def _law_bounds(scenario: Scenario, u_nodes: np.ndarray) -> ControlBounds:
    # the rules respect the scenario bounds; unbounded rules may still visit discrete sets
    if scenario.bounds.contains_all(u_nodes.T, tol=1e-9):
        return scenario.bounds if scenario.bounds.kind != "discrete" else ControlBounds()
    return ControlBounds()


class _BangIntegrator:
    """Exact exponential stepping of piecewise-constant bang/singular controls.

    Sign changes of phi are located by bisection in time; a tangential zero of a
    single switching function (phi = phi' = 0) is a junction handled by the rule's policy.
    """

    def __init__(self, flow: BilinearFlow, rule: BangRule, phi_tol: float):
        self.flow = flow
        self.rule = rule
        self.phi_tol = phi_tol
        self.cache: dict[tuple[bytes, float], tuple[np.ndarray, np.ndarray]] = {}
        self.single = flow.m == 1
        if self.single:
            g, g0 = flow.gc[0], flow.g0
            self.c1 = g @ g0 - g0 @ g  # [G, G0]
            self.c_drift = self.c1 @ g0 - g0 @ self.c1  # [[G, G0], G0]
            self.c_control = self.c1 @ g - g @ self.c1  # [[G, G0], G]
        self.switch_times: list[float] = []
        self.junction_times: list[float] = []
        self.singular_intervals: list[tuple[float, float]] = []

    def propagators(self, u: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
        key = (u.tobytes(), h)
        hit = self.cache.get(key)
        if hit is None:
            a = self.flow.generator(u[None])[0] * h
            hit = (expm(a), expm(-a.conj().T))
            self.cache[key] = hit
        return hit

    def advance(self, u, q, p, h):
        if h <= 0:
            return q, p
        eq, ep = self.propagators(u, h)
        return eq @ q, ep @ p

    def phi(self, q, p) -> np.ndarray:
        return self.flow.phi(q[None], p[None])[0]

    def phi_rate(self, q, p) -> float:
        return float(self.flow.commutator_pairing(q[None], p[None], self.c1)[0])

    def singular_control(self, q, p) -> np.ndarray:
        num = self.flow.commutator_pairing(q[None], p[None], self.c_drift)[0]
        den = self.flow.commutator_pairing(q[None], p[None], self.c_control)[0]
        if abs(den) <= 1e-14:
            return self.rule.midpoint.copy()
        return np.clip(np.array([-num / den]), self.rule.lower, self.rule.upper)

    def locus_residual(self, q) -> float:
        """Relative smallest singular value of [Gq, [G, G0]q]; zero on the singular locus."""
        cols = np.column_stack([self.flow.gc[0] @ q, self.c1 @ q])
        if self.flow.complex:
            cols = np.vstack([cols.real, cols.imag])
        sv = np.linalg.svd(cols, compute_uv=False)
        return float(sv[-1] / max(sv[0], 1e-300))

    def disagrees(self, u, q, p) -> bool:
        phi = self.phi(q, p)
        side = np.sign(u - self.rule.midpoint)
        return bool(np.any(side * phi < 0))

    def start_control(self, q, p, t: float) -> tuple[np.ndarray, str]:
        phi = self.phi(q, p)
        if not self.single:
            return self.rule.bang(np.sign(phi)), "bang"
        if abs(phi[0]) > self.phi_tol:
            return self.rule.bang(np.sign(phi)), "bang"
        rate = self.phi_rate(q, p)
        if abs(rate) > JUNCTION_RATE_TOL:
            return self.rule.bang(np.array([np.sign(rate)])), "bang"
        if self.rule.junction == "singular":
            return self.enter_singular(q, p, t)
        # choose the bound whose second derivative keeps phi on its side
        up = self.rule.upper
        accel = self.second_derivative(q, p, up)
        return (up.copy() if accel > 0 else self.rule.lower.copy()), "bang"

    def second_derivative(self, q, p, u) -> float:
        d = self.flow.commutator_pairing(q[None], p[None], self.c_drift)[0]
        c = self.flow.commutator_pairing(q[None], p[None], self.c_control)[0]
        return float(d + u[0] * c)

    def enter_singular(self, q, p, t: float) -> tuple[np.ndarray, str]:
        residual = self.locus_residual(q)
        if residual > 10.0 * self.phi_tol:
            raise SingularArcError(t, residual)
        self.junction_times.append(t)
        return self.singular_control(q, p), "singular"

    def junction(self, u, q, p, t: float) -> tuple[np.ndarray, str]:
        policy = self.rule.junction
        if policy == "singular":
            return self.enter_singular(q, p, t)
        self.junction_times.append(t)
        if policy == "switch":
            self.switch_times.append(t)
            return self.rule.lower + self.rule.upper - u, "bang"
        return u, "bang"

    def bisect_sign(self, u, q, p, h: float) -> float:
        lo, hi = 0.0, h
        while hi - lo > SWITCH_TIME_TOL:
            mid = 0.5 * (lo + hi)
            qm, pm = self.advance(u, q, p, mid)
            if self.disagrees(u, qm, pm):
                hi = mid
            else:
                lo = mid
        return hi

    def bisect_rate(self, q, p, u, h: float, side: float) -> float:
        lo, hi = 0.0, h
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            qm, pm = self.advance(u, q, p, mid)
            if self.phi_rate(qm, pm) * side < 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def _integrate_bang(
    scenario: Scenario, flow: BilinearFlow, rule: BangRule, p_in: np.ndarray, grid: TimeGrid, phi_tol: float
) -> Extremal:
    it = _BangIntegrator(flow, rule, phi_tol)
    n = grid.n_steps
    q = np.array(scenario.initial_state.entries)
    p = np.array(p_in)
    qs = np.empty((n + 1, flow.n), dtype=q.dtype)
    ps = np.empty((n + 1, flow.n), dtype=p.dtype)
    qs[0], ps[0] = q, p
    values = np.empty((flow.m, n))
    labels: list[str] = []

    u, mode = it.start_control(q, p, 0.0)
    singular_start = 0.0 if mode == "singular" else None
    singular_end = None
    if mode == "singular" and rule.singular_duration is not None:
        singular_end = rule.singular_duration
    last_event = 0.0 if mode == "singular" else -np.inf

    for k in range(n):
        t = grid.node(k)
        t_next = grid.node(k + 1)
        values[:, k] = u
        labels.append(_label(mode, u, rule))
        while t < t_next:
            full = t == grid.node(k)
            h = grid.dt if full else t_next - t
            if mode == "singular":
                if singular_end is not None and singular_end < t + h:
                    h_exit = max(singular_end - t, 0.0)
                    q, p = it.advance(u, q, p, h_exit)
                    t = singular_end
                    it.singular_intervals.append((singular_start, t))
                    it.switch_times.append(t)
                    u = rule.bang(np.array([rule.exit_sign]))
                    mode, singular_end, last_event = "bang", None, t
                    if t >= t_next:
                        break
                    _hold(values, labels, k, u, mode, rule)
                    continue
                q, p = it.advance(u, q, p, h)
                t = t_next
                u = it.singular_control(q, p)
                continue

            q1, p1 = it.advance(u, q, p, h)
            if it.disagrees(u, q1, p1):
                tau = it.bisect_sign(u, q, p, h)
                q, p = it.advance(u, q, p, tau)
                t = t + tau
                last_event = t
                phi = it.phi(q, p)
                # phi changed sign, so keeping the bound is never an option here
                tangential = it.single and abs(it.phi_rate(q, p)) <= JUNCTION_RATE_TOL
                if tangential and rule.junction != "continue":
                    u, mode = it.junction(u, q, p, t)
                    if mode == "singular":
                        singular_start = t
                        if rule.singular_duration is not None:
                            singular_end = t + rule.singular_duration
                else:
                    u = rule.bang(np.sign(phi))
                    it.switch_times.append(t)
                if t >= t_next:
                    break
                _hold(values, labels, k, u, mode, rule)
                continue

            if it.single:
                side = float(np.sign(u[0] - rule.midpoint[0]))
                d0, d1 = it.phi_rate(q, p), it.phi_rate(q1, p1)
                if d0 * side < 0 and d1 * side > 0:
                    s = it.bisect_rate(q, p, u, h, side)
                    qs_, ps_ = it.advance(u, q, p, s)
                    if t + s - last_event > EVENT_GAP and abs(it.phi(qs_, ps_)[0]) <= phi_tol:
                        q, p, t = qs_, ps_, t + s
                        last_event = t
                        u, mode = it.junction(u, q, p, t)
                        if mode == "singular":
                            singular_start = t
                            if rule.singular_duration is not None:
                                singular_end = t + rule.singular_duration
                        _hold(values, labels, k, u, mode, rule)
                        continue
            q, p, t = q1, p1, t_next
        qs[k + 1], ps[k + 1] = q, p

    if mode == "singular":
        it.singular_intervals.append((singular_start, grid.t_end))

    u_nodes = np.column_stack([values, values[:, -1:]]).T
    ham = rule.maximized_hamiltonian(flow, qs, ps)
    phi = flow.phi(qs, ps)
    control = ControlLaw(grid, values, scenario.bounds)
    traj = Trajectory(grid, qs, control, scenario.representation, scenario.initial_state.on_sphere)
    kind = "abnormal" if rule.abnormal else "normal"
    cost = _extremal_cost(scenario, grid, u_nodes, qs[-1])
    logger.debug(
        f"bang extremal on [0, {grid.t_end:.6g}]: {len(it.switch_times)} switches, "
        f"{len(it.junction_times)} junctions"
    )
    return Extremal(
        traj,
        Costate(ps, rule.p0),
        control,
        kind,
        tuple(labels),
        ham,
        phi,
        cost,
        tuple(it.switch_times),
        tuple(it.junction_times),
        tuple(it.singular_intervals),
    )


def _hold(values: np.ndarray, labels: list[str], k: int, u: np.ndarray, mode: str, rule: BangRule) -> None:
    """A switch inside interval k: the post-switch control stands for the whole interval."""
    values[:, k] = u
    labels[k] = _label(mode, u, rule)


def _label(mode: str, u: np.ndarray, rule: BangRule) -> str:
    if mode == "singular":
        return "singular"
    return "bang(+1)" if u[0] > rule.midpoint[0] else "bang(-1)"
