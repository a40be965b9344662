from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from loguru import logger

from src.domain.dto import ControlLaw
from src.domain.errors import DimensionMismatchError, GrapeDivergenceError, ScenarioValidationError
from src.domain.models import Scenario
from src.dynamics.exponential import expm_frechet
from src.dynamics.propagator import interval_propagators

GRAD_TOL = 1e-8
LOOSE_GRAD_TOL = 1e-6
MAX_HALVINGS = 30


def _check(scenario: Scenario, control: ControlLaw) -> None:
    if scenario.is_lindblad:
        raise ScenarioValidationError("approach-b", "gradients are derived for pure states only")
    if not scenario.representation.is_complex:
        raise DimensionMismatchError("GRAPE needs a complex-unitary system")
    if scenario.target.kind != "free" or scenario.cost.kind != "fidelity":
        raise ScenarioValidationError("approach-b", "GRAPE needs a free target with a fidelity cost")
    if control.channels != scenario.bilinear.n_controls:
        raise DimensionMismatchError(
            f"control has {control.channels} channels, system expects {scenario.bilinear.n_controls}"
        )


class _Pieces:
    """Per-interval propagators U_k and their derivatives dU_k/du_j for one control."""

    def __init__(self, scenario: Scenario, values: np.ndarray, dt: float):
        g0, gc = scenario.bilinear.flow_generators()
        m, n_steps = values.shape
        self.props = []
        self.derivs = []
        cache: dict[bytes, tuple[np.ndarray, list[np.ndarray]]] = {}
        for k in range(n_steps):
            u = values[:, k]
            key = u.tobytes()
            hit = cache.get(key)
            if hit is None:
                x = (g0 + np.tensordot(u, gc, axes=1)) * dt
                pairs = [expm_frechet(x, gc[j] * dt) for j in range(m)]
                hit = (pairs[0][0], [d for _, d in pairs])
                cache[key] = hit
            self.props.append(hit[0])
            self.derivs.append(hit[1])


def _forward(scenario: Scenario, pieces: _Pieces) -> np.ndarray:
    psi = [np.asarray(scenario.initial_state.entries, dtype=complex)]
    for u_k in pieces.props:
        psi.append(u_k @ psi[-1])
    return np.array(psi)


def grape_cost(scenario: Scenario, control: ControlLaw) -> float:
    """J = (lambda/2) int sum u^2 dt - |<psi_fi|psi(T)>|^2 on the piecewise-constant control."""
    _check(scenario, control)
    values = control.values
    dt = control.grid.dt
    psi = np.asarray(scenario.initial_state.entries, dtype=complex)
    for step in interval_propagators(scenario.bilinear, control):
        psi = step @ psi
    overlap = np.vdot(scenario.target.state, psi)
    lam = scenario.cost.energy_weight
    return float(0.5 * lam * dt * np.sum(values**2) - abs(overlap) ** 2)


@dataclass
class GradientPieces:
    psi: np.ndarray  # (n + 1) x N forward states
    chi: np.ndarray  # (n + 1) x N backward costates
    coupling: np.ndarray  # m x n interval averages of Im <chi|H_j|psi>
    overlap: complex


def fidelity_gradient(scenario: Scenario, control: ControlLaw) -> GradientPieces:
    """Forward psi, backward chi from chi(T) = 2 <psi_fi|psi(T)> psi_fi, and the coupling term.

    The coupling term is Re<chi_{k+1}|dU_k/du_j psi_k>/dt, the exact interval average of
    Im<chi(t)|H_j|psi(t)> for the piecewise-constant control.
    """
    _check(scenario, control)
    dt = control.grid.dt
    pieces = _Pieces(scenario, control.values, dt)
    psi = _forward(scenario, pieces)
    target = np.asarray(scenario.target.state, dtype=complex)
    overlap = np.vdot(target, psi[-1])
    n_steps = control.grid.n_steps
    chi = np.empty_like(psi)
    chi[-1] = 2.0 * overlap * target
    for k in range(n_steps - 1, -1, -1):
        chi[k] = pieces.props[k].conj().T @ chi[k + 1]
    coupling = np.empty((control.channels, n_steps))
    for k in range(n_steps):
        for j, d in enumerate(pieces.derivs[k]):
            coupling[j, k] = np.real(np.vdot(chi[k + 1], d @ psi[k])) / dt
    return GradientPieces(psi, chi, coupling, complex(overlap))


def grape_gradient(scenario: Scenario, control: ControlLaw) -> np.ndarray:
    """Ascent direction Im<chi|H_j|psi> - lambda u_j, i.e. -(1/dt) dJ/du_jk."""
    pieces = fidelity_gradient(scenario, control)
    return pieces.coupling - scenario.cost.energy_weight * control.values


@dataclass
class GrapeRun:
    scenario: Scenario
    control: ControlLaw
    costs: list[float]
    epsilons: list[float]
    gradient: np.ndarray
    status: str
    costate0: np.ndarray | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.costs) - 1

    @property
    def gradient_norm(self) -> float:
        return float(np.max(np.abs(self.gradient)))

    @property
    def converged(self) -> bool:
        if self.status == "gradient-tol":
            return True
        return self.status == "backtracking-exhausted" and self.gradient_norm < LOOSE_GRAD_TOL

    @property
    def cost(self) -> float:
        return self.costs[-1]

    @property
    def fidelity(self) -> float:
        lam = self.scenario.cost.energy_weight
        return float(0.5 * lam * self.control.energy() - self.cost)

    def history_frame(self) -> pd.DataFrame:
        eps = [np.nan] + list(self.epsilons)
        return pd.DataFrame({"iteration": np.arange(len(self.costs)), "cost": self.costs, "epsilon": eps})


def grape_optimize(
    scenario: Scenario,
    guess: ControlLaw,
    max_iters: int = 500,
    eps0: float = 1.0,
    grad_tol: float = GRAD_TOL,
) -> GrapeRun:
    """Gradient ascent u <- u + eps * grad with backtracking from eps0 (at most 30 halvings)."""
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    control = guess
    cost = grape_cost(scenario, control)
    if not np.isfinite(cost):
        raise GrapeDivergenceError(0, control.values)
    costs, epsilons = [cost], []
    status = "max-iters"
    pieces = fidelity_gradient(scenario, control)
    grad = pieces.coupling - scenario.cost.energy_weight * control.values

    for it in range(max_iters):
        if np.max(np.abs(grad)) < grad_tol:
            status = "gradient-tol"
            break
        eps = eps0
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            trial = ControlLaw(control.grid, control.values + eps * grad, control.bounds)
            trial_cost = grape_cost(scenario, trial)
            if not np.isfinite(trial_cost):
                raise GrapeDivergenceError(it + 1, trial.values)
            if trial_cost < cost:
                accepted = trial
                break
            eps *= 0.5
        if accepted is None:
            status = "backtracking-exhausted"
            break
        control, cost = accepted, trial_cost
        costs.append(cost)
        epsilons.append(eps)
        pieces = fidelity_gradient(scenario, control)
        grad = pieces.coupling - scenario.cost.energy_weight * control.values
        logger.debug(f"grape iteration {it + 1}: cost {cost:.12g}, eps {eps:.3g}, |g| {np.max(np.abs(grad)):.3e}")

    run = GrapeRun(scenario, control, costs, epsilons, grad, status, pieces.chi[0])
    logger.info(f"grape finished ({status}) after {run.iterations} iterations, fidelity {run.fidelity:.10f}")
    return run
