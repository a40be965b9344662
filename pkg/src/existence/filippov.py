from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from src.domain.dto import ControlBounds, Representation
from src.domain.errors import ScenarioValidationError
from src.domain.models import Scenario

CONVEX_RUNNING = {
    "energy": "running cost sum u_j^2 is convex in u",
    "quadratic": "running cost sum w_j u_j^2 with w_j > 0 is convex in u",
    "time": "running cost is the constant 1",
    "fidelity": "running cost is convex in u and the terminal cost adds a term affine in u",
}


@dataclass(frozen=True)
class FilippovReport:
    u_compact: bool
    u_compact_reason: str
    velocity_set_convex: bool
    convexity_witness: str
    cost_rule: str
    solutions_global: bool
    solutions_reason: str

    @property
    def verdict(self) -> str:
        ok = self.u_compact and self.velocity_set_convex and self.solutions_global
        return "exists" if ok else "cannot-conclude"

    def lines(self) -> list[str]:
        return [
            f"U compact: {self.u_compact} ({self.u_compact_reason})",
            f"velocity set convex: {self.velocity_set_convex} ({self.convexity_witness}; {self.cost_rule})",
            f"solutions global: {self.solutions_global} ({self.solutions_reason})",
            f"verdict: {self.verdict}",
        ]


def _missing_midpoint(bounds: ControlBounds) -> tuple[np.ndarray, np.ndarray]:
    """Pair of admissible controls whose midpoint is not admissible, closest pairs first."""
    points = np.unique(bounds.values, axis=0)
    pairs = sorted(
        combinations(range(len(points)), 2),
        key=lambda ij: float(np.linalg.norm(points[ij[0]] - points[ij[1]])),
    )
    for i, j in pairs:
        if not bounds.contains(0.5 * (points[i] + points[j])):
            return points[i], points[j]
    # the closest pair always qualifies
    return points[0], points[-1]


def check_filippov(scenario: Scenario) -> FilippovReport:
    if scenario.is_lindblad:
        raise ScenarioValidationError("bilinear-system", "the existence test needs a bilinear system")
    bounds = scenario.bounds
    system = scenario.bilinear

    if bounds.kind == "unbounded":
        compact, why = False, "U = R^m is unbounded"
    elif bounds.kind == "box":
        compact = bounds.is_compact
        why = "closed finite intervals" if compact else "an interval end point is infinite"
    elif bounds.kind == "ball":
        compact, why = True, f"closed ball of radius {bounds.radius:g}"
    else:
        compact, why = True, f"finite set of {len(bounds.values)} controls"

    # control-affine dynamics: F(q) is the affine image of U, so it is convex iff U is
    if bounds.kind == "discrete" and not bounds.is_convex:
        a, b = _missing_midpoint(bounds)
        convex = False
        witness = f"midpoint of u={a.tolist()} and u={b.tolist()} is not admissible"
    else:
        convex = True
        witness = f"U is convex ({bounds.kind})"
    cost_rule = CONVEX_RUNNING[scenario.cost.kind]

    if system.representation is Representation.REAL_LINEAR:
        global_, global_why = True, "linear vector field, solutions never blow up"
    else:
        global_, global_why = True, "skew/anti-Hermitian generators keep the state on a compact sphere"

    return FilippovReport(compact, why, convex, witness, cost_rule, global_, global_why)
