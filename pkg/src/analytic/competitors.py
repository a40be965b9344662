"""Numeric comparison of the spin syntheses against competing arc sequences.

Reported, not proved: each harness propagates the candidates exactly and tabulates
durations next to the endpoint error.
"""
from __future__ import annotations

import numpy as np
import pandas as pd
from loguru import logger

from src.analytic.spin import (
    NORTH_POLE,
    SOUTH_POLE,
    X_AXIS,
    SpinArc,
    SpinSynthesis,
    arc_generator,
    equator_times,
    propagate_synthesis,
    spin_omega,
    spin_p1,
    spin_p2,
)
from src.dynamics.exponential import expm
from src.pmp.shooting import STATUS_CONVERGED, newton_batch

GRID_POINTS = 24
NEWTON_TOL = 1e-12
SEED_RESIDUAL = 0.5


def bang_singular_bang_p1(delta: float) -> SpinSynthesis:
    """bang(-1) to (-d, sqrt(1-d^2), 0), the singular rotation through the equator, bang(+1) down."""
    if not 0 < delta <= 1:
        raise ValueError(f"the bang-singular-bang competitor needs 0 < delta <= 1, got {delta}")
    t1, _ = equator_times(delta)
    t_s = 2.0 * np.arccos(delta) / delta
    return SpinSynthesis(
        delta, "P1", (SpinArc("bang", -1, t1), SpinArc("singular", 0, t_s), SpinArc("bang", 1, t1))
    )


def _endpoint_error(synth: SpinSynthesis, target: np.ndarray) -> float:
    return float(np.linalg.norm(propagate_synthesis(synth)[-1] - target))


def compare_p1(deltas) -> pd.DataFrame:
    """Bang-bang against bang-singular-bang from the north to the south pole."""
    rows = []
    for delta in deltas:
        bb, _ = spin_p1(delta)
        bsb = bang_singular_bang_p1(delta)
        rows.append(
            {
                "delta": float(delta),
                "bang_bang": bb.total_duration,
                "bang_singular_bang": bsb.total_duration,
                "bang_bang_error": _endpoint_error(bb, SOUTH_POLE),
                "bang_singular_bang_error": _endpoint_error(bsb, SOUTH_POLE),
            }
        )
    df = pd.DataFrame(rows)
    df["winner"] = np.where(df["bang_bang"] <= df["bang_singular_bang"] + 1e-12, "bang-bang", "bang-singular-bang")
    return df


def _two_arc_endpoints(delta: float, sign: int, taus: np.ndarray) -> np.ndarray:
    a_first = arc_generator(delta, sign)
    a_second = arc_generator(delta, -sign)
    out = np.empty((len(taus), 3))
    for b, (t1, t2) in enumerate(taus):
        out[b] = expm(a_second * t2) @ (expm(a_first * t1) @ NORTH_POLE)
    return out


def two_arc_candidates(delta: float, grid_points: int = GRID_POINTS) -> pd.DataFrame:
    """Two-arc bang-bang transfers from the north pole to (1, 0, 0), each arc shorter than 2 pi / Omega.

    A duration grid seeds Newton on the (y, z) defect; converged candidates with x > 0
    are kept and deduplicated.
    """
    period = 2.0 * np.pi / spin_omega(delta)
    taus = np.linspace(0.0, period, grid_points + 1)[1:-1]
    rows = []
    for sign in (1, -1):
        seeds = []
        for t1 in taus:
            for t2 in taus:
                end = _two_arc_endpoints(delta, sign, np.array([[t1, t2]]))[0]
                residual = np.linalg.norm(end - X_AXIS)
                if residual < SEED_RESIDUAL:
                    seeds.append((t1, t2))
        if not seeds:
            continue

        def defect(X, sign=sign):
            with np.errstate(invalid="ignore"):
                end = _two_arc_endpoints(delta, sign, X)
            return end[:, 1:]

        X, _, _, status, _ = newton_batch(defect, np.array(seeds), NEWTON_TOL)
        for x, st in zip(X, status):
            if st != STATUS_CONVERGED or not np.all((x > 0) & (x < period)):
                continue
            end = _two_arc_endpoints(delta, sign, x[None])[0]
            if end[0] <= 0:
                continue
            if any(r["sign"] == sign and abs(r["tau1"] - x[0]) < 1e-8 and abs(r["tau2"] - x[1]) < 1e-8 for r in rows):
                continue
            rows.append(
                {
                    "sign": sign,
                    "tau1": float(x[0]),
                    "tau2": float(x[1]),
                    "total": float(x.sum()),
                    "error": float(np.linalg.norm(end - X_AXIS)),
                }
            )
    return pd.DataFrame(rows, columns=["sign", "tau1", "tau2", "total", "error"])


def compare_p2(delta: float, grid_points: int = GRID_POINTS) -> pd.DataFrame:
    """Bang-singular synthesis against the two-arc bang-bang candidates, fastest first."""
    synth = spin_p2(delta)
    best = {
        "candidate": "bang-singular",
        "sign": 1,
        "tau1": synth.arcs[0].duration,
        "tau2": synth.arcs[1].duration,
        "total": synth.total_duration,
        "error": _endpoint_error(synth, X_AXIS),
    }
    others = two_arc_candidates(delta, grid_points)
    others.insert(0, "candidate", "bang-bang")
    df = pd.concat([pd.DataFrame([best]), others], ignore_index=True)
    df = df.sort_values(["total", "candidate"], kind="mergesort").reset_index(drop=True)
    logger.info(
        f"P2 at delta={delta:g}: bang-singular {synth.total_duration:.10f}, "
        f"{len(others)} bang-bang candidates, fastest is {df.loc[0, 'candidate']}"
    )
    return df
