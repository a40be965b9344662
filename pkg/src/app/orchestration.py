from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from src.algebra.lie import check_controllability
from src.analytic.competitors import compare_p1, compare_p2
from src.analytic.grushin import grushin_optimal
from src.analytic.spin import (
    spin_p1,
    spin_p2,
    synthesis_extremal,
    synthesis_frame,
)
from src.analytic.warmup import warmup_angle, warmup_energy_optimal, warmup_time_optimal
from src.domain.dto import ControlLaw, StateVector, TimeGrid
from src.domain.errors import DimensionMismatchError
from src.domain.models import Scenario
from src.dynamics.lindblad import propagate_lindblad, unvectorize
from src.dynamics.propagator import propagate
from src.existence.chattering import chattering_sweep
from src.existence.filippov import FilippovReport, check_filippov
from src.grape.optimizer import grape_optimize
from src.infra.persistence import OutputWriter
from src.pmp.arcs import classify_arcs, summarize_arcs
from src.pmp.chart import SphericalChart
from src.pmp.extremal import Extremal
from src.pmp.rules import rule_for_scenario
from src.pmp.shooting import ShootingProblem, group_families, multi_start, shoot

SYNTHESIS_PROBLEMS = ("grushin", "spin-p1", "spin-p2", "warmup")
P1_DELTAS = (0.1, 0.25, 0.5, 0.75, 1.0)


@dataclass
class WorkflowResult:
    summary: dict
    converged: bool = True
    notes: list[str] = field(default_factory=list)


def load_guess(scenario: Scenario, guess: str | float | None, default: float = 0.1) -> ControlLaw:
    """Constant guess, or a CSV with columns u_1..u_m (one row per interval)."""
    grid = scenario.grid()
    m = scenario.bilinear.n_controls
    if guess is None:
        return ControlLaw.constant(grid, np.full(m, default))
    try:
        value = float(guess)
    except (TypeError, ValueError):
        df = pd.read_csv(Path(str(guess)))
        cols = [f"u_{j + 1}" for j in range(m)]
        missing = [c for c in cols if c not in df.columns]
        if missing:
            raise DimensionMismatchError(f"guess file lacks columns {missing}")
        values = df[cols].to_numpy(dtype=float).T
        if values.shape[1] != grid.n_steps:
            grid = TimeGrid(0.0, scenario.time.horizon, values.shape[1])
        return ControlLaw(grid, values)
    return ControlLaw.constant(grid, np.full(m, value))


def filippov_gate(scenario: Scenario) -> FilippovReport:
    report = check_filippov(scenario)
    for line in report.lines():
        logger.info(f"existence: {line}")
    return report


def run_check(scenario: Scenario, writer: OutputWriter, n_samples: int, seed: int, mode: str | None = None):
    report = check_controllability(
        scenario.bilinear, mode=mode, n_samples=n_samples, seed=seed, rank_tol=scenario.tolerances.rank
    )
    summary = {
        "scenario": scenario.name,
        "mode": report.mode,
        "dimension": report.dimension,
        "algebra": report.algebra.label(),
        "manifold_dimension": report.manifold_dimension,
        "controllable": report.controllable,
        "verdict": report.verdict,
        "min_rank": int(report.tangent_ranks.min()) if report.tangent_ranks.size else 0,
        "notes": report.notes,
    }
    writer.json("controllability.json", summary)
    logger.info(f"controllability of {scenario.name}: {report.verdict}")
    return WorkflowResult(summary)


def run_exists(scenario: Scenario, writer: OutputWriter):
    report = filippov_gate(scenario)
    summary = {
        "scenario": scenario.name,
        "u_compact": report.u_compact,
        "u_compact_reason": report.u_compact_reason,
        "velocity_set_convex": report.velocity_set_convex,
        "convexity_witness": report.convexity_witness,
        "cost_rule": report.cost_rule,
        "solutions_global": report.solutions_global,
        "verdict": report.verdict,
    }
    writer.json("existence.json", summary)
    return WorkflowResult(summary)


def _extremal_frames(ext: Extremal) -> pd.DataFrame:
    df = ext.trajectory.to_frame()
    p = ext.costate.entries
    for i in range(p.shape[1]):
        df[f"re(p_{i + 1})"] = p[:, i].real
        if np.iscomplexobj(p):
            df[f"im(p_{i + 1})"] = p[:, i].imag
    u = np.column_stack([ext.control.values, ext.control.values[:, -1:]])
    for j in range(u.shape[0]):
        df[f"u_{j + 1}"] = u[j]
    df["hamiltonian"] = ext.hamiltonian_trace
    phi = np.asarray(ext.switching_trace)
    for j in range(phi.shape[1]):
        df[f"phi_{j + 1}"] = phi[:, j]
    return df


def _chart_covector(scenario: Scenario, p_in) -> dict | None:
    q = np.asarray(scenario.initial_state.entries)
    if q.shape != (3,) or np.iscomplexobj(q) or not scenario.bilinear.on_sphere:
        return None
    try:
        p_theta, p_phi = SphericalChart().covector_to_chart(q, np.real(p_in))
    except ValueError:
        return None
    return {"p_theta": p_theta, "p_phi": p_phi}


def run_shoot(
    scenario: Scenario,
    writer: OutputWriter,
    starts: int,
    seed: int,
    workers: int = 1,
    abnormal: bool = False,
    junction: str = "switch",
    max_iter: int = 50,
    t_range: tuple[float, float] | None = None,
):
    rule = rule_for_scenario(scenario, abnormal=abnormal, junction=junction)
    problem = ShootingProblem(scenario, rule)
    results = multi_start(problem, starts, seed, t_range, workers, max_iter)
    families = group_families(results)

    runs = pd.DataFrame(
        [
            {"start": r.start, "status": r.status, "residual": r.residual, "iterations": r.iterations,
             "T": r.T, "cost": r.cost}
            for r in sorted(results, key=lambda r: r.start)
        ]
    )
    writer.csv("starts.csv", runs)

    fam_out = []
    for i, fam in enumerate(families):
        rep = fam.representative
        ext = rep.extremal
        entry = {
            "T": fam.T,
            "cost": fam.cost,
            "members": len(fam.members),
            "p_in": rep.p_in,
            "endpoint": ext.trajectory.final,
            "hamiltonian_spread": ext.hamiltonian_spread(),
        }
        chart = _chart_covector(scenario, rep.p_in)
        if chart is not None:
            entry.update(chart)
        if ext.switching_trace.shape[1] == 1 and rule.label == "bang":
            labels = classify_arcs(ext)
            entry["arcs"] = summarize_arcs(labels, ext.grid)
            entry["switch_times"] = list(ext.switch_times)
        fam_out.append(entry)
        writer.csv(f"family_{i}.csv", _extremal_frames(ext))

    summary = {
        "scenario": scenario.name,
        "starts": starts,
        "seed": seed,
        "converged": int(sum(r.converged for r in results)),
        "families": fam_out,
    }
    writer.json("shoot.json", summary)
    if families:
        best = families[0]
        logger.info(f"best family: T={best.T:.10f}, cost={best.cost:.10f} ({len(best.members)} members)")
    return WorkflowResult(summary, converged=bool(families))


def run_grape(
    scenario: Scenario,
    writer: OutputWriter,
    guess: str | float | None = None,
    max_iters: int = 500,
    eps0: float = 1.0,
    grad_tol: float = 1e-8,
    polish: bool = False,
):
    control = load_guess(scenario, guess)
    run = grape_optimize(scenario, control, max_iters=max_iters, eps0=eps0, grad_tol=grad_tol)
    writer.csv("grape_history.csv", run.history_frame())
    writer.csv("grape_control.csv", run.control.to_frame())
    summary = {
        "scenario": scenario.name,
        "status": run.status,
        "iterations": run.iterations,
        "cost": run.cost,
        "fidelity": run.fidelity,
        "gradient_norm": run.gradient_norm,
        "converged": run.converged,
    }
    converged = run.converged
    if polish and run.costate0 is not None:
        # the backward costate at t = 0 seeds Newton on the same boundary value problem
        problem = ShootingProblem(scenario, rule_for_scenario(scenario))
        polished = shoot(problem, run.costate0)
        summary["polish"] = {
            "status": polished.status,
            "residual": polished.residual,
            "cost": polished.cost,
            "p_in": polished.p_in,
        }
        if polished.extremal is not None:
            writer.csv("polished_extremal.csv", _extremal_frames(polished.extremal))
    writer.json("grape.json", summary)
    return WorkflowResult(summary, converged=converged)


def _spin_payload(synth, ext: Extremal) -> dict:
    return {
        "delta": synth.delta,
        "omega": synth.omega,
        "total_duration": synth.total_duration,
        "arcs": synth.arc_list(),
        "switch_times": synth.switch_times,
        "extremal_switch_times": list(ext.switch_times),
        "extremal_junction_times": list(ext.junction_times),
        "extremal_singular_intervals": [list(iv) for iv in ext.singular_intervals],
        "endpoint": ext.trajectory.final,
        "hamiltonian_spread": ext.hamiltonian_spread(),
    }


def run_synthesize(problem: str, writer: OutputWriter, delta: float = 0.5, samples: int = 400, T: float = 1.0):
    if problem not in SYNTHESIS_PROBLEMS:
        raise ValueError(f"unknown synthesis problem {problem!r}; choose from {SYNTHESIS_PROBLEMS}")
    summary: dict = {"problem": problem}

    if problem == "grushin":
        sols = []
        for i, sol in enumerate(grushin_optimal()):
            t = np.linspace(0.0, sol.T, samples + 1)
            x, u = sol.state(t), sol.controls(t)
            writer.csv(
                f"grushin_{i}.csv",
                pd.DataFrame({"t": t, "x1": x[:, 0], "x2": x[:, 1], "x3": x[:, 2], "u_1": u[:, 0], "u_2": u[:, 1]}),
            )
            sols.append(
                {"a": sol.a, "p_theta0": sol.p_theta0, "n1": sol.n1, "n2": sol.n2, "T": sol.T,
                 "cost": sol.cost, "endpoint": sol.endpoint}
            )
        summary["solutions"] = sols

    elif problem == "spin-p1":
        main, variant = spin_p1(delta)
        summary["syntheses"] = []
        for name, synth in (("main", main), ("variant", variant)):
            writer.csv(f"spin_p1_{name}.csv", synthesis_frame(synth, samples))
            summary["syntheses"].append({"name": name, **_spin_payload(synth, synthesis_extremal(synth))})
        writer.csv("spin_p1_competitors.csv", compare_p1(sorted(set(P1_DELTAS) | {abs(delta)} - {0.0})))

    elif problem == "spin-p2":
        synth = spin_p2(delta)
        writer.csv("spin_p2.csv", synthesis_frame(synth, samples))
        summary.update(_spin_payload(synth, synthesis_extremal(synth)))
        table = compare_p2(delta)
        writer.csv("spin_p2_competitors.csv", table)
        summary["fastest"] = table.loc[0, "candidate"]

    else:
        u = warmup_energy_optimal(T)
        t = np.linspace(0.0, T, samples + 1)
        writer.csv("warmup.csv", pd.DataFrame({"t": t, "theta": [warmup_angle(u, s) for s in t], "u": u}))
        summary.update({"T": T, "energy_optimal_control": u, "time_optimal_duration": warmup_time_optimal(1.0)})

    writer.json("synthesis.json", summary)
    logger.info(f"synthesis {problem} written to {writer.out_dir}")
    return WorkflowResult(summary)


def run_chattering(writer: OutputWriter, max_switches: int, T: float = 1.0, workers: int = 1):
    df = chattering_sweep(max_switches, T, workers)
    writer.csv("chattering.csv", df)
    summary = {"T": T, "max_switches": max_switches, "d_min": float(df["d"].min()), "d_last": float(df["d"].iloc[-1])}
    writer.json("chattering.json", summary)
    return WorkflowResult(summary)


def run_propagate(scenario: Scenario, writer: OutputWriter, guess: str | float | None = None):
    control = load_guess(scenario, guess, default=0.0)
    if scenario.is_lindblad:
        n = scenario.bilinear.dimension
        traj = propagate_lindblad(scenario.system, control, scenario.initial_density())
        rows = {"t": traj.grid.nodes}
        rhos = [unvectorize(s, n) for s in traj.states]
        for k in range(n):
            rows[f"rho_{k + 1}{k + 1}"] = [float(r[k, k].real) for r in rhos]
        rows["trace"] = [float(np.trace(r).real) for r in rhos]
        writer.csv("populations.csv", pd.DataFrame(rows))
        final = rhos[-1]
        summary = {"scenario": scenario.name, "final_density": final, "trace": float(np.trace(final).real)}
    else:
        initial = StateVector(
            scenario.initial_state.entries, scenario.representation, scenario.initial_state.on_sphere
        )
        traj = propagate(scenario.bilinear, control, initial)
        writer.csv("trajectory.csv", traj.to_frame())
        summary = {
            "scenario": scenario.name,
            "final_state": traj.final,
            "norm_drift": float(np.max(np.abs(traj.norms() - 1.0))) if traj.on_sphere else None,
        }
    writer.csv("control.csv", control.to_frame())
    writer.json("propagate.json", summary)
    return WorkflowResult(summary)
