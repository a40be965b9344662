from __future__ import annotations

from itertools import groupby

import numpy as np

from src.domain.errors import SingularArcError
from src.pmp.extremal import PHI_TOL, Extremal

SINGULAR_WINDOW = 3


def classify_arcs(extremal: Extremal, phi_tol: float = PHI_TOL, window: int = SINGULAR_WINDOW) -> list[str]:
    """Per-interval labels bang(+1) | bang(-1) | singular | switch from the stored phi trace."""
    phi = np.asarray(extremal.switching_trace)
    if phi.ndim != 2 or phi.shape[1] != 1:
        raise ValueError("arc classification needs a single switching function")
    phi = phi[:, 0]
    n_nodes = len(phi)
    small = np.abs(phi) <= phi_tol
    singular_nodes = np.zeros(n_nodes, dtype=bool)

    k = 0
    while k < n_nodes:
        if not small[k]:
            k += 1
            continue
        end = k
        while end + 1 < n_nodes and small[end + 1]:
            end += 1
        if end - k + 1 >= window:
            singular_nodes[k : end + 1] = True
            _check_locus(extremal, k, end, phi_tol)
        k = end + 1

    # left sign retained through isolated zeros
    signs = np.zeros(n_nodes)
    current = 0.0
    for i in range(n_nodes):
        if not small[i]:
            current = np.sign(phi[i])
        signs[i] = current
    if signs[0] == 0:
        nonzero = signs[signs != 0]
        signs[signs == 0] = nonzero[0] if nonzero.size else 1.0

    labels = []
    for i in range(n_nodes - 1):
        if singular_nodes[i] and singular_nodes[i + 1]:
            labels.append("singular")
        elif signs[i] != signs[i + 1] and not (singular_nodes[i] or singular_nodes[i + 1]):
            labels.append("switch")
        else:
            side = signs[i + 1] if singular_nodes[i] else signs[i]
            labels.append("bang(+1)" if side > 0 else "bang(-1)")
    return labels


def _check_locus(extremal: Extremal, start: int, end: int, phi_tol: float) -> None:
    states = extremal.trajectory.states
    if states.shape[1] != 3 or np.iscomplexobj(states):
        return
    # the spin singular arcs live on the equator z = 0
    z = np.abs(states[start : end + 1, 2])
    worst = int(np.argmax(z))
    if z[worst] > 10.0 * phi_tol:
        t = extremal.grid.node(start + worst)
        raise SingularArcError(t, float(z[worst]))


def summarize_arcs(labels: list[str], grid) -> list[dict]:
    """Collapse per-interval labels into (type, t_start, t_end) runs."""
    out = []
    k = 0
    for label, run in groupby(labels):
        size = len(list(run))
        out.append({"type": label, "t_start": grid.node(k), "t_end": grid.node(k + size)})
        k += size
    return out


def arc_sequence(labels: list[str]) -> list[str]:
    return [label for label, _ in groupby(labels)]
