from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from src.domain.dto import Representation
from src.domain.models import BilinearSystem

DEFAULT_SAMPLES = 50
DEFAULT_SEED = 20240101


def _realify(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    return np.concatenate([m.real.ravel(), m.imag.ravel()])


def _commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


@dataclass(frozen=True, eq=False)
class LieAlgebraBasis:
    generators: tuple[np.ndarray, ...]
    basis: np.ndarray  # d × n × n, orthonormal for Re tr(A^+ B)
    n: int

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def _rows(self) -> np.ndarray:
        return np.array([_realify(b) for b in self.basis]).reshape(self.dimension, -1)

    def projector(self) -> np.ndarray:
        rows = self._rows()
        return rows.T @ rows

    def residual(self, m: np.ndarray) -> float:
        """Norm of the component of m outside the span."""
        v = _realify(m)
        if self.dimension == 0:
            return float(np.linalg.norm(v))
        rows = self._rows()
        return float(np.linalg.norm(v - rows.T @ (rows @ v)))

    def is_traceless_antihermitian(self, tol: float = 1e-12) -> bool:
        return all(
            abs(np.trace(g)) <= tol and np.max(np.abs(g + g.conj().T)) <= tol for g in self.generators
        )

    def label(self) -> str:
        if self.is_traceless_antihermitian() and self.dimension == self.n * self.n - 1:
            return f"su({self.n})"
        real_skew = all(
            not np.any(np.imag(g)) and np.max(np.abs(g + g.T)) <= 1e-12 for g in self.generators
        )
        if real_skew and self.dimension == self.n * (self.n - 1) // 2:
            return f"so({self.n})"
        return f"dim {self.dimension}"


def lie_closure(generators, rank_tol: float = 1e-10) -> LieAlgebraBasis:
    gens = tuple(np.asarray(g) for g in generators)
    if not gens:
        raise ValueError("lie_closure needs at least one generator")
    n = gens[0].shape[0]
    if any(g.shape != (n, n) for g in gens):
        raise ValueError("all generators must share one square shape")
    complex_ = any(np.iscomplexobj(g) for g in gens)
    dtype = complex if complex_ else float
    cap = n * n

    rows: list[np.ndarray] = []
    mats: list[np.ndarray] = []

    def add(m: np.ndarray) -> bool:
        v = _realify(m)
        norm = np.linalg.norm(v)
        if norm <= rank_tol:
            return False
        v = v / norm
        for _ in range(2):  # re-orthogonalize
            for r in rows:
                v = v - (r @ v) * r
        rest = np.linalg.norm(v)
        if rest <= rank_tol:
            return False
        v = v / rest
        rows.append(v)
        half = n * n
        mat = v[:half].reshape(n, n)
        if complex_:
            mat = mat + 1j * v[half:].reshape(n, n)
        mats.append(mat.astype(dtype))
        return True

    for g in gens:
        if len(mats) >= cap:
            break
        add(g)

    k = 0
    while k < len(mats) and len(mats) < cap:
        for i in range(k):
            if len(mats) >= cap:
                break
            add(_commutator(mats[i], mats[k]))
        k += 1

    logger.debug(f"lie closure of {len(gens)} generators: dimension {len(mats)}")
    basis = np.array(mats, dtype=dtype).reshape(len(mats), n, n)
    return LieAlgebraBasis(gens, basis, n)


@dataclass
class ControllabilityReport:
    mode: str
    algebra: LieAlgebraBasis
    manifold_dimension: int
    drift_recurrent: bool
    tangent_ranks: np.ndarray
    min_singular_values: np.ndarray
    controllable: bool
    notes: list[str] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.algebra.dimension

    @property
    def verdict(self) -> str:
        label = self.algebra.label()
        return f"{label}, controllable" if self.controllable else f"{label}, not controllable"


def _sample_points(system: BilinearSystem, n_samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = system.dimension
    pts = rng.standard_normal((n_samples, n))
    if system.representation.is_complex:
        pts = pts + 1j * rng.standard_normal((n_samples, n))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def manifold_dimension(system: BilinearSystem) -> int:
    n = system.dimension
    if system.representation is Representation.COMPLEX_UNITARY:
        return 2 * n - 1
    if system.representation is Representation.REAL_ORTHOGONAL:
        return n - 1
    return n


def check_controllability(
    system: BilinearSystem,
    mode: str | None = None,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED,
    rank_tol: float = 1e-10,
) -> ControllabilityReport:
    g0, gc = system.flow_generators()
    has_drift = bool(np.any(g0 != 0))
    mode = mode or ("drifted" if has_drift else "driftless")
    if mode not in {"drifted", "driftless"}:
        raise ValueError(f"unknown controllability mode {mode!r}")

    gens = list(gc)
    if mode == "drifted" and has_drift:
        gens = [g0] + gens
    dim_m = manifold_dimension(system)
    notes: list[str] = []
    # skew and anti-Hermitian drifts generate periodic, hence recurrent, flows
    recurrent = system.representation is not Representation.REAL_LINEAR
    if not recurrent:
        notes.append("state space R^n is not compact; criterion not applicable")

    if not gens:
        empty = LieAlgebraBasis((), np.zeros((0, system.dimension, system.dimension)), system.dimension)
        zeros = np.zeros(n_samples)
        return ControllabilityReport(mode, empty, dim_m, recurrent, zeros.astype(int), zeros, False, notes)

    algebra = lie_closure(gens, rank_tol)
    points = _sample_points(system, n_samples, seed)
    ranks = np.empty(n_samples, dtype=int)
    min_sv = np.empty(n_samples)
    for i, q in enumerate(points):
        tangent = np.array([np.concatenate([(b @ q).real, (b @ q).imag]) for b in algebra.basis])
        sv = np.linalg.svd(tangent, compute_uv=False)
        top = sv[0] if sv.size else 0.0
        ranks[i] = int(np.sum(sv > rank_tol * max(top, 1e-300)))
        min_sv[i] = sv[dim_m - 1] if sv.size >= dim_m else 0.0

    full = bool(np.all(ranks >= dim_m))
    if mode == "driftless":
        notes.append("driftless criterion assumes U = R^m")
    controllable = full and recurrent
    logger.info(
        f"controllability ({mode}): algebra {algebra.label()}, min tangent rank {ranks.min()} of {dim_m}"
    )
    return ControllabilityReport(mode, algebra, dim_m, recurrent, ranks, min_sv, controllable, notes)
