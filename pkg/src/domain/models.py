from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from src.domain.dto import ControlBounds, Representation, StateVector, TimeGrid
from src.domain.errors import ScenarioValidationError

GENERATOR_TOL = 1e-12
BASIS_TRACE_TOL = 1e-12
BASIS_GRAM_TOL = 1e-10
POSITIVITY_TOL = 1e-10

TARGET_KINDS = ("point", "orbit", "free")
COST_KINDS = ("energy", "time", "fidelity", "quadratic")
TIME_MODES = ("fixed", "free")


def _equal(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return a is not None and b is not None and np.array_equal(a, b)
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(_equal(x, y) for x, y in zip(a, b))
    return a == b


class _FieldEq:
    """Field-by-field equality where numeric arrays must match bit for bit."""

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return all(_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BilinearSystem(_FieldEq):
    representation: Representation
    drift: np.ndarray
    controls: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        rep = Representation(self.representation)
        drift = _readonly(np.array(self.drift, dtype=rep.dtype))
        controls = tuple(_readonly(np.array(c, dtype=rep.dtype)) for c in self.controls)
        n = drift.shape[0]
        for name, mat in [("drift", drift)] + [(f"control {j + 1}", c) for j, c in enumerate(controls)]:
            if mat.shape != (n, n):
                raise ScenarioValidationError("square-generators", f"{name} has shape {mat.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(mat)):
                raise ScenarioValidationError("finite-generators", f"{name} has non-finite entries")
            if rep is Representation.COMPLEX_UNITARY:
                dev = np.max(np.abs(mat - mat.conj().T))
                if dev > GENERATOR_TOL:
                    raise ScenarioValidationError("hermitian", f"{name} is not Hermitian (deviation {dev:.3e})")
            elif rep is Representation.REAL_ORTHOGONAL:
                dev = np.max(np.abs(mat + mat.T))
                if dev > GENERATOR_TOL:
                    raise ScenarioValidationError(
                        "skew-symmetric", f"{name} is not skew-symmetric (deviation {dev:.3e})"
                    )
        object.__setattr__(self, "representation", rep)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "controls", controls)

    @property
    def dimension(self) -> int:
        return self.drift.shape[0]

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def on_sphere(self) -> bool:
        return self.representation is not Representation.REAL_LINEAR

    def flow_generators(self) -> tuple[np.ndarray, np.ndarray]:
        """Drift and stacked control generators of q' = (G0 + sum u_j G_j) q."""
        if self.representation.is_complex:
            g0 = -1j * self.drift
            gc = -1j * np.array(self.controls, dtype=complex).reshape(-1, *self.drift.shape)
        else:
            g0 = np.array(self.drift)
            gc = np.array(self.controls, dtype=float).reshape(-1, *self.drift.shape)
        return g0, gc

    def generator(self, u) -> np.ndarray:
        g0, gc = self.flow_generators()
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.size != self.n_controls:
            raise ValueError(f"expected {self.n_controls} control values, got {u.size}")
        if self.n_controls == 0:
            return g0
        return g0 + np.tensordot(u, gc, axes=1)


def traceless_basis(n: int) -> tuple[np.ndarray, ...]:
    """Orthonormal trace-zero basis of n x n matrices: transitions |j><k| then diagonal ones."""
    out = []
    for j in range(n):
        for k in range(n):
            if j != k:
                m = np.zeros((n, n), dtype=complex)
                m[j, k] = 1.0
                out.append(m)
    for level in range(1, n):
        d = np.zeros(n)
        d[:level] = 1.0
        d[level] = -level
        out.append(np.diag(d / np.sqrt(level * (level + 1))).astype(complex))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class LindbladModel(_FieldEq):
    hamiltonian: BilinearSystem
    basis: tuple[np.ndarray, ...]
    coefficients: np.ndarray

    def __post_init__(self):
        if self.hamiltonian.representation is not Representation.COMPLEX_UNITARY:
            raise ScenarioValidationError("complex-hamiltonian", "Lindblad models need a complex-unitary Hamiltonian")
        n = self.hamiltonian.dimension
        basis = tuple(_readonly(np.array(v, dtype=complex)) for v in self.basis)
        if len(basis) != n * n - 1:
            raise ScenarioValidationError("basis-size", f"expected {n * n - 1} basis matrices, got {len(basis)}")
        for k, v in enumerate(basis):
            if v.shape != (n, n):
                raise ScenarioValidationError("basis-shape", f"V_{k + 1} has shape {v.shape}")
            if abs(np.trace(v)) > BASIS_TRACE_TOL:
                raise ScenarioValidationError("traceless-basis", f"V_{k + 1} has trace {np.trace(v)}")
        stacked = np.array(basis).reshape(len(basis), -1)
        gram = stacked.conj() @ stacked.T
        dev = np.max(np.abs(gram - np.eye(len(basis))))
        if dev > BASIS_GRAM_TOL:
            raise ScenarioValidationError("orthonormal-basis", f"Hilbert-Schmidt Gram deviates by {dev:.3e}")
        a = _readonly(np.array(self.coefficients, dtype=complex))
        if a.shape != (len(basis), len(basis)):
            raise ScenarioValidationError("coefficient-shape", f"coefficient matrix has shape {a.shape}")
        if np.max(np.abs(a - a.conj().T)) > GENERATOR_TOL:
            raise ScenarioValidationError("hermitian-coefficients", "coefficient matrix is not Hermitian")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "coefficients", a)

    @property
    def dimension(self) -> int:
        return self.hamiltonian.dimension

    @property
    def n_controls(self) -> int:
        return self.hamiltonian.n_controls


def validate_lindblad_positivity(model: LindbladModel) -> tuple[bool, float]:
    """Complete positivity test: the coefficient matrix must be positive semi-definite."""
    min_eig = float(np.linalg.eigvalsh(model.coefficients).min())
    return min_eig >= -POSITIVITY_TOL, min_eig


@dataclass(frozen=True, eq=False)
class Target(_FieldEq):
    kind: str
    state: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ScenarioValidationError("target-kind", f"unknown target kind {self.kind!r}")
        if self.state is None:
            raise ScenarioValidationError("target-state", f"target {self.kind!r} needs a reference state")
        state = np.array(self.state)
        dtype = complex if np.iscomplexobj(state) else float
        object.__setattr__(self, "state", _readonly(np.array(state, dtype=dtype)))


@dataclass(frozen=True, eq=False)
class Cost(_FieldEq):
    kind: str
    weights: np.ndarray | None = None
    energy_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ScenarioValidationError("cost-kind", f"unknown cost kind {self.kind!r}")
        if self.kind == "quadratic":
            if self.weights is None:
                raise ScenarioValidationError("quadratic-weights", "quadratic cost needs per-channel weights")
            w = _readonly(np.array(self.weights, dtype=float))
            if np.any(w <= 0):
                raise ScenarioValidationError("quadratic-weights", "weights must be positive")
            object.__setattr__(self, "weights", w)
        if not self.energy_weight > 0:
            raise ScenarioValidationError("energy-weight", "energy weight must be positive")

    @property
    def has_terminal(self) -> bool:
        return self.kind == "fidelity"

    @property
    def default_p0(self) -> float:
        return -0.5 if self.kind in {"energy", "quadratic"} else -1.0

    def channel_weights(self, m: int) -> np.ndarray | None:
        """w_j with running cost sum_j w_j u_j^2; None for the time cost."""
        if self.kind == "time":
            return None
        if self.kind == "energy":
            return np.ones(m)
        if self.kind == "fidelity":
            return np.full(m, 0.5 * self.energy_weight)
        return np.array(self.weights)

    def running(self, u) -> float:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        w = self.channel_weights(u.size)
        return 1.0 if w is None else float(np.sum(w * u**2))


@dataclass(frozen=True)
class TimeSpec:
    mode: str = "fixed"
    horizon: float = 1.0  # fixed T, or initial guess when free
    steps: int = 200

    def __post_init__(self):
        if self.mode not in TIME_MODES:
            raise ScenarioValidationError("time-mode", f"unknown time mode {self.mode!r}")
        if not self.horizon > 0:
            raise ScenarioValidationError("horizon", "horizon must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ScenarioValidationError("steps", "steps must be a positive integer")

    @property
    def free(self) -> bool:
        return self.mode == "free"


@dataclass(frozen=True)
class Tolerances:
    integration: float = 1e-9
    shooting: float = 1e-9
    rank: float = 1e-10


@dataclass(frozen=True, eq=False)
class Scenario(_FieldEq):
    name: str
    system: BilinearSystem | LindbladModel
    initial_state: StateVector
    target: Target
    cost: Cost
    time: TimeSpec = field(default_factory=TimeSpec)
    bounds: ControlBounds = field(default_factory=ControlBounds)
    tolerances: Tolerances = field(default_factory=Tolerances)
    method: str = "shooting"

    def __post_init__(self):
        if self.target.kind == "free" and not self.cost.has_terminal:
            raise ScenarioValidationError(
                "terminal-cost", "a free target needs a terminal cost term (fidelity)"
            )
        bil = self.bilinear
        n = self.dimension
        if self.initial_state.dimension != n:
            raise ScenarioValidationError(
                "state-dimension", f"initial state has {self.initial_state.dimension} entries, expected {n}"
            )
        if self.initial_state.representation is not bil.representation:
            raise ScenarioValidationError("state-representation", "initial state representation differs from system")
        if not self.is_lindblad and self.target.state.shape != (n,):
            raise ScenarioValidationError("target-dimension", f"target state must have {n} entries")
        if not self.is_lindblad and bil.on_sphere and self.target.kind != "free":
            if abs(np.linalg.norm(self.target.state) - 1.0) > 1e-9:
                raise ScenarioValidationError("target-sphere", "target state must have unit norm")
        m = bil.n_controls
        expected = self.bounds.channels()
        if expected is not None and expected != m:
            raise ScenarioValidationError("bounds-channels", f"bounds describe {expected} channels, system has {m}")
        if self.cost.kind == "quadratic" and self.cost.weights.shape != (m,):
            raise ScenarioValidationError("quadratic-weights", f"need {m} weights")

    @property
    def is_lindblad(self) -> bool:
        return isinstance(self.system, LindbladModel)

    @property
    def bilinear(self) -> BilinearSystem:
        return self.system.hamiltonian if self.is_lindblad else self.system

    @property
    def dimension(self) -> int:
        n = self.bilinear.dimension
        return n * n if self.is_lindblad else n

    @property
    def representation(self) -> Representation:
        return self.bilinear.representation

    def grid(self, horizon: float | None = None, steps: int | None = None) -> TimeGrid:
        return TimeGrid(0.0, horizon or self.time.horizon, steps or self.time.steps)

    def velocity(self, q, u) -> np.ndarray:
        return self.bilinear.generator(u) @ np.asarray(q)

    def running_cost(self, q, u) -> float:
        return self.cost.running(u)

    @staticmethod
    def pairing(p, v) -> float:
        # real duality pairing; for complex vectors the real part of <p|v>
        return float(np.real(np.vdot(p, v)))

    def initial_density(self) -> np.ndarray:
        n = self.bilinear.dimension
        return np.asarray(self.initial_state.entries).reshape(n, n, order="F")
