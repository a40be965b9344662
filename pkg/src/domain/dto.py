from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import pandas as pd

SPHERE_TOL = 1e-9
BOUNDS_TOL = 1e-12


class Representation(str, Enum):
    COMPLEX_UNITARY = "complex-unitary"
    REAL_ORTHOGONAL = "real-orthogonal"
    REAL_LINEAR = "real-linear"  # non-skew real systems on R^n (chattering example)

    @property
    def is_complex(self) -> bool:
        return self is Representation.COMPLEX_UNITARY

    @property
    def dtype(self):
        return complex if self.is_complex else float


def _frozen_array(values, dtype=float, ndmin: int = 1) -> np.ndarray:
    arr = np.array(values, dtype=dtype, ndmin=ndmin)
    arr.flags.writeable = False
    return arr


def _same(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return np.array_equal(np.asarray(a), np.asarray(b))


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not (np.isfinite(self.t_start) and np.isfinite(self.t_end)):
            raise ValueError("grid end points must be finite")
        if not self.dt > 0:
            raise ValueError(f"grid needs t_end > t_start, got [{self.t_start}, {self.t_end}]")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def node(self, k: int) -> float:
        # computed from k, never by repeated addition
        return self.t_start + k * self.dt

    @property
    def nodes(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_steps + 1) * self.dt

    def interval_of(self, t: float) -> int:
        """Index of the interval [t_k, t_{k+1}) containing t; t_end maps to the last one."""
        if t < self.t_start or t > self.t_end:
            raise ValueError(f"t={t} outside [{self.t_start}, {self.t_end}]")
        k = int(np.floor((t - self.t_start) / self.dt))
        k = min(max(k, 0), self.n_steps - 1)
        if k + 1 < self.n_steps and self.node(k + 1) <= t:
            k += 1
        elif k > 0 and self.node(k) > t:
            k -= 1
        return k


@dataclass(frozen=True, eq=False)
class ControlBounds:
    kind: str = "unbounded"  # unbounded | box | ball | discrete
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    radius: float | None = None
    values: np.ndarray | None = None  # discrete set, one row per admissible control

    def __post_init__(self):
        if self.kind not in {"unbounded", "box", "ball", "discrete"}:
            raise ValueError(f"unknown bounds kind {self.kind!r}")
        if self.kind == "box":
            if self.lower is None or self.upper is None:
                raise ValueError("box bounds need lower and upper")
            lo, hi = _frozen_array(self.lower), _frozen_array(self.upper)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ValueError("box bounds need lower <= upper channel-wise")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise ValueError("ball bounds need a positive radius")
            object.__setattr__(self, "radius", float(self.radius))
        elif self.kind == "discrete":
            if self.values is None or len(self.values) == 0:
                raise ValueError("discrete bounds need at least one admissible value")
            object.__setattr__(self, "values", _frozen_array(self.values, ndmin=2))

    @classmethod
    def unbounded(cls) -> "ControlBounds":
        return cls()

    @classmethod
    def box(cls, lower, upper) -> "ControlBounds":
        return cls(kind="box", lower=np.atleast_1d(lower), upper=np.atleast_1d(upper))

    @classmethod
    def ball(cls, radius: float = 1.0) -> "ControlBounds":
        return cls(kind="ball", radius=radius)

    @classmethod
    def discrete(cls, values) -> "ControlBounds":
        return cls(kind="discrete", values=values)

    @property
    def is_compact(self) -> bool:
        if self.kind == "box":
            return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))
        return self.kind in {"ball", "discrete"}

    @property
    def is_convex(self) -> bool:
        if self.kind == "discrete":
            return len(np.unique(self.values, axis=0)) == 1
        return True

    def channels(self) -> int | None:
        if self.kind == "box":
            return len(self.lower)
        if self.kind == "discrete":
            return self.values.shape[1]
        return None

    def contains_all(self, values: np.ndarray, tol: float = BOUNDS_TOL) -> bool:
        """values: m × k array of controls, one column per sample."""
        values = np.atleast_2d(values)
        if self.kind == "unbounded":
            return True
        if self.kind == "box":
            lo, hi = self.lower[:, None], self.upper[:, None]
            return bool(np.all(values >= lo - tol) and np.all(values <= hi + tol))
        if self.kind == "ball":
            return bool(np.all(np.linalg.norm(values, axis=0) <= self.radius * (1 + tol) + tol))
        dist = np.abs(values.T[:, None, :] - self.values[None, :, :]).max(axis=2)
        return bool(np.all(dist.min(axis=1) <= tol))

    def contains(self, u, tol: float = BOUNDS_TOL) -> bool:
        return self.contains_all(np.asarray(u, dtype=float).reshape(-1, 1), tol)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ControlBounds):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.radius == other.radius
            and _same(self.lower, other.lower)
            and _same(self.upper, other.upper)
            and _same(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class ControlLaw:
    grid: TimeGrid
    values: np.ndarray  # m × n_steps, values[j, k] = u_j on [t_k, t_{k+1}); m = 0 for drift-only systems
    bounds: ControlBounds = field(default_factory=ControlBounds)

    def __post_init__(self):
        vals = _frozen_array(self.values, ndmin=2)
        if vals.ndim != 2 or vals.shape[1] != self.grid.n_steps:
            raise ValueError(
                f"control values must be m x {self.grid.n_steps}, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("control values must be finite")
        expected = self.bounds.channels()
        if expected is not None and expected != vals.shape[0]:
            raise ValueError(f"bounds describe {expected} channels, control has {vals.shape[0]}")
        if not self.bounds.contains_all(vals):
            raise ValueError(f"control values outside {self.bounds.kind} bounds")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: TimeGrid, value, bounds: ControlBounds | None = None) -> "ControlLaw":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        values = np.repeat(value[:, None], grid.n_steps, axis=1)
        return cls(grid, values, bounds or ControlBounds())

    @classmethod
    def from_function(
        cls,
        grid: TimeGrid,
        fn: Callable[[float], np.ndarray],
        bounds: ControlBounds | None = None,
        sample: str = "midpoint",
    ) -> "ControlLaw":
        offset = 0.5 if sample == "midpoint" else 0.0
        times = grid.t_start + (np.arange(grid.n_steps) + offset) * grid.dt
        values = np.column_stack([np.atleast_1d(fn(t)) for t in times])
        return cls(grid, values, bounds or ControlBounds())

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    def at(self, t: float) -> np.ndarray:
        return self.values[:, self.grid.interval_of(t)].copy()

    def interval(self, k: int) -> np.ndarray:
        return self.values[:, k].copy()

    def with_values(self, values) -> "ControlLaw":
        return ControlLaw(self.grid, values, self.bounds)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=0)

    def energy(self) -> float:
        return float(self.grid.dt * np.sum(self.values**2))

    def length(self) -> float:
        return float(self.grid.dt * np.sum(self.norms()))

    def to_frame(self) -> pd.DataFrame:
        data = {"t": self.grid.nodes[:-1]}
        for j in range(self.channels):
            data[f"u_{j + 1}"] = self.values[j]
        return pd.DataFrame(data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ControlLaw):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.bounds == other.bounds
            and _same(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class StateVector:
    entries: np.ndarray
    representation: Representation
    on_sphere: bool = True

    def __post_init__(self):
        rep = Representation(self.representation)
        arr = np.array(self.entries, dtype=rep.dtype)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("state must be a non-empty vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("state entries must be finite")
        if self.on_sphere and abs(np.linalg.norm(arr) - 1.0) > SPHERE_TOL:
            raise ValueError(f"state flagged on the sphere has norm {np.linalg.norm(arr):.12g}")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "representation", rep)

    @property
    def dimension(self) -> int:
        return self.entries.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateVector):
            return NotImplemented
        return (
            self.representation == other.representation
            and self.on_sphere == other.on_sphere
            and _same(self.entries, other.entries)
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray  # (n_steps + 1) × dimension, one row per node
    control: ControlLaw | None
    representation: Representation
    on_sphere: bool = True

    def __post_init__(self):
        states = np.array(self.states, dtype=Representation(self.representation).dtype, ndmin=2)
        if states.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"trajectory needs {self.grid.n_steps + 1} samples, got {states.shape[0]}"
            )
        states.flags.writeable = False
        object.__setattr__(self, "states", states)

    def state(self, k: int) -> StateVector:
        return StateVector(self.states[k], self.representation, on_sphere=False)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def to_frame(self) -> pd.DataFrame:
        data = {"t": self.grid.nodes}
        complex_ = self.representation.is_complex
        for i in range(self.states.shape[1]):
            data[f"re(q_{i + 1})"] = self.states[:, i].real
            if complex_:
                data[f"im(q_{i + 1})"] = self.states[:, i].imag
        return pd.DataFrame(data)
