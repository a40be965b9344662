"""Scenario JSON files: structural schema, conversion to domain types and back.

Complex entries are [re, im] pairs, matrices are row-major nested lists. Builtin
scenarios ship in src/scenarios and are addressed by name (``grushin``, ``spin-p1``...).
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.domain.dto import ControlBounds, Representation, StateVector
from src.domain.errors import ScenarioParseError, ScenarioValidationError
from src.domain.models import (
    BilinearSystem,
    Cost,
    LindbladModel,
    Scenario,
    Target,
    TimeSpec,
    Tolerances,
)
from src.dynamics.lindblad import unvectorize, vectorize
from src.infra.persistence import SCHEMA

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

Entry = Union[float, list[float]]
Vector = list[Entry]
Matrix = list[list[Entry]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class LindbladBlock(_Strict):
    basis: list[Matrix]
    coefficients: Matrix


class SystemBlock(_Strict):
    representation: Literal["complex-unitary", "real-orthogonal", "real-linear"]
    drift: Matrix
    controls: list[Matrix] = Field(default_factory=list)
    lindblad: LindbladBlock | None = None


class InitialStateBlock(_Strict):
    vector: Vector | None = None
    on_sphere: bool = True
    density: Matrix | None = None

    @field_validator("density")
    @classmethod
    def _one_form(cls, v, info):
        if v is not None and info.data.get("vector") is not None:
            raise ValueError("give either vector or density, not both")
        return v


class TargetBlock(_Strict):
    kind: Literal["point", "orbit", "free"]
    state: Vector


class CostBlock(_Strict):
    kind: Literal["energy", "time", "fidelity", "quadratic"]
    weights: list[float] | None = None
    energy_weight: float = 1.0


class TimeBlock(_Strict):
    mode: Literal["fixed", "free"] = "fixed"
    horizon: float
    steps: int = 200


class BoundsBlock(_Strict):
    kind: Literal["unbounded", "box", "ball", "discrete"] = "unbounded"
    lower: list[float] | None = None
    upper: list[float] | None = None
    radius: float | None = None
    values: list[list[float]] | None = None


class TolerancesBlock(_Strict):
    integration: float = 1e-9
    shooting: float = 1e-9
    rank: float = 1e-10


class ScenarioFile(_Strict):
    schema_version: str = Field(default=SCHEMA, alias="schema")
    name: str = "scenario"
    system: SystemBlock
    initial_state: InitialStateBlock
    target: TargetBlock
    cost: CostBlock
    time: TimeBlock
    bounds: BoundsBlock = Field(default_factory=BoundsBlock)
    tolerances: TolerancesBlock = Field(default_factory=TolerancesBlock)
    method: str = "shooting"

    @field_validator("schema_version")
    @classmethod
    def _schema(cls, v: str) -> str:
        if v != SCHEMA:
            raise ValueError(f"unsupported schema {v!r}, expected {SCHEMA!r}")
        return v


def _entry(value, complex_: bool):
    if isinstance(value, list):
        if len(value) != 2:
            raise ScenarioParseError(f"complex entries are [re, im] pairs, got {value}")
        if not complex_:
            raise ScenarioParseError("complex entry in a real representation")
        return complex(value[0], value[1])
    return value


def _vector(values, complex_: bool) -> np.ndarray:
    return np.array([_entry(v, complex_) for v in values], dtype=complex if complex_ else float)


def _matrix(rows, complex_: bool) -> np.ndarray:
    return np.array([[_entry(v, complex_) for v in row] for row in rows], dtype=complex if complex_ else float)


def _to_scenario(doc: ScenarioFile) -> Scenario:
    rep = Representation(doc.system.representation)
    cx = rep.is_complex
    bilinear = BilinearSystem(
        rep,
        _matrix(doc.system.drift, cx),
        tuple(_matrix(c, cx) for c in doc.system.controls),
    )
    system: BilinearSystem | LindbladModel = bilinear
    if doc.system.lindblad is not None:
        system = LindbladModel(
            bilinear,
            tuple(_matrix(v, True) for v in doc.system.lindblad.basis),
            _matrix(doc.system.lindblad.coefficients, True),
        )

    init = doc.initial_state
    if init.density is not None:
        if not isinstance(system, LindbladModel):
            raise ScenarioValidationError("density-state", "a density matrix needs a lindblad block")
        state = StateVector(vectorize(_matrix(init.density, True)), rep, on_sphere=False)
    elif init.vector is not None:
        if isinstance(system, LindbladModel):
            raise ScenarioValidationError("density-state", "Lindblad scenarios start from a density matrix")
        state = StateVector(_vector(init.vector, cx), rep, on_sphere=init.on_sphere)
    else:
        raise ScenarioParseError("initial_state needs a vector or a density")

    b = doc.bounds
    bounds = ControlBounds(
        b.kind,
        None if b.lower is None else np.array(b.lower, dtype=float),
        None if b.upper is None else np.array(b.upper, dtype=float),
        b.radius,
        None if b.values is None else np.array(b.values, dtype=float),
    )

    cost = Cost(
        doc.cost.kind,
        None if doc.cost.weights is None else np.array(doc.cost.weights, dtype=float),
        doc.cost.energy_weight,
    )
    return Scenario(
        name=doc.name,
        system=system,
        initial_state=state,
        target=Target(doc.target.kind, _vector(doc.target.state, cx)),
        cost=cost,
        time=TimeSpec(doc.time.mode, doc.time.horizon, doc.time.steps),
        bounds=bounds,
        tolerances=Tolerances(doc.tolerances.integration, doc.tolerances.shooting, doc.tolerances.rank),
        method=doc.method,
    )


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{source}: malformed JSON ({exc})") from exc
    try:
        doc = ScenarioFile.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioParseError(f"{source}: {exc.error_count()} schema errors\n{exc}") from exc
    try:
        return _to_scenario(doc)
    except ScenarioValidationError:
        raise
    except ValueError as exc:
        # StateVector, ControlBounds and friends report plain ValueErrors
        raise ScenarioValidationError("scenario", f"{source}: {exc}") from exc


def builtin_names() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))


def _resolve(ref: str | Path) -> Path:
    path = Path(ref)
    if path.is_file():
        return path
    name = path.name.removesuffix(".json").replace("_", "-")
    builtin = SCENARIO_DIR / f"{name}.json"
    if builtin.is_file():
        return builtin
    raise ScenarioParseError(f"no scenario file or builtin named {str(ref)!r} (builtins: {', '.join(builtin_names())})")


def load_scenario(ref: str | Path) -> Scenario:
    """Load a scenario from a path, or a builtin by name."""
    path = _resolve(ref)
    logger.debug(f"loading scenario {path}")
    return parse_scenario(path.read_text(encoding="utf-8"), str(path))


def _out_entry(z, complex_: bool):
    return [float(z.real), float(z.imag)] if complex_ else float(z)


def _out_vector(v, complex_: bool) -> list:
    return [_out_entry(z, complex_) for z in np.asarray(v)]


def _out_matrix(m, complex_: bool) -> list:
    return [_out_vector(row, complex_) for row in np.asarray(m)]


def dump_scenario(scenario: Scenario) -> dict:
    rep = scenario.representation
    cx = rep.is_complex
    bil = scenario.bilinear
    system = {
        "representation": rep.value,
        "drift": _out_matrix(bil.drift, cx),
        "controls": [_out_matrix(c, cx) for c in bil.controls],
    }
    if scenario.is_lindblad:
        model = scenario.system
        system["lindblad"] = {
            "basis": [_out_matrix(v, True) for v in model.basis],
            "coefficients": _out_matrix(model.coefficients, True),
        }
        initial = {"density": _out_matrix(unvectorize(scenario.initial_state.entries, bil.dimension), True)}
    else:
        initial = {
            "vector": _out_vector(scenario.initial_state.entries, cx),
            "on_sphere": scenario.initial_state.on_sphere,
        }
    b = scenario.bounds
    bounds: dict = {"kind": b.kind}
    if b.kind == "box":
        bounds.update(lower=b.lower.tolist(), upper=b.upper.tolist())
    elif b.kind == "ball":
        bounds["radius"] = b.radius
    elif b.kind == "discrete":
        bounds["values"] = b.values.tolist()
    cost: dict = {"kind": scenario.cost.kind, "energy_weight": scenario.cost.energy_weight}
    if scenario.cost.weights is not None:
        cost["weights"] = np.asarray(scenario.cost.weights).tolist()
    return {
        "schema": SCHEMA,
        "name": scenario.name,
        "system": system,
        "initial_state": initial,
        "target": {"kind": scenario.target.kind, "state": _out_vector(scenario.target.state, cx)},
        "cost": cost,
        "time": {"mode": scenario.time.mode, "horizon": scenario.time.horizon, "steps": scenario.time.steps},
        "bounds": bounds,
        "tolerances": {
            "integration": scenario.tolerances.integration,
            "shooting": scenario.tolerances.shooting,
            "rank": scenario.tolerances.rank,
        },
        "method": scenario.method,
    }


def dumps_scenario(scenario: Scenario) -> str:
    return json.dumps(dump_scenario(scenario), indent=2) + "\n"


def save_scenario(scenario: Scenario, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_scenario(scenario), encoding="utf-8")
    return path
