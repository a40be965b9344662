from __future__ import annotations


class PmpQocError(Exception):
    """Base class for every error raised by the toolkit."""


class ScenarioParseError(PmpQocError):
    pass


class ScenarioValidationError(PmpQocError, ValueError):
    def __init__(self, invariant: str, message: str):
        self.invariant = invariant
        super().__init__(f"[{invariant}] {message}")


class DimensionMismatchError(PmpQocError, ValueError):
    pass


class NonFiniteError(PmpQocError, ArithmeticError):
    pass


class TraceDriftError(PmpQocError):
    def __init__(self, node: int, drift: float, what: str = "trace"):
        self.node = node
        self.drift = drift
        super().__init__(f"{what} drift {drift:.3e} at node {node}")


class SingularArcError(PmpQocError):
    def __init__(self, t: float, residual: float):
        self.t = t
        self.residual = residual
        super().__init__(
            f"switching function vanishes at t={t:.12g} but the state is off the singular locus "
            f"(residual {residual:.3e})"
        )


class SingularJacobianError(PmpQocError):
    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"shooting Jacobian is numerically singular (cond={condition:.3e})")


class GrapeDivergenceError(PmpQocError):
    def __init__(self, iteration: int, values):
        self.iteration = iteration
        self.values = values
        super().__init__(f"non-finite GRAPE cost at iteration {iteration}")
