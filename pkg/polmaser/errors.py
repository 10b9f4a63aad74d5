"""Error types shared by the simulator and the CLI."""

from __future__ import annotations

import math


class SimulationError(Exception):
    def __init__(self, message: str, *, code: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.code = code

    def __str__(self) -> str:
        if self.code:
            return f"{self.code}: {self.message}"
        return self.message


class ConfigError(SimulationError):
    def __init__(self, message: str, *, field: str | None = None) -> None:
        super().__init__(message, code="config")
        self.field = field

    def __str__(self) -> str:
        if self.field:
            return f"[{self.field}] {self.message}"
        return self.message


class InvariantViolation(SimulationError):
    def __init__(self, message: str, *, code: str | None = "invariant") -> None:
        super().__init__(message, code=code)


class StateValidationError(InvariantViolation):
    def __init__(self, message: str, *, time: float = math.nan, invariant: str = "unknown") -> None:
        super().__init__(message, code="state")
        self.time = time
        self.invariant = invariant

    def __str__(self) -> str:
        return f"t={self.time:.6g} [{self.invariant}] {self.message}"


class ValidationSuiteFailure(SimulationError):
    def __init__(self, message: str, *, failed: list[str] | None = None) -> None:
        super().__init__(message, code="validate")
        self.failed = list(failed or [])
