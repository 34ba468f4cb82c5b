"""Exception hierarchy shared by every dynmlogit module.

The CLI maps the three branches to exit codes: SpecError -> 1, DataError -> 2,
EstimationError -> 3 (NotConverged) or 2 (everything else).
"""
from __future__ import annotations


class DynlabError(Exception):
    """Base class for all toolkit errors."""


# ── data problems ────────────────────────────────────────────────────────────

class DataError(DynlabError):
    pass


class MissingColumn(DataError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"missing column(s): {', '.join(self.columns)}")


class RowTypeError(DataError, TypeError):
    """A CSV row failed to parse or broke a row invariant."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateKey(DataError):
    def __init__(self, person_id, wave_year):
        self.person_id = person_id
        self.wave_year = wave_year
        super().__init__(f"duplicate (person_id, year) = ({person_id}, {wave_year})")


class EmptyAfterSelection(DataError):
    pass


class NegativeDistance(DataError, ValueError):
    pass


class DegenerateComponent(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"component '{name}' is constant over the construction sample")


class InsufficientEvents(DataError):
    pass


class EmptySubgroup(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"subgroup '{name}' has no observations")


# ── configuration / specification problems ──────────────────────────────────

class SpecError(DynlabError):
    pass


class ConfigInvalid(SpecError):
    pass


class TargetNotInSpec(SpecError):
    pass


class DimensionMismatch(SpecError):
    pass


class ScenarioSpecMismatch(SpecError):
    pass


class SupportInvalid(SpecError):
    pass


class BoundaryPoint(SpecError, ValueError):
    pass


# ── estimation problems ─────────────────────────────────────────────────────

class EstimationError(DynlabError):
    pass


class NotConverged(EstimationError):
    def __init__(self, iterations: int, grad_norm: float, message: str = ""):
        self.iterations = iterations
        self.grad_norm = grad_norm
        extra = f" ({message})" if message else ""
        super().__init__(
            f"optimizer stopped after {iterations} iterations with |grad|_inf = {grad_norm:.3e}{extra}"
        )


class CollinearDesign(EstimationError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"collinear design columns: {', '.join(self.columns)}")


class SeparationDetected(EstimationError):
    def __init__(self, name: str, value: float):
        self.name = name
        self.value = value
        super().__init__(f"coefficient '{name}' diverging ({value:.2f}); outcome separation suspected")


class NonFiniteLikelihood(EstimationError):
    def __init__(self, person, index_value: float):
        self.person = person
        self.index_value = index_value
        super().__init__(f"non-finite likelihood for person {person} (linear index {index_value!r})")
