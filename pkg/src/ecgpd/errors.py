"""Exception types raised across the pipeline.

Everything derives from :class:`EcgpdError` so the CLI can map any
validation failure to exit code 2 with a JSON payload.
"""


class EcgpdError(ValueError):
    """Base class; ``payload()`` gives the machine-readable form."""

    def payload(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


# cohort
class MalformedRow(EcgpdError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicateRecordId(EcgpdError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"duplicate record_id {record_id!r}")


class LabelEfMismatch(EcgpdError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"label disagrees with ef_percent for record {record_id!r}")


class EmptyInput(EcgpdError):
    pass


class NegativeWindow(EcgpdError):
    pass


class EmptyCohort(EcgpdError):
    pass


# predictors
class HeaderMismatch(EcgpdError):
    def __init__(self, expected, found):
        self.expected = list(expected)
        self.found = list(found)
        super().__init__(
            f"predictor header mismatch: expected {len(self.expected)} columns, found {len(self.found)}"
        )


class OutOfRangeValue(EcgpdError):
    def __init__(self, record_id: str, code: str, value: float):
        self.record_id, self.code, self.value = record_id, code, value
        super().__init__(f"{record_id}/{code}: value {value!r} outside [0, 1]")


class UnknownCode(EcgpdError, KeyError):
    def __init__(self, code: str):
        self.code = code
        EcgpdError.__init__(self, f"unknown statement code {code!r}")

    __str__ = EcgpdError.__str__


class MissingCode(EcgpdError):
    pass


# modelling / metrics
class DegenerateLabels(EcgpdError):
    pass


class NoPositives(EcgpdError):
    pass


class NonConvergence(EcgpdError):
    def __init__(self, iterations: int, grad_norm: float):
        self.iterations, self.grad_norm = iterations, grad_norm
        super().__init__(f"no convergence after {iterations} iterations (|grad| = {grad_norm:.3e})")


class EmptyFeatureSet(EcgpdError):
    pass


class DimensionMismatch(EcgpdError):
    pass


class TooManyDegenerateResamples(EcgpdError):
    pass


class MissingCover(EcgpdError):
    pass


class EmptyTotal(EcgpdError):
    pass


class NonPositiveValue(EcgpdError):
    def __init__(self, record_id: str, value: float):
        self.record_id, self.value = record_id, value
        super().__init__(f"non-positive predictor value {value!r} for record {record_id!r}")


# subgroups
class UnderAge(EcgpdError):
    def __init__(self, age):
        self.age = age
        super().__init__(f"age {age} is below 18")


class AlignmentMismatch(EcgpdError):
    pass


# notes
class LlmUnavailable(EcgpdError):
    pass


class MalformedLlmJson(EcgpdError):
    pass


class NoValue(EcgpdError):
    pass


# derived features
class OrderingViolation(EcgpdError):
    pass


class NonPositiveRR(EcgpdError):
    pass


# synthetic data
class InvalidSpec(EcgpdError):
    pass
