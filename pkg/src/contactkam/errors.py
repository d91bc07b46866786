"""Exception hierarchy.

Every numeric failure derives from :class:`NumericFailure` so the CLI can map
it to exit code 3 and serialize it into the JSON summary.
"""


class ContactKAMError(Exception):
    """Base class for all package errors."""


class ConfigError(ContactKAMError):
    """Malformed or inconsistent experiment configuration."""


class NumericFailure(ContactKAMError):
    """A computation could not produce a trustworthy result."""


class ModelViolation(NumericFailure):
    """A sampled point breaks the standing assumptions of the model.

    The offending sample is kept on ``sample`` for reporting.
    """

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample or {}


class NonFiniteState(NumericFailure):
    pass


class BadGrid(ContactKAMError):
    pass


class NotSubsolution(NumericFailure):
    pass


class IterationLimit(NumericFailure):
    pass


class ContractionViolated(NumericFailure):
    pass


class NoConvergence(NumericFailure):
    pass


class NegativeCycle(NumericFailure):
    pass


class EmptyMeasureList(NumericFailure):
    pass


class Unreachable(NumericFailure):
    pass
