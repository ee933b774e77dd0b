"""Exception types raised by pulsedamp."""


class PulsedampError(Exception):
    """Base class for all library errors."""


class NonFiniteState(PulsedampError, ValueError):
    pass


class IntegrationStalled(PulsedampError, RuntimeError):
    pass


class CalibrationError(PulsedampError, RuntimeError):
    pass


class DesignError(PulsedampError, ValueError):
    """A design was requested outside the range where it is guaranteed."""


class HypothesisViolated(PulsedampError, ValueError):
    pass
