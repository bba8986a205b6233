"""Error taxonomy shared across the package.

Three failure classes are distinguished everywhere: bad inputs, numerical
singularity, and unmet mathematical hypotheses.  A certified bound that fails
on directly computed data is a bug in the bound machinery, never a hypothesis
problem, and gets its own class so callers can map it to a distinct exit code.
"""


class InputError(ValueError):
    """Malformed or out-of-contract input."""


class SingularityError(ArithmeticError):
    """Restricted operator too close to singular for a trustworthy inverse."""

    def __init__(self, message, condition_estimate=None, defect=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate
        self.defect = defect


class HypothesisError(RuntimeError):
    """A stated hypothesis of a certified bound does not hold on this data."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class InvariantFailureError(AssertionError):
    """A certified conclusion failed on directly computed data."""
