"""Exception types shared by every module in the package."""


class NonConvergenceError(RuntimeError):
    """A retrospective decision ran out of refinement budget.

    Carries the last bracketing interval so callers can report how close the
    evaluation came to a decision.
    """

    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper

    def __str__(self):
        base = super().__str__()
        if self.lower is None:
            return base
        return f"{base} (last bounds [{self.lower!r}, {self.upper!r}])"


class IncompatibleSkeletonError(ValueError):
    """Two skeletons cannot be joined (mismatched spans, endpoints or width)."""


class AssumptionViolatedError(ValueError):
    """A cell's box straddles both barriers; refine before classifying."""
