"""Exception hierarchy shared by all modules."""


class HolosplitError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class InputError(HolosplitError, ValueError):
    """Malformed or inconsistent user input."""

    exit_code = 1


class DegeneratePointError(HolosplitError, ValueError):
    """The metric is degenerate at an evaluation point."""

    exit_code = 2


class ToleranceError(HolosplitError, ArithmeticError):
    """A numerical decision failed its consistency check.

    ``stage`` names the pipeline step that failed; ``diagnostics`` carries
    whatever numbers help to adjust the rank/residual tolerances.
    """

    exit_code = 2

    def __init__(self, stage: str, message: str, **diagnostics):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.diagnostics = diagnostics
