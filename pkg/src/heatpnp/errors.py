"""Exception types shared across the solver stack."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent problem setup (config file, boundary tags, BC data)."""


class AssemblyError(RuntimeError):
    """A bilinear form could not be assembled from the given fields."""


class CPositivityError(AssemblyError):
    """Lumped reaction coefficient went negative at a vertex.

    Carries the offending vertex index and value so the time stepper can
    shrink the step and retry from the saved state.
    """

    def __init__(self, vertex, value):
        self.vertex = int(vertex)
        self.value = float(value)
        super().__init__(
            f"c-positivity violated at vertex {self.vertex} (c = {self.value:g})"
        )


class SolveFailure(RuntimeError):
    """Linear solve did not converge; carries the solve report."""

    def __init__(self, message, report=None):
        self.report = report
        detail = f"{message}" if report is None else f"{message}: {report}"
        super().__init__(detail)


class InvariantViolation(RuntimeError):
    """A structural guarantee failed at runtime.

    Raised by the monitors for loss of positivity, a maximum-principle
    violation, mass drift, or an energy-functional increase.
    """


class TimeStepError(RuntimeError):
    """Time stepping could not continue (step size fell below the floor)."""

    def __init__(self, message, time=None, dt=None):
        self.time = time
        self.dt = dt
        super().__init__(message)


class EvaluationError(ValueError):
    """A field evaluation produced a non-finite value."""
