"""Exception hierarchy shared by every planning layer."""


class PlannerError(Exception):
    """Base class for all planner errors."""

    exit_code = 1


class ParseError(PlannerError):
    """The assembly or config file could not be parsed."""

    exit_code = 2


class ValidationError(PlannerError):
    """Input parsed but violates a structural invariant."""

    exit_code = 2


class NoOrientation(ValidationError):
    pass


class InfeasibleError(PlannerError):
    """No admissible plan exists for the given inputs."""

    exit_code = 3


class InitializationStalled(InfeasibleError):
    pass


class NoFeasibleStart(InfeasibleError):
    pass


class NotAdmissible(InfeasibleError):
    pass


class NoFacingAngle(InfeasibleError):
    pass


class LengthMismatch(ValidationError):
    pass


class InconsistentPlan(ValidationError):
    pass


class CyclicPrecedence(InfeasibleError):
    pass


class TooLarge(ValidationError):
    pass


class SchedulingTimeout(PlannerError):
    exit_code = 4
