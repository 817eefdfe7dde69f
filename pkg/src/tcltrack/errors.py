"""Exception hierarchy shared by all tcltrack modules."""


class TclTrackError(Exception):
    """Base class for every error raised by this package."""


class InvalidScenario(TclTrackError, ValueError):
    pass


class NumericFailure(TclTrackError, FloatingPointError):
    pass


class StepSizeError(TclTrackError, ValueError):
    def __init__(self, dt: float, admissible: float):
        self.dt = dt
        self.admissible = admissible
        super().__init__(f"time step {dt:.6g} h exceeds admissible dt {admissible:.6g} h")


class PositivityViolation(TclTrackError, ArithmeticError):
    pass


class ControlSingularity(TclTrackError, ZeroDivisionError):
    """ON-state mass fell below the floor; the linearizing control is undefined."""


class ScheduleInvalid(TclTrackError, ValueError):
    pass


class TrajectoryRangeError(TclTrackError, ValueError):
    pass
