"""Exception hierarchy shared by all modules."""


class LabError(Exception):
    pass


class ConfigError(LabError):
    """Bad user input; the CLI maps it to exit code 2."""


class NumericalFailure(LabError):
    """A solver gave up; the CLI maps it to exit code 3."""


class PreconditionViolated(LabError):
    pass


class BadWeightSpec(ConfigError):
    pass


class BadSubinterval(LabError):
    pass


class HypothesisHViolated(LabError):
    pass


class ZeroState(LabError):
    pass


class StateTouchesZero(LabError):
    pass


class NegativeState(LabError):
    pass


class HypothesisFailed(LabError):
    def __init__(self, clause, detail=""):
        self.clause = clause
        super().__init__(f"{clause}: {detail}" if detail else clause)


class MaxIterExceeded(NumericalFailure):
    pass


class SingularJacobian(NumericalFailure):
    pass


class OutOfNeighborhood(NumericalFailure):
    pass


class StallDetected(NumericalFailure):
    pass


class BranchLeftDomain(NumericalFailure):
    pass


class InsufficientPoints(NumericalFailure):
    pass


class InsufficientSweep(LabError):
    pass


class NoCandidate(NumericalFailure):
    pass
