"""Exception hierarchy shared across the package."""


class EnergySchedError(Exception):
    """Base class for all package errors."""


class ScenarioError(EnergySchedError, ValueError):
    """Structural problem with a plant description."""


class DuplicateId(ScenarioError):
    pass


class DanglingReference(ScenarioError):
    pass


class FinalBufferWithoutProduct(ScenarioError):
    pass


class IntermediateBufferWithDelivery(ScenarioError):
    pass


class InvalidParameter(ScenarioError):
    """A numeric field violates its documented range (e.g. x_min > x_max)."""


class DimensionMismatch(EnergySchedError, ValueError):
    pass


class TariffError(EnergySchedError, ValueError):
    pass


class MissingRtpSeries(TariffError):
    pass


class HourOutOfRange(TariffError):
    pass


class InfeasibleBoundsDetected(EnergySchedError, ValueError):
    pass


class EmptyHorizon(EnergySchedError, ValueError):
    pass


class InfeasibleReconstruction(EnergySchedError):
    """A solver vector violates the model constraints beyond tolerance."""


class NonPsdObjective(EnergySchedError, ValueError):
    pass


class SolveFailed(EnergySchedError):
    def __init__(self, step, status, message=""):
        self.step = step
        self.status = status
        super().__init__(f"solve failed at step {step} ({status}){': ' + message if message else ''}")


class BoundViolation(EnergySchedError):
    pass


class IncompleteTrace(EnergySchedError, ValueError):
    pass


class UnknownProduct(EnergySchedError, KeyError):
    pass
