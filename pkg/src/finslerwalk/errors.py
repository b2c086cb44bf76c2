"""Exception hierarchy.

Every error carries a ``category`` string that the command line maps onto a
machine-readable failure record and a nonzero exit status.
"""


class FinslerWalkError(Exception):
    category = "internal"


class GeometryError(FinslerWalkError):
    category = "geometry"


class SingularDirection(GeometryError):
    pass


class NotPositiveDefinite(GeometryError):
    pass


class IllConditioned(GeometryError):
    pass


class NavigationTooFast(GeometryError):
    pass


class NoCoveringChart(GeometryError):
    category = "atlas"


class LeftAtlas(NoCoveringChart):
    pass


class StencilLeftChart(NoCoveringChart):
    pass


class EnergyDriftExceeded(FinslerWalkError):
    category = "integration"


class ShootingDiverged(FinslerWalkError):
    category = "integration"


class RejectionBudgetExceeded(FinslerWalkError):
    category = "sampling"


class InsufficientSteps(FinslerWalkError):
    category = "walk"


class OutOfHorizon(FinslerWalkError):
    category = "walk"


class ConfigError(FinslerWalkError):
    category = "config"

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)
