"""Exception types raised across the package."""


class CGOError(Exception):
    """Base class for every error raised by cgolab."""


class DomainError(CGOError, ValueError):
    """Parameters outside the admissible set."""


class TangentialExit(CGOError):
    """A geodesic leaves the disk at too shallow an angle."""


class NoExit(CGOError):
    """A geodesic did not leave the disk within the arclength cap."""


class TubeTooWide(CGOError):
    """The Fermi chart is not injective on the requested tube."""


class RiccatiBlowup(CGOError):
    pass


class GridTooCoarse(CGOError):
    """The grid does not resolve the Gaussian beam profile."""


class ZeroRealPart(CGOError):
    pass


class Resonance(CGOError):
    """tau^2 sits on a shifted Dirichlet eigenvalue of the transversal Laplacian."""

    def __init__(self, msg, j=None, omega2=None, tau=None, k=None):
        super().__init__(msg)
        self.j, self.omega2, self.tau, self.k = j, omega2, tau, k


class HelmholtzResonance(CGOError):
    """k^2 sits on a Dirichlet eigenvalue of the cylinder Laplacian."""

    def __init__(self, msg, j=None, m=None):
        super().__init__(msg)
        self.j, self.m = j, m


class SolverFailure(CGOError):
    pass


class CalibrationDegenerate(CGOError):
    pass


class NoValidPair(CGOError):
    pass


class ConfigError(CGOError, ValueError):
    pass
