"""Exception types raised across the package."""


class NlBandgapError(Exception):
    """Base class for all package errors."""


class InvalidSystem(NlBandgapError, ValueError):
    """Mass or stiffness matrix violates symmetry / definiteness requirements."""


class DegenerateMass(InvalidSystem):
    """Honeycomb mass matrix is not positive definite at the requested wave numbers."""


class RepeatedEigenvalue(NlBandgapError):
    """The two linear frequencies coincide; the normal form divisors degenerate."""


class ExactResonance(NlBandgapError):
    """Nonresonant normal form requested at (numerically) exact 3:1 resonance."""


class NoRootInRectangle(NlBandgapError):
    """No sign change of the detuning was found on the scan grid."""


class AllExcluded(NlBandgapError):
    """Resonant exclusions cover the whole Brillouin boundary."""


class EnergyDrift(NlBandgapError):
    """Relative energy drift exceeded the integrator quality gate."""


class Blowup(NlBandgapError):
    """Trajectory left the bounded region; the state norm exceeded the cap."""


class SpectralAmbiguity(NlBandgapError):
    """The dominant spectral peak is not clearly separated from its neighbours."""


class PreconditionFail(NlBandgapError):
    """Initial datum violates the smallness condition of the remainder estimate."""


class SingularActionAngle(NlBandgapError, ValueError):
    """Action-angle map evaluated where one complex coordinate vanishes."""
