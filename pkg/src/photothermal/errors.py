"""Exception hierarchy shared by the pipeline modules."""


class PhotothermalError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(PhotothermalError):
    """Invalid or missing configuration value (usage error)."""


class PoleError(PhotothermalError):
    """The Lorentz permittivity was evaluated exactly at its undamped pole."""


class LosslessError(PhotothermalError):
    """An operation needed a nonzero imaginary part of the permittivity."""


class RegimeError(PhotothermalError):
    """Selected frequency does not realise the requested resonance regime."""


class DomainError(PhotothermalError):
    """Invalid shape or voxel resolution."""


class SubspaceError(PhotothermalError):
    """A requested subspace is empty or rank deficient."""


class ResonanceError(PhotothermalError):
    """Linear system is (numerically) singular, typically an exact resonance hit."""


class QuadratureError(PhotothermalError):
    """An adaptive quadrature did not reach the requested tolerance."""


class FitError(PhotothermalError):
    """A log-log fit could not be formed (nonpositive data or too few points)."""


class QuasiStaticError(PhotothermalError, ValueError):
    """The size parameter |k delta| is outside the quasi-static range."""
