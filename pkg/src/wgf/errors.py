"""Exception hierarchy shared across the package."""


class WgfError(Exception):
    """Base class for package errors."""


class ConfigError(WgfError):
    """Invalid experiment or CLI configuration (process exit code 2)."""


class NumericError(WgfError):
    """A numeric precondition failed during a computation (exit code 3)."""


class SlopeSignError(NumericError):
    """The transport map left the monotone regime (nonpositive slope)."""


class BiasCollisionError(NumericError):
    """Two bias nodes moved within the singular-evaluation offset."""


class CdfGapError(NumericError):
    """A CDF increment underflowed the floor required for a reciprocal."""


class QuadratureError(NumericError):
    """Adaptive quadrature failed to converge on an interval."""
