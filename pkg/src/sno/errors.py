"""Shared exception hierarchy.

Every failure mode raised by this package derives from SnoError so callers
(and the CLI exit-code mapping) can distinguish our contract violations from
generic Python errors.
"""


class SnoError(Exception):
    pass


# -- polynomial kernel -------------------------------------------------------

class DegenerateGrid(SnoError):
    """Grid endpoints coincide; no affine map to [-1, 1] exists."""


class DegreeTooHigh(SnoError):
    """Requested degree exceeds the cap where factorials stay exact."""


class Underdetermined(SnoError):
    """Fewer sample points than coefficients."""


class IllConditioned(SnoError):
    """Design matrix condition estimate exceeds the trust threshold."""


class ShapeMismatch(SnoError):
    pass


class ExtrapolationOutOfRange(SnoError):
    """Evaluation point lies beyond the permitted margin outside [-1, 1]."""


# -- tensor / training -------------------------------------------------------

class NumericalFault(SnoError):
    """A tensor operation produced NaN or Inf."""


class GradientMissing(SnoError):
    """Optimizer step requested before gradients were populated."""


class NoTape(SnoError):
    """Backward requested on a value with no recorded forward graph."""


class ZeroTarget(SnoError):
    """Relative-L2 loss is undefined for a zero-norm target."""


class ConfigError(SnoError):
    pass


class DegenerateChannel(SnoError):
    """Channel standard deviation is zero; z-scoring undefined."""


# -- data generation ---------------------------------------------------------

class SolverDiverged(SnoError):
    pass


class CFLViolation(SnoError):
    """Explicit advection step exceeds its stability bound."""


# -- files / evaluation / benchmarking ---------------------------------------

class FormatError(SnoError):
    """Unknown or incompatible file format version."""


class ChecksumError(SnoError):
    """Truncated or corrupt payload."""


class EmptySplit(SnoError):
    pass


class GridIncompatible(SnoError):
    """Requested resolution is not a divisor-compatible subsampling."""


class LengthNotPow2(SnoError):
    pass


class ClockTooCoarse(SnoError):
    """Timer resolution is too coarse for the measured durations."""
