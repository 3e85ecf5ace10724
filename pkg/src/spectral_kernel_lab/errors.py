"""Exception types shared across the package."""


class SpectralKernelError(Exception):
    """Base class for all errors raised by this package."""


class TruncationOverflow(SpectralKernelError):
    """An operation would produce a nonzero value beyond the truncation radius."""


class MismatchedTree(SpectralKernelError):
    """Two radial functions live on trees with different degree or radius."""


class OddPropagationTime(SpectralKernelError):
    """The closed-form propagation formula only covers even times."""


class EtaOutOfRange(SpectralKernelError):
    """The window parameter eta must lie in the open interval (0, 1/2)."""


class NTooSmall(SpectralKernelError):
    """A kernel construction side condition failed for the requested N.

    ``checks`` maps each side-condition name to whether it held, so callers
    can surface a structured report instead of a bare message.
    """

    def __init__(self, message, checks=None):
        super().__init__(message)
        self.checks = dict(checks or {})


class QuadratureFailure(SpectralKernelError):
    """A quadrature could not certify the requested tolerance."""

    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class ConventionMismatch(SpectralKernelError):
    """A quasimode operation was called on the wrong spectral convention."""


class DegenerateWindow(SpectralKernelError):
    """The projection bound needs 2*omega*r > omega**2."""


class OutOfSpectrum(SpectralKernelError):
    """A Hecke eigenvalue lies outside [-(p+1)/sqrt(p), (p+1)/sqrt(p)]."""
