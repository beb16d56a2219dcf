"""Exception taxonomy shared by all modules.

Exit-code mapping used by the CLI: 2 for configuration problems, 3 for
numeric failures (vignetting, non-convergence, degenerate systems).
"""


class RayWaveError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(RayWaveError):
    """Bad inputs: invalid flags, files, parameter selections, mismatched shapes."""

    exit_code = 2


class PrescriptionError(ConfigurationError):
    """Prescription or config file failed to parse or violates an invariant."""


class SceneSizeError(ConfigurationError):
    """Scene exceeds the size limit of an exact (quadratic-cost) code path."""


class NumericError(RayWaveError):
    """Base class for runtime numeric failures."""

    exit_code = 3


class NumericDomainError(NumericError):
    """An arithmetic op was evaluated outside its domain (sqrt of negative, ...)."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"domain violation in '{op}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class SurfaceDomainError(NumericError):
    """Surface sag is not real over the requested aperture."""


class DegenerateSystemError(NumericError):
    """System is afocal or otherwise lacks the paraxial quantities requested."""


class VignettedFieldError(NumericError):
    """No live rays survive for the requested field point."""


class AimingError(NumericError):
    """Principal-ray aiming failed to converge."""

    def __init__(self, residual: float, message: str = ""):
        self.residual = residual
        super().__init__(
            message or f"principal-ray aiming did not converge (residual {residual:.3e} mm)"
        )
