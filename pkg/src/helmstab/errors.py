"""Exception types shared across the package."""


class HelmstabError(Exception):
    """Base class for all package-specific failures."""


class NearResonanceError(HelmstabError):
    """The requested frequency sits on (or too close to) a discrete resonance."""

    def __init__(self, omega2, eigenvalue, rel_distance):
        self.omega2 = omega2
        self.eigenvalue = eigenvalue
        self.rel_distance = rel_distance
        super().__init__(
            f"omega^2={omega2:.9g} is within relative {rel_distance:.3g} of the "
            f"discrete eigenvalue {eigenvalue:.9g}; the solve would be meaningless"
        )


class NumericalFailureError(HelmstabError):
    """A numerical kernel (factorization, eigensolver, residual check) failed.

    Carries a ``diagnostics`` dict with whatever the failing kernel can report
    (residual norms, iteration counts, converged subspace sizes).
    """

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            detail = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class WindowViolationError(HelmstabError):
    """omega^2 lies outside every admissible frequency window."""


class DegenerateInputError(HelmstabError, ValueError):
    """Inputs make the requested quantity undefined (e.g. identical models)."""


class IllConditionedEstimateError(HelmstabError):
    """The data difference is too small relative to the model difference."""
