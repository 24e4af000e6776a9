"""Exception types shared across the library.

Numerical failures (subclasses of ``NumericalError``) map to CLI exit code 2,
configuration problems (``ConfigError``) to exit code 1.  Benign outcomes such
as an all-pass scan or a truncated measurement curve are *not* exceptions;
they are reported as structured results.
"""


class PtlabError(Exception):
    """Base class for all library errors."""


class GeometryError(PtlabError, ValueError):
    """Invalid potential geometry (nonpositive widths, bands exceeding the support)."""


class NumericalError(PtlabError):
    """A numerical procedure failed to produce a trustworthy result."""


class SingularSystemError(NumericalError):
    """A linear system that should be regular turned out numerically singular."""


class ContourError(NumericalError):
    """A zero-counting contour could not be placed away from zeros."""


class CapacityError(NumericalError):
    """More zeros inside the search region than the caller allowed."""


class ContinuationStallError(NumericalError):
    """Branch continuation could not advance past a point.

    Carries the partial branch computed so far in ``branch``.
    """

    def __init__(self, message, branch=None):
        super().__init__(message)
        self.branch = branch


class NoExceptionalPointError(NumericalError):
    """The two-dimensional Newton search for a double root did not converge.

    ``trace`` holds the iterates for diagnosis.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class RootVerificationError(NumericalError):
    """A claimed perfect-transmission root failed the independent scattering check.

    This signals an internal inconsistency of the solver, never a property of
    the input.
    """


class BranchResolutionError(NumericalError):
    """Branch samples are too sparse to bracket intersections reliably."""


class TangencyError(NumericalError):
    """The slope formula degenerates (level locally tangent to the dispersion parabola)."""


class SeedError(NumericalError):
    """No (or no unique) perfect-transmission energy inside the seed window."""


class ConfigError(PtlabError):
    """Invalid run configuration.  ``diagnostics`` lists human-readable problems."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))
