"""Perfect-transmission quantum scattering as a non-self-adjoint spectral problem.

Compactly supported piecewise-constant potentials on [-a, a]; transfer-matrix
scattering; the complex-Robin eigenproblem psi'(+-a) = i*alpha*psi(+-a) whose
secular zeros give the spectrum; perfect-transmission energies as
dispersion-parabola intersections; exceptional points where they merge; and
the inverse reconstruction of an eigenvalue branch from measured
perfect-transmission data.
"""

__version__ = "0.1.0"

from .errors import (
    BranchResolutionError,
    CapacityError,
    ConfigError,
    ContinuationStallError,
    ContourError,
    GeometryError,
    NoExceptionalPointError,
    NumericalError,
    PtlabError,
    RootVerificationError,
    SeedError,
    SingularSystemError,
    TangencyError,
)
from .potential import (
    PotentialSpec,
    Segment,
    StepFamilySpec,
    add_constant,
    make_square_well,
    make_steps,
    value_at,
)
from .transfer import (
    BoundaryState,
    ScatteringAmplitudes,
    TransferMatrix,
    scattering_amplitudes,
    segment_propagator,
    total_transfer,
    transmission_curve,
)
from .spectrum import (
    ComplexBox,
    EigenBranch,
    ExceptionalPoint,
    branch_derivative,
    continue_branch,
    find_eigenvalues,
    label_branches_at_zero,
    locate_exceptional_point,
    secular,
    square_well_eigenvalues,
    winding_number,
)
from .pte import (
    PTEEvent,
    PTERecord,
    PTEScanResult,
    PTETrack,
    find_ptes,
    ptes_from_branches,
    track_ptes,
)
from .inverse import (
    BranchSelector,
    DerivativeCheck,
    KappaSample,
    MeasurementCurve,
    ReconstructionResult,
    kappa_derivative_check,
    reconstruct_branch,
    simulate_kappa,
)

__all__ = [name for name in dir() if not name.startswith("_")]
