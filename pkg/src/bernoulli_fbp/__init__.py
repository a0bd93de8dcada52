"""Solver and continuation engine for Bernoulli's free boundary problem
in the plane: spectral boundary-integral potentials on annular domains,
quasi-Newton correction of candidate free boundaries, type classification
of solutions, and tracing of one-parameter solution families with
harmonic-moment certificates.
"""

from .classify import ClassificationRecord, acker_criterion, classify, nondegeneracy_margin
from .curves import (
    BoundaryCurve,
    CurveSamples,
    circle,
    curve_from_fourier,
    integrate_boundary,
    metric_factor,
    perturbed_curve,
    sample_geometry,
    unit_circle,
)
from .errors import (
    BoundaryTooClose,
    ConfigError,
    ConfigInvalid,
    DegenerateOperator,
    DegenerateRadius,
    GridMismatch,
    MissingArtifacts,
    MuTooSmall,
    NoConvergence,
    NonStarShaped,
    OriginNotEnclosed,
    OuterNotDisk,
    OutOfRange,
    QNotPositive,
    ResolutionTooLow,
    SignMismatch,
    SingularSystem,
    SolverError,
    StepSizeUnderflow,
    TooCloseToBoundary,
)
from .flow import (
    FlowOptions,
    FlowTrajectory,
    SymbolPreconditioner,
    branch_sweep,
    flow_step,
    imex_predict,
    run_flow,
    symbol_preconditioner,
)
from .moments import (
    HarmonicTestFunction,
    MomentVector,
    harmonic_test_basis,
    max_quadrature_residual,
    moments,
    quadrature_residual,
)
from .operator import QSchedule, SolutionState, apply_linearization, eval_F, newton_correct
from .potential import (
    AnnularDomain,
    PotentialSolution,
    evaluate_potential,
    greens_check,
    normal_derivative_inner,
    robin_margin,
    solve_capacitary,
    solve_robin,
)
from .radial import (
    RadialBranchPoint,
    critical,
    radial_branch_roots,
    radial_linearized,
    radial_Q,
)

__version__ = "0.1.0"
