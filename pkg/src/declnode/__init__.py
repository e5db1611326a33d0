"""Structure-exploiting backward passes for declarative layers.

Two nodes are implemented end to end: robust vector pooling (an
unconstrained minimization over penalized distances) and entropy
regularized optimal transport (a linearly constrained program solved by
Sinkhorn scaling).  Both ship the structured implicit backward pass, the
naive baselines it is measured against, and independent oracles (generic
finite-difference implicit differentiation and vector-Jacobian-product
gradient checks).  A benchmark CLI (``declnode-bench``) profiles time and
analytic peak workspace across methods and problem sizes.
"""

from .backend import active_backend, use_backend
from .errors import (
    BenchConfigError,
    DeclnodeError,
    DimensionMismatchError,
    NonFiniteError,
    NotPositiveDefiniteError,
    NumericalUnderflowError,
    RankDeficientConstraintsError,
)
from .gradcheck import VjpReport, compare_vjp, fd_vjp
from .implicit_diff import (
    ImplicitWorkspace,
    NodeSpec,
    StationarityWarning,
    assemble_derivatives,
    solution_jacobian,
    unconstrained_solution_jacobian,
)
from .lbfgs import LbfgsResult, lbfgs_minimize
from .linalg import (
    CholeskyFactor,
    cholesky_factorize,
    cholesky_factorize_batch,
    cholesky_solve,
    cholesky_solve_batch,
)
from .penalties import (
    PENALTY_FAMILIES,
    KappaPair,
    PenaltyKind,
    has_identically_zero_kappa2,
    kappa,
    penalty_from_name,
    phi_value,
)
from .robust_pool import (
    BACKWARD_NORM_SHIFT,
    PoolResult,
    pool_backward,
    pool_forward,
    pool_jacobian_naive,
)
from .sinkhorn_ot import (
    OT_BACKWARD_METHODS,
    OtGradients,
    TransportPlan,
    TransportProblem,
    assemble_marginal_system,
    ot_backward,
    ot_forward,
    simplex_reparam_vjp,
)
from .workspace import WorkspaceTracker, track as track_workspace

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "active_backend",
    "use_backend",
    "BenchConfigError",
    "DeclnodeError",
    "DimensionMismatchError",
    "NonFiniteError",
    "NotPositiveDefiniteError",
    "NumericalUnderflowError",
    "RankDeficientConstraintsError",
    "VjpReport",
    "compare_vjp",
    "fd_vjp",
    "ImplicitWorkspace",
    "NodeSpec",
    "StationarityWarning",
    "assemble_derivatives",
    "solution_jacobian",
    "unconstrained_solution_jacobian",
    "LbfgsResult",
    "lbfgs_minimize",
    "CholeskyFactor",
    "cholesky_factorize",
    "cholesky_factorize_batch",
    "cholesky_solve",
    "cholesky_solve_batch",
    "PENALTY_FAMILIES",
    "KappaPair",
    "PenaltyKind",
    "has_identically_zero_kappa2",
    "kappa",
    "penalty_from_name",
    "phi_value",
    "BACKWARD_NORM_SHIFT",
    "PoolResult",
    "pool_backward",
    "pool_forward",
    "pool_jacobian_naive",
    "OT_BACKWARD_METHODS",
    "OtGradients",
    "TransportPlan",
    "TransportProblem",
    "assemble_marginal_system",
    "ot_backward",
    "ot_forward",
    "simplex_reparam_vjp",
    "WorkspaceTracker",
    "track_workspace",
]
