"""Riemannian optimization over doubly stochastic matrix manifolds.

Three manifolds of positive stochastic matrices (doubly stochastic,
symmetric, and definite symmetric) under the Fisher information metric,
with first- and second-order solvers and benchmark problems on top.
"""

from .balancing import BalanceResult, dad_balance, sinkhorn_knopp
from .core import (
    BalanceConvergenceError,
    DomainError,
    Manifold,
    NumericalError,
    Objective,
    RetractionFailureError,
    ShapeError,
    StepTooLargeError,
    fd_directional_derivative,
    fisher_inner,
    fisher_norm,
)
from .definite import DefiniteSymmetricStochastic, OmegaSearchResult, expm_symmetric
from .doubly_stochastic import DoublyStochastic
from .problems import (
    BlockModelSpec,
    ConvexClusterProblem,
    DenoiseProblem,
    LowRankDecompProblem,
    block_model_generate,
    convex_cluster_objective,
    denoise_objective,
    dykstra_birkhoff_projection,
    extract_clusters,
    lowrank_decomp_objective,
    make_denoise_instance,
    original_cluster_cost,
)
from .solvers import (
    ArmijoOptions,
    CGOptions,
    LineSearchError,
    NewtonOptions,
    SolverOptions,
    SolverReport,
    SolverStatus,
    TraceRecord,
    TrustRegionOptions,
    armijo_linesearch,
    conjugate_gradient,
    gradient_descent,
    newton,
    solve,
    trust_region,
)
from .symmetric import SymmetricStochastic

__version__ = "0.1.0"

MANIFOLDS = {
    "ds": DoublyStochastic,
    "sym": SymmetricStochastic,
    "psd": DefiniteSymmetricStochastic,
}


def make_manifold(tag: str, n: int, **kwargs) -> Manifold:
    """Construct a manifold by its short tag (ds, sym, psd)."""
    if tag not in MANIFOLDS:
        raise ValueError(f"unknown manifold {tag!r}; expected one of {sorted(MANIFOLDS)}")
    return MANIFOLDS[tag](n, **kwargs)
