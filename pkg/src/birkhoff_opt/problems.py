"""Benchmark objectives, data generators, and test oracles.

Objectives are returned as Objective bundles (value, Euclidean gradient,
optional Euclidean Hessian product).  Every gradient here is analytic and
is certified against central finite differences in the test suite before
any solver run relies on it.

The Dykstra projection onto the closed set of doubly stochastic matrices
is a test oracle for denoising optima; it is never called inside solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.cluster import KMeans

from .balancing import dad_balance, sinkhorn_knopp
from .core import DomainError, Manifold, Objective, ShapeError


# ---------------------------------------------------------------------------
# denoising


@dataclass(frozen=True)
class DenoiseProblem:
    """Recover the closest manifold point to a noisy target A."""

    A: np.ndarray
    manifold_tag: str = "ds"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeError(f"A must be square, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise DomainError("A contains non-finite entries")
        if self.manifold_tag in ("sym", "psd") and np.max(np.abs(A - A.T)) > 1e-10:
            raise DomainError("A must be symmetric for the symmetric manifolds")
        object.__setattr__(self, "A", A)


def denoise_objective(problem: DenoiseProblem) -> Objective:
    """Squared Frobenius distance to the target: ||A - X||_F^2."""
    A = problem.A

    return Objective(
        value=lambda X: float(np.sum((A - X) ** 2)),
        egrad=lambda X: 2.0 * (X - A),
        ehess_vec=lambda X, xi: 2.0 * xi,
    )


def make_denoise_instance(
    manifold: Manifold, rng: np.random.Generator, noise: float = 0.2
) -> tuple[DenoiseProblem, np.ndarray]:
    """Generate A = M + N with M on the manifold and interior-safe noise.

    M is balanced from entries bounded away from zero so its smallest entry
    is O(1/n); the noise scale is relative to that entry, which keeps the
    projection of A strictly inside the positive region.  Returns the
    problem and the ground-truth M.
    """
    n = manifold.n
    base = 1.0 + 0.5 * (rng.uniform(size=(n, n)) - 0.5)
    if manifold.tag in ("sym", "psd"):
        base = 0.5 * (base + base.T)
        M = dad_balance(base, tol=1e-12).balanced
        if manifold.tag == "psd":
            lam_min = float(scipy.linalg.eigvalsh(M)[0])
            c = max(0.1, (0.05 - lam_min) / 0.95)
            M = (M + c * np.eye(n)) / (1.0 + c)
    else:
        M = sinkhorn_knopp(base, tol=1e-12).balanced
    sigma = noise * float(np.min(M))
    N = rng.standard_normal((n, n))
    if manifold.tag in ("sym", "psd"):
        N = 0.5 * (N + N.T)
    return DenoiseProblem(M + sigma * N, manifold.tag), M


# ---------------------------------------------------------------------------
# Dykstra projection oracle


class ProjectionConvergenceError(RuntimeError):
    """Dykstra hit its iteration cap; carries the best iterate."""

    def __init__(self, message: str, best: np.ndarray | None = None):
        super().__init__(message)
        self.best = best


def _project_rowcol_affine(Y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {X : X 1 = 1, X^T 1 = 1}."""
    n = Y.shape[0]
    r = Y.sum(axis=1) - 1.0
    c = Y.sum(axis=0) - 1.0
    shift = r.sum() / (2.0 * n)
    u = (r - shift) / n
    v = (c - shift) / n
    return Y - u[:, None] - v[None, :]


def dykstra_birkhoff_projection(
    A: np.ndarray, tol: float = 1e-10, max_iter: int = 20000
) -> np.ndarray:
    """Frobenius projection of A onto {X >= 0, X 1 = 1, X^T 1 = 1}.

    Cyclic Dykstra iteration over the row/column-sum affine subspace and
    the nonnegative orthant.  By construction of the correction terms the
    stationarity, complementarity, and multiplier-sign conditions hold at
    every iteration, so the returned point is optimal as soon as the two
    set-projections agree; the residual tracks that agreement plus the
    feasibility of the orthant iterate.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"A must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("A contains non-finite entries")

    x = A.copy()
    p = np.zeros_like(A)
    q = np.zeros_like(A)
    for _ in range(max_iter):
        y = _project_rowcol_affine(x + p)
        p = x + p - y
        w = y + q
        x = np.maximum(w, 0.0)
        q = w - x
        feas = max(
            np.abs(x.sum(axis=1) - 1.0).max(), np.abs(x.sum(axis=0) - 1.0).max()
        )
        res = max(float(np.max(np.abs(x - y))), float(feas))
        if res <= tol:
            return x
    raise ProjectionConvergenceError(
        f"Dykstra projection did not reach tol={tol:g} in {max_iter} iterations",
        best=x,
    )


# ---------------------------------------------------------------------------
# convex clustering


@dataclass(frozen=True)
class ConvexClusterProblem:
    """Trace-regularized denoising of a similarity matrix.

    ``formulation`` selects the manifold the objective is meant for:

    - "psd": ||A - X||_F^2 + lam Tr(X) on the definite manifold;
    - "sym": adds rho (||X||_* - Tr(X)) to promote positive semidefiniteness
      on the symmetric manifold;
    - "ds": additionally adds mu ||X - X^T||_F^2 to promote symmetry on the
      doubly stochastic manifold (spectral term uses the symmetrized X).
    """

    A: np.ndarray
    lam: float = 0.5
    rho: float = 1.0
    mu: float = 1.0
    formulation: str = "sym"
    eig_gap_tol: float = 1e-6

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeError(f"A must be square, got shape {A.shape}")
        if np.max(np.abs(A - A.T)) > 1e-10 or np.min(A) < 0.0:
            raise DomainError("similarity matrix must be symmetric nonnegative")
        if self.formulation not in ("psd", "sym", "ds"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if min(self.lam, self.rho, self.mu) < 0.0:
            raise DomainError("regularization weights must be nonnegative")
        object.__setattr__(self, "A", A)


def original_cluster_cost(A: np.ndarray, X: np.ndarray, lam: float) -> float:
    """Unregularized clustering cost ||A - X||_F^2 + lam Tr(X)."""
    return float(np.sum((A - X) ** 2) + lam * np.trace(X))


def convex_cluster_objective(problem: ConvexClusterProblem) -> Objective:
    A, lam, rho, mu = problem.A, problem.lam, problem.rho, problem.mu
    use_spectral = problem.formulation in ("sym", "ds") and rho > 0.0
    use_asym = problem.formulation == "ds" and mu > 0.0
    gap_tol = problem.eig_gap_tol

    def value(X: np.ndarray) -> float:
        f = float(np.sum((A - X) ** 2) + lam * np.trace(X))
        if use_spectral:
            lams = scipy.linalg.eigvalsh(0.5 * (X + X.T))
            f += rho * float(np.sum(np.abs(lams) - lams))
        if use_asym:
            f += mu * float(np.sum((X - X.T) ** 2))
        return f

    def egrad(X: np.ndarray) -> np.ndarray:
        G = 2.0 * (X - A) + lam * np.eye(X.shape[0])
        if use_spectral:
            lams, U = scipy.linalg.eigh(0.5 * (X + X.T))
            G = G + rho * ((U * (np.sign(lams) - 1.0)) @ U.T)
        if use_asym:
            G = G + 4.0 * mu * (X - X.T)
        return G

    def ehess_vec(X: np.ndarray, xi: np.ndarray) -> np.ndarray:
        H = 2.0 * xi
        if use_spectral:
            lams, U = scipy.linalg.eigh(0.5 * (X + X.T))
            if np.min(np.abs(lams)) < gap_tol:
                raise DomainError(
                    "spectral regularizer is nonsmooth here (eigenvalue within "
                    f"{gap_tol:g} of zero); second-order solvers must not be used"
                )
            sgn = np.sign(lams)
            diff = lams[:, None] - lams[None, :]
            K = np.where(
                np.abs(diff) > gap_tol, (sgn[:, None] - sgn[None, :]) / diff, 0.0
            )
            xs = 0.5 * (xi + xi.T)
            H = H + rho * (U @ (K * (U.T @ xs @ U)) @ U.T)
        if use_asym:
            H = H + 4.0 * mu * (xi - xi.T)
        return H

    return Objective(value=value, egrad=egrad, ehess_vec=ehess_vec)


# ---------------------------------------------------------------------------
# low-rank decomposition clustering


@dataclass(frozen=True)
class LowRankDecompProblem:
    """Probabilistic low-rank factorization cost for similarity clustering.

    With column sums d_k = sum_v X_vk and W = X diag(d)^{-1} X^T, the cost is

        -sum_ij A_ij log(W_ij) - (alpha - 1) sum_ij log(X_ij),

    where alpha > 1 weights the log barrier that repels the boundary.
    Intended for the symmetric manifolds; first-order solvers only.
    """

    A: np.ndarray
    alpha: float = 1.05

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeError(f"A must be square, got shape {A.shape}")
        if np.max(np.abs(A - A.T)) > 1e-10 or np.min(A) < 0.0:
            raise DomainError("similarity matrix must be symmetric nonnegative")
        if self.alpha <= 1.0:
            raise DomainError("alpha must exceed 1 for the barrier to repel 0")
        object.__setattr__(self, "A", A)


def lowrank_decomp_objective(problem: LowRankDecompProblem) -> Objective:
    A, alpha = problem.A, problem.alpha

    def _pieces(X: np.ndarray):
        d = X.sum(axis=0)
        C = X / d[None, :]
        W = C @ X.T
        return d, C, W

    def value(X: np.ndarray) -> float:
        _, _, W = _pieces(X)
        return float(-np.sum(A * np.log(W)) - (alpha - 1.0) * np.sum(np.log(X)))

    def egrad(X: np.ndarray) -> np.ndarray:
        _, C, W = _pieces(X)
        B = A / W
        BC = B @ C
        m = (BC * C).sum(axis=0)  # diag(C^T B C)
        G = -2.0 * BC + np.ones((X.shape[0], 1)) * m[None, :] - (alpha - 1.0) / X
        return 0.5 * (G + G.T)  # gradient in the symmetric ambient space

    return Objective(value=value, egrad=egrad, ehess_vec=None)


# ---------------------------------------------------------------------------
# block model and cluster extraction


@dataclass(frozen=True)
class BlockModelSpec:
    """Noisy block stochastic similarity model."""

    n: int
    k: int = 3
    p_in: float = 0.7
    p_out: float = 0.2
    noise_sigma: float = 0.2
    seed: int = 0
    clip_floor: float = 1e-3

    def __post_init__(self):
        if not (0.0 <= self.p_out < self.p_in <= 1.0):
            raise DomainError("need 0 <= p_out < p_in <= 1")
        if self.k < 1 or self.k > self.n:
            raise DomainError("need 1 <= k <= n")
        if self.clip_floor < 0.0:
            raise DomainError("clip floor must be nonnegative")


def block_model_generate(spec: BlockModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Draw a similarity matrix and its ground-truth labels.

    Same-label pairs connect with weight p_in, cross-label pairs with p_out;
    symmetric Gaussian noise of scale noise_sigma is added and the result is
    clipped at clip_floor to keep it a valid nonnegative similarity matrix.
    """
    rng = np.random.default_rng(spec.seed)
    sizes = [len(part) for part in np.array_split(np.arange(spec.n), spec.k)]
    labels = np.repeat(np.arange(spec.k), sizes)
    same = labels[:, None] == labels[None, :]
    B = np.where(same, spec.p_in, spec.p_out).astype(float)
    if spec.noise_sigma > 0.0:
        G = rng.standard_normal((spec.n, spec.n))
        B = B + spec.noise_sigma * 0.5 * (G + G.T)
    A = np.maximum(0.5 * (B + B.T), spec.clip_floor)
    return A, labels


def extract_clusters(X: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Cluster labels from k-means on the top-k eigenvector embedding of X."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k > n:
        raise ValueError(f"cannot extract {k} clusters from {n} points")
    _, U = scipy.linalg.eigh(0.5 * (X + X.T))
    embedding = U[:, -k:]
    km = KMeans(n_clusters=k, n_init=10, random_state=seed)
    return km.fit_predict(embedding)
