"""Shared manifold machinery: Fisher metric, manifold interface, fd utilities.

Conventions
-----------
Points and tangent vectors are plain dense numpy arrays of shape (n, n).
A point X has strictly positive entries and unit row sums; the doubly
stochastic manifold additionally has unit column sums, the symmetric
variants are symmetric, and the definite variant is positive definite.
Tangent vectors Z satisfy the linearized constraints: zero row sums, zero
column sums on the doubly stochastic manifold, and symmetry on the
symmetric manifolds (where zero row sums imply zero column sums).

Every tangent space carries the Fisher information inner product

    <xi, eta>_X = sum_ij xi_ij * eta_ij / X_ij

and all gradients, Hessians and norms in this package are taken with
respect to it.  Euclidean gradient/Hessian always means the derivative of
the objective in the flat embedding space; the manifold classes convert
those into their Riemannian counterparts.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible or non-square shapes."""


class DomainError(ValueError):
    """Input violates a domain requirement (positivity, symmetry, ...)."""


class NumericalError(RuntimeError):
    """A linear solve or factorization produced an unusable result."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class StepTooLargeError(ValueError):
    """A canonical retraction step left the positive region.

    Solvers treat this as a signal to shrink the step, not as a failure.
    """


class RetractionFailureError(RuntimeError):
    """A retraction search exhausted its budget without a feasible point."""


class BalanceConvergenceError(RuntimeError):
    """Matrix balancing hit its iteration cap; carries the best iterate."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


def _as_square(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"{name} must be a square matrix, got shape {M.shape}")
    return M


def fisher_inner(X: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> float:
    """Fisher information inner product sum_ij xi_ij eta_ij / X_ij."""
    X = _as_square(X, "X")
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if xi.shape != X.shape or eta.shape != X.shape:
        raise ShapeError(
            f"shape mismatch: X {X.shape}, xi {xi.shape}, eta {eta.shape}"
        )
    if np.min(X) <= 0.0:
        raise DomainError("fisher_inner requires strictly positive entries in X")
    return float(np.sum(xi * eta / X))


def fisher_norm(X: np.ndarray, xi: np.ndarray) -> float:
    """Norm induced by the Fisher inner product."""
    return float(np.sqrt(max(fisher_inner(X, xi, xi), 0.0)))


def fd_directional_derivative(
    value: Callable[[np.ndarray], float],
    X: np.ndarray,
    xi: np.ndarray,
    h: float = 1e-6,
) -> float:
    """Central finite difference (f(X + h xi) - f(X - h xi)) / 2h.

    Test/verification oracle only; solvers never call this.  Raises
    DomainError when either probe point leaves the positive orthant.
    """
    if h <= 0.0:
        raise DomainError("step h must be positive")
    X = np.asarray(X, dtype=float)
    xi = np.asarray(xi, dtype=float)
    up = X + h * xi
    dn = X - h * xi
    if np.min(up) <= 0.0 or np.min(dn) <= 0.0:
        raise DomainError("finite-difference step leaves the positive orthant")
    return (value(up) - value(dn)) / (2.0 * h)


@dataclass(frozen=True)
class Objective:
    """Objective bundle: value, Euclidean gradient, optional Hessian product.

    ``ehess_vec(X, xi)`` applies the Euclidean Hessian at X to the direction
    xi; it is only required by second-order solvers.
    """

    value: Callable[[np.ndarray], float]
    egrad: Callable[[np.ndarray], np.ndarray]
    ehess_vec: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None


class Manifold(ABC):
    """Common interface of the stochastic-matrix manifolds.

    All operations are pure functions of their arguments; instances hold
    only sizes and tolerances and are safe to share across threads.
    """

    tag: str = ""
    label: str = ""
    retraction_kinds: tuple[str, ...] = ()
    default_retraction: str = ""

    def __init__(
        self,
        n: int,
        positivity_floor: float = 1e-14,
        feas_tol: float = 1e-10,
    ):
        if n < 2:
            raise ValueError(f"manifold size must be at least 2, got {n}")
        self.n = int(n)
        self.positivity_floor = float(positivity_floor)
        self.feas_tol = float(feas_tol)

    # -- metric ---------------------------------------------------------
    def inner(self, X, xi, eta) -> float:
        return fisher_inner(X, xi, eta)

    def norm(self, X, xi) -> float:
        return fisher_norm(X, xi)

    def zero_tangent(self) -> np.ndarray:
        return np.zeros((self.n, self.n))

    # -- shape/domain helpers -------------------------------------------
    def _check_shape(self, M: np.ndarray, name: str) -> np.ndarray:
        M = _as_square(M, name)
        if M.shape != (self.n, self.n):
            raise ShapeError(
                f"{name} has shape {M.shape}, expected {(self.n, self.n)}"
            )
        if not np.all(np.isfinite(M)):
            raise DomainError(f"{name} contains non-finite entries")
        return M

    # -- abstract surface -----------------------------------------------
    @property
    @abstractmethod
    def dim(self) -> int:
        """Dimension of the tangent space."""

    @abstractmethod
    def check_point(self, X: np.ndarray) -> None:
        """Raise DomainError/ShapeError unless X satisfies the invariants."""

    @abstractmethod
    def check_tangent(self, X: np.ndarray, Z: np.ndarray, tol: float = 1e-8) -> None:
        """Raise unless Z satisfies the tangent-space constraints at X."""

    @abstractmethod
    def tangent_projector(self, X: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """Return a closure projecting ambient matrices onto T_X.

        Factorizations that depend only on X are computed once, so the
        closure is cheap to apply repeatedly (inner solver loops).
        """

    def project_tangent(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Orthogonal (Fisher) projection of Z onto the tangent space at X."""
        return self.tangent_projector(X)(Z)

    def riemannian_gradient(
        self, X: np.ndarray, egrad: np.ndarray, projector=None
    ) -> np.ndarray:
        """Convert a Euclidean gradient to the Riemannian gradient at X.

        The conversion is the metric rescaling egrad * X followed by the
        tangent projection; it is shared by all manifolds here.
        """
        X = self._check_shape(X, "X")
        egrad = self._check_shape(egrad, "egrad")
        proj = projector if projector is not None else self.tangent_projector(X)
        return proj(egrad * X)

    @abstractmethod
    def riemannian_hessian(
        self, X: np.ndarray, egrad: np.ndarray, ehess_xi: np.ndarray, xi: np.ndarray
    ) -> np.ndarray:
        """Apply the Riemannian Hessian at X to the tangent direction xi."""

    def hessian_operator(
        self,
        X: np.ndarray,
        egrad: np.ndarray,
        ehess_vec: Callable[[np.ndarray, np.ndarray], np.ndarray],
    ) -> Callable[[np.ndarray], np.ndarray]:
        """Return a closure xi -> hess[xi] with X-dependent work precomputed."""
        return lambda xi: self.riemannian_hessian(X, egrad, ehess_vec(X, xi), xi)

    @abstractmethod
    def retract(self, X: np.ndarray, xi: np.ndarray, kind: str | None = None) -> np.ndarray:
        """Map the tangent step xi at X back onto the manifold."""

    @abstractmethod
    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        """Draw a random point well inside the manifold."""

    @abstractmethod
    def random_tangent(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw a random tangent vector at X (Gaussian, then projected)."""

    def _resolve_kind(self, kind: str | None) -> str:
        kind = self.default_retraction if kind is None else kind
        if kind not in self.retraction_kinds:
            raise ValueError(
                f"unknown retraction kind {kind!r} for {self.tag}; "
                f"available: {self.retraction_kinds}"
            )
        return kind

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"{type(self).__name__}(n={self.n})"
