"""The positive definite symmetric stochastic manifold.

Tangent space, gradient and Hessian coincide with the symmetric stochastic
manifold; only membership (positive definiteness) and the retraction
differ.  The retraction

    R_X(xi) = X + (1/w) I - (1/w) expm(-w xi)

preserves unit row sums for every w > 0 because tangent vectors annihilate
the all-ones vector, so the matrix exponential fixes it.  The scale w is
found by geometric halving until both the entrywise positivity and the
smallest-eigenvalue margins clear their floors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import DomainError, RetractionFailureError, StepTooLargeError
from .symmetric import SymmetricStochastic


def expm_symmetric(S: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix via eigendecomposition."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if np.max(np.abs(S - S.T)) > 1e-10 * max(1.0, np.max(np.abs(S))):
        raise DomainError("expm_symmetric requires a symmetric matrix")
    w, V = scipy.linalg.eigh(0.5 * (S + S.T))
    E = (V * np.exp(w)) @ V.T
    return 0.5 * (E + E.T)


@dataclass(frozen=True)
class OmegaSearchResult:
    """Outcome of the retraction scale search.

    ``positivity_margin`` is the smallest entry and ``eig_margin`` the
    smallest eigenvalue of the retracted point; both are strictly positive
    on success.
    """

    omega: float
    retracted: np.ndarray
    positivity_margin: float
    eig_margin: float
    halvings: int


class DefiniteSymmetricStochastic(SymmetricStochastic):
    """Symmetric stochastic matrices that are also positive definite."""

    tag = "psd"
    label = "definite symmetric stochastic"
    retraction_kinds = ("canonical", "expm")
    default_retraction = "expm"

    def __init__(
        self,
        n: int,
        positivity_floor: float = 1e-14,
        feas_tol: float = 1e-10,
        symmetry_tol: float = 1e-10,
        balance_tol: float = 1e-12,
        balance_max_iter: int | None = None,
        omega0: float = 1.0,
        max_halvings: int = 60,
        entry_margin_floor: float = 1e-13,
        eig_margin_scale: float = 1e-12,
    ):
        super().__init__(
            n, positivity_floor, feas_tol, symmetry_tol, balance_tol, balance_max_iter
        )
        self.omega0 = float(omega0)
        self.max_halvings = int(max_halvings)
        self.entry_margin_floor = float(entry_margin_floor)
        self.eig_margin_scale = float(eig_margin_scale)

    def check_point(self, X: np.ndarray) -> None:
        super().check_point(X)
        lam_min = float(scipy.linalg.eigvalsh(0.5 * (X + X.T))[0])
        if lam_min <= 0.0:
            raise DomainError(f"point is not positive definite (lambda_min={lam_min:g})")

    # -- retractions ------------------------------------------------------
    def retract(self, X, xi, kind: str | None = None) -> np.ndarray:
        kind = self._resolve_kind(kind)
        if kind == "canonical":
            return self.retract_canonical(X, xi)
        return self.retract_expm_auto(X, xi).retracted

    def retract_canonical(self, X: np.ndarray, xi: np.ndarray) -> np.ndarray:
        Y = super().retract_canonical(X, xi)
        lam_min = float(scipy.linalg.eigvalsh(0.5 * (Y + Y.T))[0])
        if lam_min <= self.eig_margin_scale * np.trace(Y) / self.n:
            raise StepTooLargeError(
                "canonical step lost positive definiteness; shrink the step"
            )
        return Y

    def retract_expm(self, X: np.ndarray, xi: np.ndarray, omega: float) -> np.ndarray:
        """Matrix-exponential step at a fixed scale; feasibility not enforced."""
        if omega <= 0.0:
            raise DomainError("omega must be positive")
        X = self._check_symmetric(X, "X")
        E = expm_symmetric(-omega * np.asarray(xi, dtype=float))
        Y = X + (np.eye(self.n) - E) / omega
        return 0.5 * (Y + Y.T)

    def retract_expm_auto(self, X: np.ndarray, xi: np.ndarray) -> OmegaSearchResult:
        """Halve omega from omega0 until both feasibility margins clear."""
        omega = self.omega0
        for halvings in range(self.max_halvings + 1):
            Y = self.retract_expm(X, xi, omega)
            positivity = float(np.min(Y))
            if positivity > self.entry_margin_floor:
                lam_min = float(scipy.linalg.eigvalsh(Y)[0])
                if lam_min > self.eig_margin_scale * np.trace(Y) / self.n:
                    return OmegaSearchResult(omega, Y, positivity, lam_min, halvings)
            omega *= 0.5
        raise RetractionFailureError(
            f"no feasible retraction scale after {self.max_halvings} halvings; "
            "shrink the tangent step"
        )

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        S = super().random_point(rng)
        lam_min = float(scipy.linalg.eigvalsh(S)[0])
        # blend toward the identity; c is raised adaptively so the smallest
        # eigenvalue clears 0.05 even when the balanced draw is indefinite
        c = max(0.1, (0.05 - lam_min) / 0.95)
        X = (S + c * np.eye(self.n)) / (1.0 + c)
        return 0.5 * (X + X.T)
