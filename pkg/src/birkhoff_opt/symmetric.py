"""Geometry of the symmetric stochastic manifold.

The ambient space is the set of symmetric matrices, which makes the
projection one positive-definite solve instead of a saddle system: the
normal component is (a 1^T + 1 a^T) * X with a = (I + X)^{-1} Z 1.  I + X
is symmetric positive definite because the spectrum of a symmetric
stochastic matrix lies in (-1, 1], so a Cholesky factorization is used
throughout (never an explicit inverse).
"""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
import scipy.linalg

from .balancing import dad_balance, default_max_iter
from .core import BalanceConvergenceError, DomainError, Manifold, StepTooLargeError
from .doubly_stochastic import EXP_CLIP


class SymmetricStochastic(Manifold):
    """Symmetric matrices with positive entries and unit row sums."""

    tag = "sym"
    label = "symmetric stochastic"
    retraction_kinds = ("canonical", "balanced")
    default_retraction = "balanced"

    def __init__(
        self,
        n: int,
        positivity_floor: float = 1e-14,
        feas_tol: float = 1e-10,
        symmetry_tol: float = 1e-10,
        balance_tol: float = 1e-12,
        balance_max_iter: int | None = None,
    ):
        super().__init__(n, positivity_floor, feas_tol)
        self.symmetry_tol = float(symmetry_tol)
        self.balance_tol = float(balance_tol)
        self.balance_max_iter = (
            default_max_iter(n) if balance_max_iter is None else int(balance_max_iter)
        )

    @property
    def dim(self) -> int:
        return self.n * (self.n - 1) // 2

    def _check_symmetric(self, M: np.ndarray, name: str) -> np.ndarray:
        M = self._check_shape(M, name)
        if np.max(np.abs(M - M.T)) > self.symmetry_tol:
            raise DomainError(f"{name} must be symmetric on this manifold")
        return M

    # -- membership -------------------------------------------------------
    def check_point(self, X: np.ndarray) -> None:
        X = self._check_symmetric(X, "X")
        if np.min(X) <= self.positivity_floor:
            raise DomainError(
                f"point has entries below the positivity floor {self.positivity_floor:g}"
            )
        r = np.abs(X.sum(axis=1) - 1.0).max()
        if r > self.feas_tol:
            raise DomainError(f"row sums deviate from 1 by {r:g} > {self.feas_tol:g}")

    def check_tangent(self, X: np.ndarray, Z: np.ndarray, tol: float = 1e-8) -> None:
        Z = self._check_shape(Z, "Z")
        if np.max(np.abs(Z - Z.T)) > tol:
            raise DomainError("tangent vector must be symmetric")
        r = np.abs(Z.sum(axis=1)).max()
        if r > tol:
            raise DomainError(f"tangent residual {r:g} > {tol:g}")

    # -- projection -------------------------------------------------------
    def row_sum_multiplier(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Solve (I + X) a = Z 1 (SPD system)."""
        X = self._check_symmetric(X, "X")
        Z = self._check_symmetric(Z, "Z")
        factor = scipy.linalg.cho_factor(np.eye(self.n) + X)
        return scipy.linalg.cho_solve(factor, Z.sum(axis=1))

    def tangent_projector(self, X: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        X = self._check_symmetric(X, "X")
        factor = scipy.linalg.cho_factor(np.eye(self.n) + X)

        def project(Z: np.ndarray) -> np.ndarray:
            Z = self._check_symmetric(Z, "Z")
            a = scipy.linalg.cho_solve(factor, Z.sum(axis=1))
            return Z - (a[:, None] + a[None, :]) * X

        return project

    # -- retractions ------------------------------------------------------
    def retract(self, X, xi, kind: str | None = None) -> np.ndarray:
        kind = self._resolve_kind(kind)
        if kind == "canonical":
            return self.retract_canonical(X, xi)
        return self.retract_balanced(X, xi)

    def retract_canonical(self, X: np.ndarray, xi: np.ndarray) -> np.ndarray:
        Y = X + xi
        if np.min(Y) <= self.positivity_floor:
            raise StepTooLargeError(
                "canonical retraction left the positive region; shrink the step"
            )
        return Y

    def retract_balanced(self, X: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Multiplicative retraction rebalanced by the symmetric DAD scaling."""
        E = xi / X
        if np.max(np.abs(E)) > EXP_CLIP:
            warnings.warn(
                "retraction exponent clipped; step is far outside the "
                "line-search regime",
                RuntimeWarning,
                stacklevel=2,
            )
            E = np.clip(E, -EXP_CLIP, EXP_CLIP)
        Y = X * np.exp(E)
        Y = 0.5 * (Y + Y.T)
        B = dad_balance(
            Y, tol=self.balance_tol, max_iter=self.balance_max_iter
        ).balanced
        if np.min(B) <= self.positivity_floor:
            raise StepTooLargeError(
                "balanced retraction landed at the numerical boundary; "
                "shrink the step"
            )
        return B

    # -- gradient/Hessian ---------------------------------------------------
    def _hessian_pieces(self, X: np.ndarray, egrad: np.ndarray):
        X = self._check_symmetric(X, "X")
        egrad = self._check_symmetric(egrad, "egrad")
        factor = scipy.linalg.cho_factor(np.eye(self.n) + X)

        def solve(b):
            return scipy.linalg.cho_solve(factor, b)

        g = egrad * X
        a = solve(g.sum(axis=1))
        d = g - (a[:, None] + a[None, :]) * X

        def project(Z):
            m = solve(Z.sum(axis=1))
            return Z - (m[:, None] + m[None, :]) * X

        return X, egrad, solve, project, g, a, d

    def _hessian_apply(self, pieces, ehess_xi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        X, egrad, solve, project, g, a, d = pieces
        gd = ehess_xi * X + egrad * xi
        ad = solve(gd.sum(axis=1) - xi @ a)
        dd = (
            gd
            - (ad[:, None] + ad[None, :]) * X
            - (a[:, None] + a[None, :]) * xi
        )
        return project(dd - 0.5 * (d * xi) / X)

    def riemannian_hessian(self, X, egrad, ehess_xi, xi) -> np.ndarray:
        pieces = self._hessian_pieces(X, egrad)
        return self._hessian_apply(pieces, np.asarray(ehess_xi, dtype=float), xi)

    def hessian_operator(self, X, egrad, ehess_vec):
        pieces = self._hessian_pieces(X, egrad)
        return lambda xi: self._hessian_apply(pieces, ehess_vec(X, xi), xi)

    # -- randomness ---------------------------------------------------------
    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        # draws whose balancing stalls (nearly bipartite structure at small
        # n) are rejected and redrawn
        for _ in range(50):
            A = rng.uniform(size=(self.n, self.n))
            A = 0.5 * (A + A.T)
            try:
                return dad_balance(
                    A, tol=self.balance_tol, max_iter=self.balance_max_iter
                ).balanced
            except BalanceConvergenceError:
                continue
        raise BalanceConvergenceError("no balanceable random draw in 50 attempts")

    def random_tangent(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        G = rng.standard_normal((self.n, self.n))
        return self.project_tangent(X, 0.5 * (G + G.T))
