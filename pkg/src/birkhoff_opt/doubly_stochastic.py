"""Geometry of the doubly stochastic manifold under the Fisher metric.

Points are square matrices with positive entries and unit row and column
sums; tangent vectors have zero row and column sums.  The orthogonal
projection removes a normal component of the form (u 1^T + 1 v^T) * X,
where the multiplier pair (u, v) solves the symmetric saddle system

    [ I   X ] [u]   [Z 1  ]
    [ X^T I ] [v] = [Z^T 1].

The system is consistent but rank deficient: its null space is spanned by
(1, -1) (the Perron singular pair of X).  The production solve deflates
that known direction by a rank-one shift, which turns the system positive
definite without changing the minimum-norm solution; an eigendecomposition
pseudo-inverse route is kept for cross-validation.  Deflation rather than
a rank cutoff matters because iterates satisfy the manifold equalities
only to the feasibility tolerance, which lifts the null eigenvalue just
above machine precision and would otherwise poison a cutoff-based
pseudo-inverse.
"""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
import scipy.linalg

from .balancing import default_max_iter, sinkhorn_knopp
from .core import (
    BalanceConvergenceError,
    DomainError,
    Manifold,
    NumericalError,
    StepTooLargeError,
)

# exp-argument clamp for the balanced retraction; +/-50 keeps the scaled
# update representable without letting entries underflow to exact zero
EXP_CLIP = 50.0


def _sym_pinv_from_eigh(w: np.ndarray, V: np.ndarray, rank_floor: float) -> np.ndarray:
    cut = rank_floor * np.max(np.abs(w)) if w.size else 0.0
    winv = np.where(np.abs(w) > cut, 1.0 / np.where(w == 0.0, 1.0, w), 0.0)
    return (V * winv) @ V.T


class DoublyStochastic(Manifold):
    """Square matrices with positive entries and unit row/column sums."""

    tag = "ds"
    label = "doubly stochastic"
    retraction_kinds = ("canonical", "balanced")
    default_retraction = "balanced"

    def __init__(
        self,
        n: int,
        positivity_floor: float = 1e-14,
        feas_tol: float = 1e-10,
        balance_tol: float = 1e-12,
        balance_max_iter: int | None = None,
    ):
        super().__init__(n, positivity_floor, feas_tol)
        self.balance_tol = float(balance_tol)
        self.balance_max_iter = (
            default_max_iter(n) if balance_max_iter is None else int(balance_max_iter)
        )

    @property
    def dim(self) -> int:
        return (self.n - 1) ** 2

    # -- membership -------------------------------------------------------
    def check_point(self, X: np.ndarray) -> None:
        X = self._check_shape(X, "X")
        if np.min(X) <= self.positivity_floor:
            raise DomainError(
                f"point has entries below the positivity floor {self.positivity_floor:g}"
            )
        r = np.abs(X.sum(axis=1) - 1.0).max()
        c = np.abs(X.sum(axis=0) - 1.0).max()
        if max(r, c) > self.feas_tol:
            raise DomainError(
                f"row/column sums deviate from 1 by {max(r, c):g} > {self.feas_tol:g}"
            )

    def check_tangent(self, X: np.ndarray, Z: np.ndarray, tol: float = 1e-8) -> None:
        Z = self._check_shape(Z, "Z")
        r = np.abs(Z.sum(axis=1)).max()
        c = np.abs(Z.sum(axis=0)).max()
        if max(r, c) > tol:
            raise DomainError(f"tangent residual {max(r, c):g} > {tol:g}")

    # -- multiplier solve ---------------------------------------------------
    def _saddle_solver(self, X: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """Factor the null-deflated saddle matrix once; solve many rhs.

        The rank-one shift q q^T with q = (1, -1)/sqrt(2n) moves the null
        eigenvalue to one and leaves the solution on rhs orthogonal to q
        (every consistent rhs here) unchanged, in the minimum-norm gauge.
        """
        n = self.n
        B = np.empty((2 * n, 2 * n))
        B[:n, :n] = np.eye(n)
        B[:n, n:] = X
        B[n:, :n] = X.T
        B[n:, n:] = np.eye(n)
        shift = 1.0 / (2 * n)
        B[:n, :n] += shift
        B[:n, n:] -= shift
        B[n:, :n] -= shift
        B[n:, n:] += shift
        try:
            factor = scipy.linalg.cho_factor(B)
        except scipy.linalg.LinAlgError as err:
            raise NumericalError(f"saddle factorization failed: {err}") from err
        return lambda rhs: scipy.linalg.cho_solve(factor, rhs)

    def projection_multipliers(
        self, X: np.ndarray, Z: np.ndarray, solver=None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Minimum-norm multiplier pair (u, v) of the saddle system for Z.

        Any solution shifted along (1, -1) is equally valid; the minimum-norm
        representative is returned because it is deterministic and testable.
        """
        X = self._check_shape(X, "X")
        Z = self._check_shape(Z, "Z")
        n = self.n
        solve = self._saddle_solver(X) if solver is None else solver
        rhs = np.concatenate([Z.sum(axis=1), Z.sum(axis=0)])
        uv = solve(rhs)
        u, v = uv[:n], uv[n:]
        res = max(
            np.abs(u + X @ v - Z.sum(axis=1)).max(),
            np.abs(X.T @ u + v - Z.sum(axis=0)).max(),
        )
        scale = max(1.0, float(np.linalg.norm(Z)))
        if res > 1e-8 * scale:
            raise NumericalError(
                f"multiplier solve residual {res:g} exceeds 1e-8 * ||Z||",
                residual=float(res),
            )
        return u, v

    def tangent_projector(self, X: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        X = self._check_shape(X, "X")
        solver = self._saddle_solver(X)

        def project(Z: np.ndarray) -> np.ndarray:
            u, v = self.projection_multipliers(X, Z, solver=solver)
            return Z - (u[:, None] + v[None, :]) * X

        return project

    # -- retractions ------------------------------------------------------
    def retract(self, X, xi, kind: str | None = None) -> np.ndarray:
        kind = self._resolve_kind(kind)
        if kind == "canonical":
            return self.retract_canonical(X, xi)
        return self.retract_balanced(X, xi)

    def retract_canonical(self, X: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Additive step X + xi; valid only while it stays entrywise positive."""
        Y = X + xi
        if np.min(Y) <= self.positivity_floor:
            raise StepTooLargeError(
                "canonical retraction left the positive region; shrink the step"
            )
        return Y

    def _scaled_exponential_update(self, X: np.ndarray, xi: np.ndarray) -> np.ndarray:
        E = xi / X
        if np.max(np.abs(E)) > EXP_CLIP:
            warnings.warn(
                "retraction exponent clipped; step is far outside the "
                "line-search regime",
                RuntimeWarning,
                stacklevel=3,
            )
            E = np.clip(E, -EXP_CLIP, EXP_CLIP)
        return X * np.exp(E)

    def retract_balanced(self, X: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Multiplicative retraction: rebalance X * exp(xi / X)."""
        Y = self._scaled_exponential_update(X, xi)
        B = sinkhorn_knopp(
            Y, tol=self.balance_tol, max_iter=self.balance_max_iter
        ).balanced
        if np.min(B) <= self.positivity_floor:
            raise StepTooLargeError(
                "balanced retraction landed at the numerical boundary; "
                "shrink the step"
            )
        return B

    # -- gradient/Hessian ---------------------------------------------------
    def complement_pinv(self, X: np.ndarray) -> np.ndarray:
        """Pseudo-inverse of I - X X^T with the known null direction deflated.

        Identical to the spectral pseudo-inverse for points on the manifold
        (the null space is spanned by the all-ones vector), but computed by
        a positive definite solve, which stays accurate when the iterate
        satisfies the manifold equalities only to round-off.
        """
        X = self._check_shape(X, "X")
        n = self.n
        ones_block = np.full((n, n), 1.0 / n)
        M = np.eye(n) - X @ X.T + ones_block
        try:
            factor = scipy.linalg.cho_factor(M)
        except scipy.linalg.LinAlgError as err:
            raise NumericalError(f"complement factorization failed: {err}") from err
        return scipy.linalg.cho_solve(factor, np.eye(n)) - ones_block

    def complement_pinv_eig(self, X: np.ndarray) -> np.ndarray:
        """Spectral pseudo-inverse of I - X X^T (cross-validation route).

        Eigenvalues at or below n * eps * max eigenvalue are treated as
        zero; only meaningful on points satisfying the manifold equalities
        to machine precision.
        """
        X = self._check_shape(X, "X")
        M = np.eye(self.n) - X @ X.T
        w, V = scipy.linalg.eigh(M)
        return _sym_pinv_from_eigh(w, V, rank_floor=self.n * np.finfo(float).eps)

    def complement_pinv_rate(self, X: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Directional derivative of the pseudo-inverse along the tangent xi."""
        E = self.complement_pinv(X)
        return E @ (X @ xi.T + xi @ X.T) @ E

    def _hessian_pieces(self, X: np.ndarray, egrad: np.ndarray):
        X = self._check_shape(X, "X")
        egrad = self._check_shape(egrad, "egrad")
        project = self.tangent_projector(X)
        E = self.complement_pinv(X)
        g = egrad * X
        s = (g - X @ g.T).sum(axis=1)
        u = E @ s
        v = g.sum(axis=0) - X.T @ u
        d = g - (u[:, None] + v[None, :]) * X
        return X, egrad, project, E, g, s, u, v, d

    def _hessian_apply(self, pieces, ehess_xi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        X, egrad, project, E, g, s, u, v, d = pieces
        gd = ehess_xi * X + egrad * xi
        # derivative of the multiplier pair along xi; the first term is the
        # pseudo-inverse perturbation E (X xi^T + xi X^T) E applied to s
        ud = E @ ((X @ xi.T + xi @ X.T) @ (E @ s)) + E @ (
            (gd - xi @ g.T - X @ gd.T).sum(axis=1)
        )
        vd = gd.sum(axis=0) - xi.T @ u - X.T @ ud
        dd = (
            gd
            - (ud[:, None] + vd[None, :]) * X
            - (u[:, None] + v[None, :]) * xi
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
        # draws whose balancing stalls are rejected and redrawn
        for _ in range(50):
            A = rng.uniform(size=(self.n, self.n))
            try:
                return sinkhorn_knopp(
                    A, tol=self.balance_tol, max_iter=self.balance_max_iter
                ).balanced
            except BalanceConvergenceError:
                continue
        raise BalanceConvergenceError("no balanceable random draw in 50 attempts")

    def random_tangent(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.project_tangent(X, rng.standard_normal((self.n, self.n)))
