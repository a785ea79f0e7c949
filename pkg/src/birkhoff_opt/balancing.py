"""Diagonal matrix balancing: Sinkhorn-Knopp and its symmetric (DAD) variant.

These realize the projections onto doubly stochastic and symmetric doubly
stochastic matrices used by the balanced retractions.  Both algorithms act
on entrywise positive inputs, where convergence of the scaling fixed point
is guaranteed; the residual is the infinity norm of the row/column sum
deviation from one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BalanceConvergenceError, DomainError, _as_square


@dataclass(frozen=True)
class BalanceResult:
    """Balanced matrix together with the diagonal scalings that produced it.

    ``balanced == diag(left_scale) @ A @ diag(right_scale)`` up to round-off;
    for the symmetric variant the two scale vectors coincide.  For Sinkhorn
    the left scale is normalized so its first entry equals one.
    """

    balanced: np.ndarray
    left_scale: np.ndarray
    right_scale: np.ndarray
    iterations: int
    residual: float


def default_max_iter(n: int) -> int:
    """Iteration cap 10 * n * ceil(log(n) + 1), floored for small sizes.

    The floor matters for the damped symmetric scaling, whose linear rate
    (1 + |lambda_min|)/2 does not improve as n shrinks.
    """
    return max(300, 10 * n * math.ceil(math.log(n) + 1.0))


def _feasibility_residual(B: np.ndarray) -> float:
    r = np.abs(B.sum(axis=1) - 1.0).max()
    c = np.abs(B.sum(axis=0) - 1.0).max()
    return float(max(r, c))


def _check_positive_square(A: np.ndarray, name: str) -> np.ndarray:
    A = _as_square(A, name)
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} contains non-finite entries")
    if np.min(A) <= 0.0:
        raise DomainError(f"{name} must be entrywise positive")
    return A


def sinkhorn_knopp(
    A: np.ndarray, tol: float = 1e-10, max_iter: int | None = None
) -> BalanceResult:
    """Balance a positive matrix to doubly stochastic form.

    Classical alternating row/column normalization.  Returns the balanced
    matrix and the two positive diagonal scale vectors; raises
    BalanceConvergenceError (carrying the best iterate) if the residual is
    still above ``tol`` after ``max_iter`` sweeps.
    """
    A = _check_positive_square(A, "A")
    n = A.shape[0]
    if max_iter is None:
        max_iter = default_max_iter(n)

    d1 = np.ones(n)
    d2 = np.ones(n)
    B = A.copy()
    res = _feasibility_residual(B)
    it = 0
    while res > tol and it < max_iter:
        r = B.sum(axis=1)
        d1 /= r
        B /= r[:, None]
        c = B.sum(axis=0)
        d2 /= c
        B /= c[None, :]
        res = _feasibility_residual(B)
        it += 1

    # gauge fix: scaling pairs (c*d1, d2/c) are equivalent
    scale = d1[0]
    d1 = d1 / scale
    d2 = d2 * scale

    result = BalanceResult(B, d1, d2, it, res)
    if res > tol:
        raise BalanceConvergenceError(
            f"Sinkhorn did not reach tol={tol:g} in {max_iter} sweeps "
            f"(residual {res:g})",
            result=result,
        )
    return result


def dad_balance(
    A: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    symmetry_tol: float = 1e-12,
) -> BalanceResult:
    """Balance a symmetric positive matrix to symmetric doubly stochastic form.

    Uses the damped scaling fixed point d <- sqrt(d / (A d)), whose geometric
    mean step avoids the oscillation of the undamped iteration.  The output
    diag(d) A diag(d) is symmetric by construction.
    """
    A = _check_positive_square(A, "A")
    if np.max(np.abs(A - A.T)) > symmetry_tol:
        raise DomainError("dad_balance requires a symmetric input")
    n = A.shape[0]
    if max_iter is None:
        max_iter = default_max_iter(n)

    d = 1.0 / np.sqrt(A.sum(axis=1))
    it = 0

    def residual(dv):
        return float(np.abs(dv * (A @ dv) - 1.0).max())

    # A already balanced: keep the exact input and unit scales
    if _feasibility_residual(A) <= tol:
        return BalanceResult(A.copy(), np.ones(n), np.ones(n), 0, _feasibility_residual(A))

    res = residual(d)
    while res > tol and it < max_iter:
        d = np.sqrt(d / (A @ d))
        res = residual(d)
        it += 1

    B = (d[:, None] * A) * d[None, :]
    B = 0.5 * (B + B.T)
    result = BalanceResult(B, d.copy(), d.copy(), it, _feasibility_residual(B))
    if result.residual > tol:
        raise BalanceConvergenceError(
            f"DAD balancing did not reach tol={tol:g} in {max_iter} iterations "
            f"(residual {result.residual:g})",
            result=result,
        )
    return result
