"""Riemannian optimization loops generic over the manifold interface.

All methods share the same skeleton: compute the Riemannian gradient,
choose a tangent search direction, obtain a step (Armijo backtracking for
the line-search methods, a trust-region ratio test for the second-order
one), retract, repeat.  Inner products and norms are always the Fisher
ones at the current iterate; directions from the previous iterate are
transported by projecting onto the new tangent space.

The retraction policy "auto" uses the rebalancing retraction while steps
are large relative to the smallest entry of the iterate and switches to
the cheap additive retraction once alpha * ||xi||_X < 0.1 * min(X); on the
definite manifold it always uses the matrix-exponential retraction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .core import (
    BalanceConvergenceError,
    Manifold,
    NumericalError,
    Objective,
    RetractionFailureError,
    StepTooLargeError,
)

# exceptions a retraction may raise on an oversized step; solvers respond by
# shrinking the step or the radius rather than aborting
_RETRACT_ERRORS = (StepTooLargeError, RetractionFailureError, BalanceConvergenceError)


class SolverStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    LINESEARCH_FAILURE = "linesearch_failure"
    RETRACTION_FAILURE = "retraction_failure"


class LineSearchError(RuntimeError):
    """Backtracking exhausted its budget without an acceptable step."""

    def __init__(self, message: str, retraction_only: bool = False):
        super().__init__(message)
        self.retraction_only = retraction_only


@dataclass(frozen=True)
class ArmijoOptions:
    c1: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 60
    adaptive: bool = True  # warm-start the next search from the last step


@dataclass(frozen=True)
class CGOptions:
    beta_rule: str = "polak-ribiere"  # or "fletcher-reeves"
    restart_period: int = 0  # 0: restart every dim iterations


@dataclass(frozen=True)
class NewtonOptions:
    max_inner: int = 0  # 0: 2 * dim, capped at 500
    forcing: float = 0.5  # inner tol = min(forcing, sqrt(|g|)) * |g|


@dataclass(frozen=True)
class TrustRegionOptions:
    initial_radius: float = 0.0  # 0: sqrt(dim)/8
    max_radius: float = 0.0  # 0: sqrt(dim)
    accept_ratio: float = 0.1
    shrink_threshold: float = 0.25
    expand_threshold: float = 0.75
    shrink_factor: float = 0.25
    expand_factor: float = 2.0
    max_inner: int = 0  # 0: 2 * dim, capped at 500
    kappa: float = 0.1
    theta: float = 1.0
    rho_regularization: float = 1e3


@dataclass(frozen=True)
class SolverOptions:
    grad_tol: float = 1e-6
    max_iter: int = 1000
    armijo: ArmijoOptions = field(default_factory=ArmijoOptions)
    wolfe_c2: float = 0.9
    cg: CGOptions = field(default_factory=CGOptions)
    newton: NewtonOptions = field(default_factory=NewtonOptions)
    tr: TrustRegionOptions = field(default_factory=TrustRegionOptions)
    retraction: str = "auto"  # auto | canonical | balanced | expm
    keep_iterates: bool = False
    validate_points: bool = False

    def __post_init__(self):
        if not (0.0 < self.armijo.c1 < self.wolfe_c2 < 1.0):
            raise ValueError(
                f"need 0 < c1 < c2 < 1, got c1={self.armijo.c1}, c2={self.wolfe_c2}"
            )
        if self.grad_tol <= 0.0 or self.max_iter < 1:
            raise ValueError("grad_tol must be positive and max_iter at least 1")
        if not (0.0 < self.armijo.backtrack < 1.0):
            raise ValueError("backtrack factor must lie in (0, 1)")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    cost: float
    grad_norm: float
    step: float
    elapsed_s: float


@dataclass
class SolverReport:
    final_point: np.ndarray
    status: SolverStatus
    trace: list[TraceRecord]
    iterates: Optional[list[np.ndarray]] = None
    extras: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return self.trace[-1].iteration if self.trace else 0

    @property
    def final_cost(self) -> float:
        return self.trace[-1].cost if self.trace else float("nan")

    @property
    def final_grad_norm(self) -> float:
        return self.trace[-1].grad_norm if self.trace else float("nan")

    def grad_norms(self) -> np.ndarray:
        return np.array([t.grad_norm for t in self.trace])

    def costs(self) -> np.ndarray:
        return np.array([t.cost for t in self.trace])


# ---------------------------------------------------------------------------
# retraction policy


def _retract_step(M: Manifold, X, xi, alpha: float, kind: str):
    """Retract alpha * xi at X honoring the configured retraction policy."""
    step = alpha * xi if alpha != 1.0 else xi
    if kind != "auto":
        return M.retract(X, step, kind=kind)
    if M.tag == "psd":
        return M.retract(X, step, kind="expm")
    if alpha * M.norm(X, xi) < 0.1 * float(np.min(X)):
        try:
            return M.retract(X, step, kind="canonical")
        except StepTooLargeError:
            pass
    return M.retract(X, step, kind="balanced")


def armijo_linesearch(
    M: Manifold,
    X: np.ndarray,
    objective: Objective,
    xi: np.ndarray,
    options: SolverOptions,
    f_x: float | None = None,
    slope: float | None = None,
    alpha0: float | None = None,
    check_wolfe: bool = False,
):
    """Backtracking line search enforcing the sufficient-decrease condition.

    Requires a descent direction (<grad, xi>_X < 0).  Returns a tuple
    (alpha, X_new, f_new, backtracks, wolfe_ok); ``wolfe_ok`` is None unless
    ``check_wolfe`` is set, in which case the strong curvature condition
    |<grad(X_new), T xi>| <= c2 |<grad(X), xi>| is evaluated as a diagnostic.
    Raises LineSearchError when the backtracking budget is exhausted; a
    too-large retraction step just triggers an extra backtrack.
    """
    arm = options.armijo
    if f_x is None:
        f_x = objective.value(X)
    if slope is None:
        g = M.riemannian_gradient(X, objective.egrad(X))
        slope = M.inner(X, g, xi)
    if not slope < 0.0:
        raise ValueError(f"line search needs a descent direction, slope={slope:g}")

    alpha = arm.initial_step if alpha0 is None else alpha0
    retraction_failures = 0
    for backtracks in range(arm.max_backtracks + 1):
        try:
            X_new = _retract_step(M, X, xi, alpha, options.retraction)
        except _RETRACT_ERRORS:
            retraction_failures += 1
            alpha *= arm.backtrack
            continue
        f_new = objective.value(X_new)
        if f_new - f_x <= arm.c1 * alpha * slope:
            wolfe_ok = None
            if check_wolfe:
                g_new = M.riemannian_gradient(X_new, objective.egrad(X_new))
                xi_t = M.project_tangent(X_new, xi)
                wolfe_ok = bool(
                    abs(M.inner(X_new, g_new, xi_t)) <= options.wolfe_c2 * abs(slope)
                )
            return alpha, X_new, f_new, backtracks, wolfe_ok
        alpha *= arm.backtrack
    raise LineSearchError(
        f"no acceptable step within {arm.max_backtracks} backtracks",
        retraction_only=retraction_failures > arm.max_backtracks // 2,
    )


# ---------------------------------------------------------------------------
# first-order methods


def _linesearch_loop(
    M: Manifold,
    objective: Objective,
    X0: np.ndarray,
    options: SolverOptions,
    use_cg: bool,
) -> SolverReport:
    t0 = time.perf_counter()
    X = np.array(X0, dtype=float)
    if options.validate_points:
        M.check_point(X)
    trace: list[TraceRecord] = []
    iterates = [X.copy()] if options.keep_iterates else None
    extras: dict = {"restarts": 0}

    restart_period = options.cg.restart_period if use_cg else 1
    if restart_period <= 0:
        restart_period = max(M.dim, 1)

    proj = M.tangent_projector(X)
    f = objective.value(X)
    g = M.riemannian_gradient(X, objective.egrad(X), projector=proj)
    gnorm2 = M.inner(X, g, g)
    d = -g
    step_taken = 0.0
    alpha_prev: float | None = None
    status = SolverStatus.MAX_ITER

    for it in range(options.max_iter + 1):
        gnorm = float(np.sqrt(max(gnorm2, 0.0)))
        trace.append(
            TraceRecord(it, float(f), gnorm, step_taken, time.perf_counter() - t0)
        )
        if gnorm < options.grad_tol:
            status = SolverStatus.CONVERGED
            break
        if it == options.max_iter:
            break

        restart = (it % restart_period == 0) if use_cg else True
        if restart:
            d = -g
        slope = M.inner(X, d, g)
        if slope >= 0.0:  # non-descent CG direction: fall back to steepest
            d = -g
            slope = -gnorm2
            extras["restarts"] += 1

        alpha0 = None
        if options.armijo.adaptive and alpha_prev is not None:
            alpha0 = min(options.armijo.initial_step, 2.0 * alpha_prev)
        try:
            alpha, X_new, f_new, _, _ = armijo_linesearch(
                M, X, objective, d, options, f_x=f, slope=slope, alpha0=alpha0
            )
        except LineSearchError as err:
            status = (
                SolverStatus.RETRACTION_FAILURE
                if err.retraction_only
                else SolverStatus.LINESEARCH_FAILURE
            )
            break

        try:
            proj_new = M.tangent_projector(X_new)
            g_new = M.riemannian_gradient(
                X_new, objective.egrad(X_new), projector=proj_new
            )
        except NumericalError:
            status = SolverStatus.RETRACTION_FAILURE
            break
        gnorm2_new = M.inner(X_new, g_new, g_new)

        if use_cg:
            if options.cg.beta_rule == "fletcher-reeves":
                beta = gnorm2_new / gnorm2
            else:  # Polak-Ribiere with nonnegativity safeguard
                g_old_t = proj_new(g)
                beta = M.inner(X_new, g_new, g_new - g_old_t) / gnorm2
                beta = max(0.0, beta)
            d = -g_new + beta * proj_new(d)

        X, proj, f, g, gnorm2 = X_new, proj_new, f_new, g_new, gnorm2_new
        step_taken = alpha
        alpha_prev = alpha
        if options.validate_points:
            M.check_point(X)
        if iterates is not None:
            iterates.append(X.copy())

    return SolverReport(X, status, trace, iterates, extras)


def gradient_descent(
    M: Manifold, objective: Objective, X0: np.ndarray, options: SolverOptions | None = None
) -> SolverReport:
    """Armijo line-search steepest descent."""
    return _linesearch_loop(M, objective, X0, options or SolverOptions(), use_cg=False)


def conjugate_gradient(
    M: Manifold, objective: Objective, X0: np.ndarray, options: SolverOptions | None = None
) -> SolverReport:
    """Nonlinear conjugate gradient with projection transport.

    The direction resets to steepest descent whenever it fails to be a
    descent direction or at the configured restart period; with a restart
    period of one the method reduces to gradient descent.
    """
    return _linesearch_loop(M, objective, X0, options or SolverOptions(), use_cg=True)


# ---------------------------------------------------------------------------
# second-order methods


def _tangent_cg(
    M: Manifold,
    X: np.ndarray,
    hess: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    tol: float,
    max_inner: int,
):
    """Matrix-free CG for hess[v] = b under the Fisher inner product at X.

    Stops early on negative curvature (returning the best iterate so far,
    or b itself on the first step).  Returns (v, residual_norm, iters).
    """
    v = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = M.inner(X, r, r)
    if np.sqrt(rr) <= tol:
        return v, float(np.sqrt(rr)), 0
    best_v, best_rr = v, rr
    for i in range(1, max_inner + 1):
        Hp = hess(p)
        pHp = M.inner(X, p, Hp)
        if pHp <= 0.0:
            if i == 1:
                return b.copy(), float("nan"), i
            return best_v, float(np.sqrt(best_rr)), i
        alpha = rr / pHp
        v = v + alpha * p
        r = r - alpha * Hp
        rr_new = M.inner(X, r, r)
        if rr_new < best_rr:
            best_v, best_rr = v, rr_new
        if np.sqrt(rr_new) <= tol:
            return v, float(np.sqrt(rr_new)), i
        if rr_new > 4.0 * best_rr:  # numerical breakdown near the noise floor
            return best_v, float(np.sqrt(best_rr)), i
        p = r + (rr_new / rr) * p
        rr = rr_new
    return best_v, float(np.sqrt(best_rr)), max_inner


def newton(
    M: Manifold, objective: Objective, X0: np.ndarray, options: SolverOptions | None = None
) -> SolverReport:
    """Riemannian Newton iteration with inexact inner solves.

    Each step solves hess[xi] = -grad by tangent-space conjugate gradient to
    a forcing tolerance min(c, sqrt(|g|)) |g|, falling back to the steepest
    descent direction when the solve stalls or yields a non-descent
    direction, then takes an Armijo-damped step (unit step tried first).
    """
    options = options or SolverOptions()
    if objective.ehess_vec is None:
        raise ValueError("newton requires an objective with ehess_vec")
    t0 = time.perf_counter()
    X = np.array(X0, dtype=float)
    if options.validate_points:
        M.check_point(X)
    trace: list[TraceRecord] = []
    iterates = [X.copy()] if options.keep_iterates else None
    inner_log: list[dict] = []
    max_inner = options.newton.max_inner
    if max_inner <= 0:
        max_inner = min(2 * M.dim, 500)

    step_taken = 0.0
    status = SolverStatus.MAX_ITER
    for it in range(options.max_iter + 1):
        try:
            proj = M.tangent_projector(X)
            eg = objective.egrad(X)
            g = M.riemannian_gradient(X, eg, projector=proj)
        except NumericalError:
            status = SolverStatus.RETRACTION_FAILURE
            break
        f = objective.value(X)
        gnorm = M.norm(X, g)
        trace.append(
            TraceRecord(it, float(f), gnorm, step_taken, time.perf_counter() - t0)
        )
        if gnorm < options.grad_tol:
            status = SolverStatus.CONVERGED
            break
        if it == options.max_iter:
            break

        hess = M.hessian_operator(X, eg, objective.ehess_vec)
        inner_tol = min(options.newton.forcing, np.sqrt(gnorm)) * gnorm
        xi, resid, inner_iters = _tangent_cg(M, X, hess, -g, inner_tol, max_inner)
        slope = M.inner(X, xi, g)
        fallback = not slope < -1e-16 * (1.0 + abs(f))
        if fallback:
            xi = -g
            slope = -gnorm**2
        inner_log.append(
            {"iters": inner_iters, "residual": resid, "fallback": fallback}
        )

        try:
            alpha, X, f, _, _ = armijo_linesearch(
                M, X, objective, xi, options, f_x=f, slope=slope
            )
        except LineSearchError as err:
            status = (
                SolverStatus.RETRACTION_FAILURE
                if err.retraction_only
                else SolverStatus.LINESEARCH_FAILURE
            )
            break
        step_taken = alpha
        if options.validate_points:
            M.check_point(X)
        if iterates is not None:
            iterates.append(X.copy())

    return SolverReport(X, status, trace, iterates, {"inner": inner_log})


def _truncated_cg(
    M: Manifold,
    X: np.ndarray,
    hess: Callable[[np.ndarray], np.ndarray],
    g: np.ndarray,
    radius: float,
    opts: TrustRegionOptions,
    max_inner: int,
):
    """Steihaug-Toint truncated CG on the trust-region subproblem.

    Minimizes <g, v> + 0.5 <v, hess[v]> within ||v||_X <= radius.  Returns
    (v, Hv, hit_boundary, iters); Hv is hess applied to the returned v so
    the caller can evaluate the model decrease without extra applications.
    """
    v = np.zeros_like(g)
    Hv = np.zeros_like(g)
    r = g.copy()
    d = -r
    rr = M.inner(X, r, r)
    norm_r0 = np.sqrt(rr)
    target = norm_r0 * min(opts.kappa, norm_r0**opts.theta)
    best = (v, Hv)
    best_rr = rr

    def boundary_tau(v, d):
        dd = M.inner(X, d, d)
        vd = M.inner(X, v, d)
        vv = M.inner(X, v, v)
        disc = max(vd * vd + dd * (radius**2 - vv), 0.0)
        return (-vd + np.sqrt(disc)) / dd

    for i in range(1, max_inner + 1):
        Hd = hess(d)
        dHd = M.inner(X, d, Hd)
        if dHd <= 0.0:
            tau = boundary_tau(v, d)
            return v + tau * d, Hv + tau * Hd, True, i
        alpha = rr / dHd
        v_new = v + alpha * d
        if np.sqrt(M.inner(X, v_new, v_new)) >= radius:
            tau = boundary_tau(v, d)
            return v + tau * d, Hv + tau * Hd, True, i
        v = v_new
        Hv = Hv + alpha * Hd
        r = r + alpha * Hd
        rr_new = M.inner(X, r, r)
        if rr_new < best_rr:
            best, best_rr = (v, Hv), rr_new
        if np.sqrt(rr_new) <= target:
            return v, Hv, False, i
        if rr_new > 4.0 * best_rr:  # numerical breakdown near the noise floor
            return best[0], best[1], False, i
        d = -r + (rr_new / rr) * d
        rr = rr_new
    return best[0], best[1], False, max_inner


def trust_region(
    M: Manifold, objective: Objective, X0: np.ndarray, options: SolverOptions | None = None
) -> SolverReport:
    """Riemannian trust region with a truncated-CG subproblem solver.

    The first CG step dominates the Cauchy point, which provides the global
    convergence safeguard; rejected steps leave the iterate unchanged and
    shrink the radius.
    """
    options = options or SolverOptions()
    if objective.ehess_vec is None:
        raise ValueError("trust_region requires an objective with ehess_vec")
    tr = options.tr
    t0 = time.perf_counter()
    X = np.array(X0, dtype=float)
    if options.validate_points:
        M.check_point(X)
    radius = tr.initial_radius if tr.initial_radius > 0 else np.sqrt(M.dim) / 8.0
    max_radius = tr.max_radius if tr.max_radius > 0 else np.sqrt(M.dim)
    max_inner = tr.max_inner if tr.max_inner > 0 else min(2 * M.dim, 500)

    trace: list[TraceRecord] = []
    iterates = [X.copy()] if options.keep_iterates else None
    extras: dict = {"rejections": 0, "inner": []}
    proj = M.tangent_projector(X)
    eg = objective.egrad(X)
    g = M.riemannian_gradient(X, eg, projector=proj)
    f = objective.value(X)
    step_taken = 0.0
    status = SolverStatus.MAX_ITER

    for it in range(options.max_iter + 1):
        gnorm = M.norm(X, g)
        trace.append(
            TraceRecord(it, float(f), gnorm, step_taken, time.perf_counter() - t0)
        )
        if gnorm < options.grad_tol:
            status = SolverStatus.CONVERGED
            break
        if it == options.max_iter:
            break
        if radius < 1e-15:
            status = SolverStatus.RETRACTION_FAILURE
            break

        hess = M.hessian_operator(X, eg, objective.ehess_vec)
        v, Hv, hit_boundary, inner_iters = _truncated_cg(
            M, X, hess, g, radius, tr, max_inner
        )
        extras["inner"].append(inner_iters)
        model_dec = -(M.inner(X, g, v) + 0.5 * M.inner(X, v, Hv))

        try:
            X_new = _retract_step(M, X, v, 1.0, options.retraction)
        except _RETRACT_ERRORS:
            radius *= tr.shrink_factor
            extras["rejections"] += 1
            step_taken = 0.0
            continue

        f_new = objective.value(X_new)
        reg = np.finfo(float).eps * max(1.0, abs(f)) * tr.rho_regularization
        rho = (f - f_new + reg) / (model_dec + reg) if model_dec > 0 else -1.0
        step_norm = float(np.sqrt(max(M.inner(X, v, v), 0.0)))

        accept = rho > tr.accept_ratio and f_new <= f
        bundle = None
        if accept:
            try:
                proj_new = M.tangent_projector(X_new)
                eg_new = objective.egrad(X_new)
                g_new = M.riemannian_gradient(X_new, eg_new, projector=proj_new)
                bundle = (proj_new, eg_new, g_new)
            except NumericalError:
                # geometry is unusable at the proposed point (numerical
                # boundary); treat the step as rejected
                accept = False

        if not accept:
            radius *= tr.shrink_factor
            extras["rejections"] += 1
            step_taken = 0.0
            continue

        if rho < tr.shrink_threshold:
            radius *= tr.shrink_factor
        elif rho > tr.expand_threshold and hit_boundary:
            radius = min(tr.expand_factor * radius, max_radius)

        X, f = X_new, f_new
        proj, eg, g = bundle
        step_taken = step_norm
        if options.validate_points:
            M.check_point(X)
        if iterates is not None:
            iterates.append(X.copy())

    return SolverReport(X, status, trace, iterates, extras)


SOLVERS: dict[str, Callable] = {
    "gd": gradient_descent,
    "cg": conjugate_gradient,
    "newton": newton,
    "tr": trust_region,
}


def solve(
    M: Manifold,
    objective: Objective,
    X0: np.ndarray,
    solver: str,
    options: SolverOptions | None = None,
) -> SolverReport:
    """Dispatch to a solver by its short name (gd, cg, newton, tr)."""
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; expected one of {sorted(SOLVERS)}")
    return SOLVERS[solver](M, objective, X0, options)
