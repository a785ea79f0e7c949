"""Invariant suites behind the `check` subcommand.

Each suite draws random points/vectors, evaluates a set of residuals
against their documented tolerances, and reports one CheckResult per
(check, manifold, size) cell.  The suites mirror the contracts the test
suite enforces; the CLI exposes them so a built artifact can self-verify
without a test harness.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import make_manifold
from .balancing import dad_balance, sinkhorn_knopp
from .core import fd_directional_derivative, fisher_inner
from .problems import (
    ConvexClusterProblem,
    LowRankDecompProblem,
    convex_cluster_objective,
    denoise_objective,
    lowrank_decomp_objective,
    make_denoise_instance,
)

MANIFOLD_TAGS = ("ds", "sym", "psd")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    worst: float
    tol: float


def _fit_slope(ts, es) -> float:
    return float(np.polyfit(np.log(np.asarray(ts)), np.log(np.asarray(es)), 1)[0])


def _bound_check(results, suite, name, worst, tol):
    results.append(CheckResult(suite, name, bool(worst <= tol), float(worst), tol))


def _lower_check(results, suite, name, value, bound):
    results.append(CheckResult(suite, name, bool(value >= bound), float(value), bound))


def geometry_suite(
    ns=(2, 3, 5, 10, 20), draws: int = 20, seed: int = 0, breach: bool = False
) -> list[CheckResult]:
    """Tangency, projection, retraction, gradient and Hessian invariants."""
    results: list[CheckResult] = []
    rng = np.random.default_rng(seed)
    scale = 0.0 if breach else 1.0
    ts = (1e-2, 1e-3, 1e-4)

    for tag in MANIFOLD_TAGS:
        worst = {
            "tangency": 0.0,
            "idempotence": 0.0,
            "orthogonality": 0.0,
            "centering": 0.0,
            "metric-positivity": np.inf,
            "grad-identity": 0.0,
            "hess-selfadj": 0.0,
            "hess-fd": 0.0,
        }
        slope_min = np.inf
        for n in ns:
            M = make_manifold(tag, n, balance_max_iter=20000)
            prob, _ = make_denoise_instance(M, rng)
            obj = denoise_objective(prob)
            for _ in range(draws):
                X = M.random_point(rng)
                Z = rng.standard_normal((n, n))
                if tag != "ds":
                    Z = 0.5 * (Z + Z.T)
                proj = M.tangent_projector(X)
                xi = proj(Z)
                eta = M.random_tangent(X, rng)
                nx, ne = M.norm(X, xi), M.norm(X, eta)

                t_res = max(np.abs(xi.sum(axis=1)).max(), np.abs(xi.sum(axis=0)).max())
                worst["tangency"] = max(worst["tangency"], t_res)
                worst["idempotence"] = max(
                    worst["idempotence"], float(np.max(np.abs(proj(xi) - xi)))
                )
                orth = abs(fisher_inner(X, Z - xi, eta))
                worst["orthogonality"] = max(
                    worst["orthogonality"],
                    orth / max(1.0, np.linalg.norm(Z) * ne),
                )
                if nx > 0:
                    worst["metric-positivity"] = min(
                        worst["metric-positivity"], fisher_inner(X, xi, xi)
                    )

                for kind in M.retraction_kinds:
                    c = np.max(np.abs(M.retract(X, np.zeros_like(X), kind=kind) - X))
                    worst["centering"] = max(worst["centering"], float(c))

                # probe directions scaled so every t in the grid keeps the
                # canonical step strictly inside the positive region
                xmin = float(np.min(X))
                scale_r = min(
                    20.0 * xmin / max(np.max(np.abs(xi)), 1e-300),
                    1.0 / max(np.linalg.norm(xi), 1e-300),
                )
                xir = xi * scale_r
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    for kind in M.retraction_kinds:
                        es = [
                            np.linalg.norm(
                                (M.retract(X, t * xir, kind=kind) - X) / t - xir
                            )
                            for t in ts
                        ]
                        # fit only when the whole curve sits above the
                        # noise floor of the retraction (balancing tol or
                        # round-off); a flat curve there means the map is
                        # first-order exact to measurement precision
                        floor = 100.0 * (
                            getattr(M, "balance_tol", 1e-14)
                            if kind == "balanced"
                            else 1e-14
                        )
                        if min(es) > floor:
                            slope_min = min(slope_min, _fit_slope(ts, es))
                xin = xi / max(nx, np.max(np.abs(xi)) / (1e3 * xmin), 1e-300)

                lhs = fisher_inner(X, M.riemannian_gradient(X, obj.egrad(X)), xin)
                rhs = fd_directional_derivative(obj.value, X, xin)
                worst["grad-identity"] = max(
                    worst["grad-identity"], abs(lhs - rhs) / max(1.0, abs(rhs))
                )

                etan = eta / max(ne, 1e-300)
                eg = obj.egrad(X)
                hop = M.hessian_operator(X, eg, obj.ehess_vec)
                Hxi, Heta = hop(xin), hop(etan)
                sa = abs(fisher_inner(X, Hxi, etan) - fisher_inner(X, xin, Heta))
                worst["hess-selfadj"] = max(worst["hess-selfadj"], sa / 2.0)

                h = 1e-6
                gp = M.riemannian_gradient(X + h * xin, obj.egrad(X + h * xin))
                gm = M.riemannian_gradient(X - h * xin, obj.egrad(X - h * xin))
                g0 = M.riemannian_gradient(X, eg)
                Hfd = M.project_tangent(
                    X, (gp - gm) / (2 * h) - 0.5 * (g0 * xin) / X
                )
                worst["hess-fd"] = max(
                    worst["hess-fd"],
                    np.linalg.norm(Hxi - Hfd) / max(1.0, np.linalg.norm(Hfd)),
                )

        _bound_check(results, "geometry", f"{tag}-tangency", worst["tangency"], scale * 1e-8)
        _bound_check(results, "geometry", f"{tag}-idempotence", worst["idempotence"], scale * 1e-10)
        _bound_check(results, "geometry", f"{tag}-orthogonality", worst["orthogonality"], scale * 1e-8)
        _bound_check(results, "geometry", f"{tag}-centering", worst["centering"], scale * 1e-12)
        _lower_check(results, "geometry", f"{tag}-metric-positivity", worst["metric-positivity"], 0.0 if not breach else np.inf)
        _lower_check(results, "geometry", f"{tag}-rigidity-slope", slope_min, 0.9 if not breach else np.inf)
        _bound_check(results, "geometry", f"{tag}-grad-identity", worst["grad-identity"], scale * 1e-5)
        _bound_check(results, "geometry", f"{tag}-hess-selfadj", worst["hess-selfadj"], scale * 1e-8)
        _bound_check(results, "geometry", f"{tag}-hess-fd", worst["hess-fd"], scale * 1e-4)
    return results


def cross_formula_suite(
    ns=(2, 3, 5, 10, 20), draws: int = 20, seed: int = 1, breach: bool = False
) -> list[CheckResult]:
    """Symmetric inputs agree through both tangent-projection formulas."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in ns:
        Mds = make_manifold("ds", n)
        Msym = make_manifold("sym", n)
        for _ in range(draws):
            X = Msym.random_point(rng)
            Z = rng.standard_normal((n, n))
            Z = 0.5 * (Z + Z.T)
            worst = max(
                worst,
                float(np.max(np.abs(Mds.project_tangent(X, Z) - Msym.project_tangent(X, Z)))),
            )
    results: list[CheckResult] = []
    _bound_check(results, "cross-formula", "ds-vs-sym-projection", worst, (0.0 if breach else 1.0) * 1e-8)
    return results


def pinv_perturbation_suite(
    ns=(5, 10), draws: int = 5, seed: int = 2, breach: bool = False
) -> list[CheckResult]:
    """First-order pseudo-inverse perturbation is accurate to O(t^2)."""
    rng = np.random.default_rng(seed)
    ts = (1e-2, 1e-3, 1e-4)
    slope_min = np.inf
    for n in ns:
        M = make_manifold("ds", n)
        for _ in range(draws):
            X = M.random_point(rng)
            xi = M.random_tangent(X, rng)
            xi = xi / M.norm(X, xi)
            E = M.complement_pinv(X)
            Ed = M.complement_pinv_rate(X, xi)
            errs = [
                np.linalg.norm(M.complement_pinv(X + t * xi) - (E + t * Ed)) for t in ts
            ]
            slope_min = min(slope_min, _fit_slope(ts, errs))
    results: list[CheckResult] = []
    _lower_check(results, "pinv-perturbation", "slope", slope_min, np.inf if breach else 1.8)
    return results


def balancing_suite(
    ns=(5, 20, 50, 200), draws: int = 3, seed: int = 3, breach: bool = False
) -> list[CheckResult]:
    """Feasibility, idempotence, scale reconstruction, and the 2x2 example."""
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    tol = 1e-10
    worst_feas = 0.0
    worst_recon = 0.0
    worst_idem = 0.0
    for n in ns:
        for _ in range(draws):
            A = rng.uniform(0.05, 1.0, size=(n, n))
            res = sinkhorn_knopp(A, tol=tol)
            B = res.balanced
            worst_feas = max(
                worst_feas,
                np.abs(B.sum(1) - 1).max(),
                np.abs(B.sum(0) - 1).max(),
            )
            recon = (res.left_scale[:, None] * A) * res.right_scale[None, :]
            worst_recon = max(worst_recon, float(np.max(np.abs(recon - B))))
            worst_idem = max(
                worst_idem, float(np.max(np.abs(sinkhorn_knopp(B, tol=tol).balanced - B)))
            )
            S = 0.5 * (A + A.T)
            resd = dad_balance(S, tol=tol)
            D = resd.balanced
            worst_feas = max(worst_feas, np.abs(D.sum(1) - 1).max(), float(np.max(np.abs(D - D.T))))
            recon_d = (resd.left_scale[:, None] * S) * resd.right_scale[None, :]
            worst_recon = max(worst_recon, float(np.max(np.abs(recon_d - D))))

    hand = np.array([[1.0, 2.0], [2.0, 1.0]])
    expect = np.array([[1.0, 2.0], [2.0, 1.0]]) / 3.0
    hand_err = max(
        float(np.max(np.abs(sinkhorn_knopp(hand, tol=1e-12).balanced - expect))),
        float(np.max(np.abs(dad_balance(hand, tol=1e-12).balanced - expect))),
    )
    scale = 0.0 if breach else 1.0
    _bound_check(results, "balancing", "feasibility", worst_feas, scale * tol)
    _bound_check(results, "balancing", "scale-reconstruction", worst_recon, scale * 1e-12)
    _bound_check(results, "balancing", "idempotence", worst_idem, scale * tol)
    _bound_check(results, "balancing", "hand-example", hand_err, scale * 1e-10)
    return results


def gradient_certification_suite(
    seed: int = 4, breach: bool = False
) -> list[CheckResult]:
    """Finite-difference certification of every analytic objective gradient."""
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    scale = 0.0 if breach else 1.0

    def fd_rel(M, obj, X, xi):
        lhs = fisher_inner(X, M.riemannian_gradient(X, obj.egrad(X)), xi)
        rhs = fd_directional_derivative(obj.value, X, xi)
        return abs(lhs - rhs) / max(1.0, abs(rhs))

    n = 8
    worst = 0.0
    for tag in MANIFOLD_TAGS:
        M = make_manifold(tag, n)
        prob, _ = make_denoise_instance(M, rng)
        obj = denoise_objective(prob)
        for _ in range(5):
            X = M.random_point(rng)
            xi = M.random_tangent(X, rng)
            xi /= M.norm(X, xi)
            worst = max(worst, fd_rel(M, obj, X, xi))
    _bound_check(results, "fd-certification", "denoise", worst, scale * 1e-6)

    A = np.abs(rng.uniform(size=(n, n)))
    A = 0.5 * (A + A.T)
    worst = 0.0
    for form, tag in (("sym", "sym"), ("ds", "ds"), ("psd", "psd")):
        M = make_manifold(tag, n)
        obj = convex_cluster_objective(ConvexClusterProblem(A, formulation=form))
        for _ in range(5):
            X = M.random_point(rng)
            xi = M.random_tangent(X, rng)
            xi /= M.norm(X, xi)
            worst = max(worst, fd_rel(M, obj, X, xi))
    _bound_check(results, "fd-certification", "convex-cluster", worst, scale * 1e-4)

    M = make_manifold("sym", n)
    obj = lowrank_decomp_objective(LowRankDecompProblem(A))
    worst = 0.0
    for _ in range(20):
        X = M.random_point(rng)
        xi = M.random_tangent(X, rng)
        xi /= M.norm(X, xi)
        worst = max(worst, fd_rel(M, obj, X, xi))
    _bound_check(results, "fd-certification", "lowrank-decomp", worst, scale * 1e-5)
    return results


SUITES = {
    "geometry": geometry_suite,
    "cross-formula": cross_formula_suite,
    "pinv-perturbation": pinv_perturbation_suite,
    "balancing": balancing_suite,
    "fd-certification": gradient_certification_suite,
}


def run_suites(names=None, breach: bool = False) -> list[CheckResult]:
    names = list(SUITES) if names is None else list(names)
    results: list[CheckResult] = []
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}; available: {sorted(SUITES)}")
        results.extend(SUITES[name](breach=breach))
    return results
