"""
Importance sampling for Gaussian expectations and the (R)QMC estimator.

The target is ``E[G(Z)]`` with ``Z ~ N(mu0, Sigma0)`` and ``G = exp(g)``.
Every proposal is a location-scale family ``z = c + L x``:

============  ==========  ================  ==============
plan          centre c    scale L           x distribution
============  ==========  ================  ==============
none          mu0         chol(Sigma0)      standard normal
odis          mode z*     chol(Sigma0)      standard normal
lapis         mode z*     chol(Sigma*)      standard normal
student_t     mode z*     chol(Sigma0)      iid t_nu
============  ==========  ================  ==============

``z*`` maximises ``H(z) = g(z) - (z - mu0)' Sigma0^{-1} (z - mu0) / 2`` and
``Sigma* = (-hess H(z*))^{-1}``. The transformed integrand ``f(x)`` is
``G(z)`` times the density ratio of target and proposal at ``z``; it is
assembled in log space and exponentiated once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from . import numkit
from .errors import DomainError, IntegrandOverflow, ModeNotFound
from .lattice import GeneratingVector, lattice_points
from .rkhs import WeightScheme

LOG_OVERFLOW = 700.0
PLAN_KINDS = ("none", "odis", "lapis", "student_t")


@dataclass
class GaussianProblem:
    """``E[exp(g(Z))]`` under ``Z ~ N(mean, cov)``.

    ``log_g`` maps an array of shape ``(..., d)`` to shape ``(...)``. Pass
    ``vectorized=False`` for a function of a single point. Missing
    derivatives fall back to central finite differences.
    """

    mean: np.ndarray
    cov: np.ndarray
    log_g: Callable
    grad_g: Optional[Callable] = None
    hess_g: Optional[Callable] = None
    name: str = "problem"
    vectorized: bool = True
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.cov.shape != (self.dim, self.dim):
            raise DomainError("covariance shape does not match the mean")
        self.chol = numkit.cholesky(self.cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def g(self, z):
        z = np.asarray(z, dtype=float)
        if self.vectorized:
            return self.log_g(z)
        if z.ndim == 1:
            return float(self.log_g(z))
        return np.apply_along_axis(lambda row: float(self.log_g(row)), -1, z)

    def G(self, z):
        return np.exp(self.g(z))

    def grad(self, z):
        z = np.asarray(z, dtype=float)
        if self.grad_g is not None:
            return np.asarray(self.grad_g(z), dtype=float)
        step = 1e-5 * (1.0 + np.abs(z))
        out = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = step[i]
            out[i] = (self.g(z + e) - self.g(z - e)) / (2.0 * step[i])
        return out

    def hess(self, z):
        z = np.asarray(z, dtype=float)
        if self.hess_g is not None:
            return np.asarray(self.hess_g(z), dtype=float)
        d = self.dim
        out = np.empty((d, d))
        if self.grad_g is not None:
            step = 1e-5 * (1.0 + np.abs(z))
            for i in range(d):
                e = np.zeros(d)
                e[i] = step[i]
                out[:, i] = (self.grad(z + e) - self.grad(z - e)) / (2.0 * step[i])
        else:
            # second differences of values need a coarser step
            step = 1e-4 * (1.0 + np.abs(z))
            f0 = self.g(z)
            for i in range(d):
                for j in range(i, d):
                    ei = np.zeros(d)
                    ej = np.zeros(d)
                    ei[i] = step[i]
                    ej[j] = step[j]
                    if i == j:
                        val = (self.g(z + ei) - 2.0 * f0 + self.g(z - ei)) / step[i] ** 2
                    else:
                        val = (self.g(z + ei + ej) - self.g(z + ei - ej)
                               - self.g(z - ei + ej) + self.g(z - ei - ej)) / (4.0 * step[i] * step[j])
                    out[i, j] = out[j, i] = val
        return 0.5 * (out + out.T)

    # H(z) = g(z) - quadratic form of the prior
    def log_target(self, z):
        r = solve_triangular(self.chol, np.asarray(z, dtype=float) - self.mean, lower=True)
        return float(self.g(z)) - 0.5 * float(r @ r)

    def log_target_grad(self, z):
        return self.grad(z) - numkit.spd_inverse(self.cov) @ (np.asarray(z) - self.mean)

    def log_target_hess(self, z):
        return self.hess(z) - numkit.spd_inverse(self.cov)


@dataclass
class ISPlan:
    """Resolved proposal; see the module docstring for the plan kinds.

    ``shift`` is ``chol(Sigma0)^{-1} (centre - mu0)`` and ``mix`` is
    ``chol(Sigma0)^{-1} L`` (``None`` when it is exactly the identity).
    """

    kind: str
    center: np.ndarray
    scale: np.ndarray
    dof: Optional[float] = None
    log_norm_const: float = 0.0
    shift: Optional[np.ndarray] = None
    mix: Optional[np.ndarray] = None
    mode_cov: Optional[np.ndarray] = None   # Sigma*, when computed
    newton: Optional[numkit.NewtonResult] = None

    @property
    def dim(self) -> int:
        return self.center.shape[0]


def find_mode(p: GaussianProblem, x0=None, tol: float = 1e-10, max_iter: int = 100):
    """Maximiser of ``H`` by damped Newton; raises :class:`ModeNotFound`."""
    prec = numkit.spd_inverse(p.cov)

    def h(z):
        return p.log_target(z)

    def grad(z):
        return p.grad(z) - prec @ (z - p.mean)

    def hess(z):
        return p.hess(z) - prec

    start = p.mean if x0 is None else x0
    res = numkit.newton_maximize(h, grad, hess, start, tol=tol, max_iter=max_iter)
    if not res.converged:
        raise ModeNotFound(f"Newton stalled for {p.name}: |grad| = {res.grad_norm:.3e} "
                           f"after {res.n_iter} iterations")
    return res


def laplace_covariance(p: GaussianProblem, z) -> np.ndarray:
    """``(Sigma0^{-1} - hess g(z))^{-1}``, computed as ``(I - Sigma0 hess g)^{-1} Sigma0``.

    The second form returns ``Sigma0`` bitwise when the Hessian vanishes.

    Raises
    ------
    NotPositiveDefinite
        When ``-hess H(z)`` is not positive definite.
    """
    hg = p.hess(z)
    neg_hess_h = numkit.spd_inverse(p.cov) - hg
    numkit.cholesky(0.5 * (neg_hess_h + neg_hess_h.T))
    cov = np.linalg.solve(np.eye(p.dim) - p.cov @ hg, p.cov)
    cov = 0.5 * (cov + cov.T)
    numkit.cholesky(cov)
    return cov


def _log_det_tri(low):
    return float(np.sum(np.log(np.diag(low))))


def _student_t_log_norm(nu: float) -> float:
    return float(numkit.student_t_log_pdf(0.0, nu))


def resolve_plan(p: GaussianProblem, kind: str, nu: Optional[float] = None,
                 t_scale: str = "prior", x0=None) -> ISPlan:
    """Build the proposal of the given kind.

    Parameters
    ----------
    kind : {"none", "odis", "lapis", "student_t"}
    nu : float, optional
        Degrees of freedom, required for ``student_t``.
    t_scale : {"prior", "laplace"}
        Scale of the t proposal: ``chol(Sigma0)`` or ``chol(Sigma*)``.
    """
    if kind not in PLAN_KINDS:
        raise DomainError(f"unknown plan {kind!r}; expected one of {PLAN_KINDS}")
    l0 = p.chol
    if kind == "none":
        return ISPlan("none", p.mean.copy(), l0, shift=np.zeros(p.dim))
    res = find_mode(p, x0)
    center = res.x
    mode_cov = None
    if kind == "lapis" or (kind == "student_t" and t_scale == "laplace"):
        mode_cov = laplace_covariance(p, center)
        scale = numkit.cholesky(mode_cov)
    elif kind == "student_t" and t_scale != "prior":
        raise DomainError(f"t_scale must be 'prior' or 'laplace', got {t_scale!r}")
    else:
        scale = l0
    shift = solve_triangular(l0, center - p.mean, lower=True)
    mix = solve_triangular(l0, scale, lower=True)
    if np.array_equal(mix, np.eye(p.dim)):
        mix = None
    lnc = _log_det_tri(scale) - _log_det_tri(l0)
    dof = None
    if kind == "student_t":
        if nu is None or not nu > 0:
            raise DomainError("student_t plan needs positive degrees of freedom")
        dof = float(nu)
        lnc -= 0.5 * p.dim * math.log(2.0 * math.pi) + p.dim * _student_t_log_norm(dof)
    return ISPlan(kind, center, scale, dof, lnc, shift, mix, mode_cov, res)


def log_transformed_integrand(p: GaussianProblem, plan: ISPlan, x) -> np.ndarray:
    """Log of the transformed integrand at standardised points ``x`` (shape ``(..., d)``)."""
    x = np.asarray(x, dtype=float)
    lx = x if plan.mix is None else x @ plan.mix.T   # chol(Sigma0)^{-1} L x
    z = plan.center + x @ plan.scale.T
    out = np.asarray(p.g(z), dtype=float)
    if plan.kind == "none":
        return out
    if plan.kind == "student_t":
        r = plan.shift + lx
        nu = plan.dof
        return (out - 0.5 * np.sum(r * r, axis=-1) + plan.log_norm_const
                + 0.5 * (nu + 1.0) * np.sum(np.log1p(x * x / nu), axis=-1))
    out = out - lx @ plan.shift - 0.5 * float(plan.shift @ plan.shift)
    if plan.mix is not None:
        out = out + 0.5 * np.sum((x - lx) * (x + lx), axis=-1) + plan.log_norm_const
    return out


def transformed_integrand(p: GaussianProblem, plan: ISPlan, x):
    """``f(x)``; raises :class:`IntegrandOverflow` when its log exceeds 700."""
    logf = log_transformed_integrand(p, plan, x)
    _guard_overflow(logf)
    out = np.exp(logf)
    return float(out) if np.ndim(out) == 0 else out


def _guard_overflow(logf, shift=None):
    logf = np.asarray(logf)
    bad = ~(logf <= LOG_OVERFLOW)
    if np.any(bad):
        idx = int(np.flatnonzero(bad.reshape(-1))[0])
        val = float(logf.reshape(-1)[idx])
        raise IntegrandOverflow(
            f"log integrand {val:.4g} exceeds {LOG_OVERFLOW:g} at point {idx}"
            + (f" of shift {shift}" if shift is not None else "")
            + "; the growth or eigenvalue assumptions are likely violated",
            val, shift, idx)


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarlo:
    """Plain Monte Carlo point source with ``n_points`` iid uniforms per replicate."""

    n_points: int


@dataclass
class EstimateResult:
    value: float
    rmse: float
    per_shift: np.ndarray
    n_points: int
    n_shifts: int
    seed: int
    method: str
    plan: str


def _uniforms(points, r: int, seed: int, d: int, key: tuple = ()) -> np.ndarray:
    stream = numkit.RngStream(seed, (*key, r))
    if isinstance(points, GeneratingVector):
        if points.dim != d:
            raise DomainError(f"generating vector has dimension {points.dim}, problem {d}")
        u = lattice_points(points, stream.uniform_open(d)).points
    elif isinstance(points, MonteCarlo):
        u = stream.uniform_open((points.n_points, d))
    else:
        raise DomainError("points must be a GeneratingVector or MonteCarlo source")
    # the inverse CDF needs strictly interior arguments
    u[u <= 0.0] = np.nextafter(0.0, 1.0)
    u[u >= 1.0] = np.nextafter(1.0, 0.0)
    return u


def estimate(p: GaussianProblem, plan: ISPlan, points, n_shifts: int = 16,
             seed: int = 0, key: tuple = ()) -> EstimateResult:
    """Randomised estimate of ``E[G(Z)]`` over ``n_shifts`` independent replicates.

    Each replicate ``r`` draws from its own stream ``(seed, (*key, r))``: a
    random shift for a lattice, fresh uniforms for Monte Carlo. Callers
    running several estimates under one seed pass distinct ``key`` tuples.
    ``rmse`` is the standard error of the replicate mean (``nan`` for a
    single replicate).
    """
    if n_shifts < 1:
        raise DomainError("need at least one replicate")
    per_shift = np.empty(n_shifts)
    for r in range(n_shifts):
        u = _uniforms(points, r, seed, p.dim, key)
        if plan.kind == "student_t":
            x = numkit.student_t_inv_cdf(u, plan.dof)
        else:
            x = numkit.normal_inv_cdf(u)
        logf = log_transformed_integrand(p, plan, x)
        _guard_overflow(logf, r)
        per_shift[r] = np.mean(np.exp(logf))
    value = float(np.mean(per_shift))
    if n_shifts > 1:
        rmse = float(np.std(per_shift, ddof=1) / math.sqrt(n_shifts))
    else:
        rmse = float("nan")
    method = "rqmc" if isinstance(points, GeneratingVector) else "mc"
    return EstimateResult(value, rmse, per_shift, points.n_points, n_shifts, seed,
                          method, plan.kind)


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------

SATISFIED, VIOLATED = "satisfied", "violated"
HEURISTIC_PASS, HEURISTIC_FAIL = "heuristic-pass", "heuristic-fail"


@dataclass
class GrowthProbe:
    verdict: str
    exponent: float        # max fitted slope of log|g| against log radius
    upper_exponent: float  # same for log max(g, 1): growth of g from above only
    n_directions: int


@dataclass
class AssumptionReport:
    growth: GrowthProbe
    eigenvalue: str              # minimax eigenvalue inequality
    eigen_lhs: float             # -min eig(hess g(z*)) * max eig(Sigma*)
    eigen_rhs: float             # 1 / alpha
    semidefinite: str            # hess g(z*) positive semidefinite
    hess_min_eig: float
    cov_max_eig: float
    quadratic_growth_ok: bool    # max eig(Sigma*) < 1/(2 alpha), admits beta = 2

    def as_dict(self):
        return {
            "growth": {"verdict": self.growth.verdict, "exponent": self.growth.exponent,
                       "upper_exponent": self.growth.upper_exponent,
                       "directions": self.growth.n_directions},
            "eigenvalue": {"verdict": self.eigenvalue, "lhs": self.eigen_lhs,
                           "rhs": self.eigen_rhs, "margin": self.eigen_rhs - self.eigen_lhs},
            "semidefinite": {"verdict": self.semidefinite, "min_eigenvalue": self.hess_min_eig},
            "quadratic_growth": {"satisfied": self.quadratic_growth_ok,
                                 "max_cov_eigenvalue": self.cov_max_eig},
        }


def growth_probe(p: GaussianProblem, n_directions: int = 32, seed: int = 0,
                 threshold: float = 1.95) -> GrowthProbe:
    """Empirical growth exponent of ``g`` along random rays from ``mu0``.

    Radii are ``2**3 .. 2**10``; the exponent is the largest fitted log-log
    slope over directions. A non-finite value along a ray counts as fast
    growth.
    """
    rng = numkit.RngStream(seed, 0).generator()
    dirs = rng.standard_normal((n_directions, p.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = 2.0 ** np.arange(3, 11)
    log_r = np.log(radii)
    worst, worst_upper = -np.inf, -np.inf
    for u in dirs:
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.asarray(p.g(p.mean + radii[:, None] * u[None, :]), dtype=float)
        if not np.all(np.isfinite(vals)):
            worst = worst_upper = np.inf
            break
        mag = np.abs(vals)
        if np.all(mag > 0):
            worst = max(worst, float(np.polyfit(log_r, np.log(mag), 1)[0]))
        worst_upper = max(worst_upper, float(np.polyfit(log_r, np.log(np.maximum(vals, 1.0)), 1)[0]))
    verdict = HEURISTIC_PASS if worst < threshold else HEURISTIC_FAIL
    return GrowthProbe(verdict, float(worst), float(worst_upper), n_directions)


def check_assumptions(p: GaussianProblem, plan: ISPlan, scheme: WeightScheme,
                      tol: float = 1e-12, seed: int = 0) -> AssumptionReport:
    """Evaluate the growth, minimax-eigenvalue and semidefiniteness conditions.

    The eigenvalue conditions are evaluated at the mode with the Laplace
    covariance, whatever the plan; ``alpha`` is the square root of the
    Gaussian weight parameter.
    """
    if scheme.kind != "gaussian":
        raise DomainError("assumption checks are stated for the Gaussian weight")
    alpha = scheme.alpha
    center = plan.center if plan.kind != "none" else find_mode(p).x
    cov = plan.mode_cov if plan.mode_cov is not None else laplace_covariance(p, center)
    h_min = float(numkit.sym_eigenvalues(p.hess(center))[0])
    lam_max = float(numkit.sym_eigenvalues(cov)[-1])
    lhs = -h_min * lam_max
    return AssumptionReport(
        growth=growth_probe(p, seed=seed),
        eigenvalue=SATISFIED if lhs < 1.0 / alpha else VIOLATED,
        eigen_lhs=lhs,
        eigen_rhs=1.0 / alpha,
        semidefinite=SATISFIED if h_min >= -tol else VIOLATED,
        hess_min_eig=h_min,
        cov_max_eig=lam_max,
        quadratic_growth_ok=lam_max < 1.0 / (2.0 * alpha),
    )
