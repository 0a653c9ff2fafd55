"""
Worked problems with analytic derivatives and their condition checks.

* Poisson log-normal GLMM: latent ``omega ~ N(0, Sigma)`` with AR(1)
  covariance ``Sigma_ij = sigma^2 kappa^|i-j| / (1 - kappa^2)`` and counts
  ``y_j ~ Poisson(exp(omega_j + beta))``; the integral is the marginal
  likelihood.
* Randleman-Bartter zero-coupon bond: short rates
  ``r_k = r0 exp(-k sigma^2/2 + sigma B_k)`` driven by the Brownian path
  ``B = A z`` (``A`` all-ones lower triangular) and price
  ``E[prod_{k=0}^d 1/(1 + r_k)]``.
* Closed-form synthetic fixtures.

All ``log_g`` functions are vectorised over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from . import numkit
from .errors import DomainError
from .isampling import GaussianProblem, find_mode, laplace_covariance
from .rkhs import WeightScheme


def _reverse_cumsum(a, axis=-1):
    return np.flip(np.cumsum(np.flip(a, axis=axis), axis=axis), axis=axis)


# ---------------------------------------------------------------------------
# GLMM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GlmmInstance:
    y: tuple
    beta: float
    kappa: float
    sigma: float

    def __post_init__(self):
        y = tuple(int(v) for v in self.y)
        if any(v < 0 for v in y) or not y:
            raise DomainError("counts must be a nonempty vector of nonnegative integers")
        if not 0.0 <= self.kappa < 1.0:
            raise DomainError("kappa must lie in [0, 1)")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        object.__setattr__(self, "y", y)

    @property
    def dim(self) -> int:
        return len(self.y)

    @property
    def cov(self) -> np.ndarray:
        lag = np.abs(np.subtract.outer(np.arange(self.dim), np.arange(self.dim)))
        return self.sigma**2 * self.kappa**lag / (1.0 - self.kappa**2)


def glmm_log_g(inst: GlmmInstance, omega):
    """Poisson log-likelihood ``sum_j y_j (omega_j + beta) - exp(omega_j + beta) - log y_j!``."""
    omega = np.asarray(omega, dtype=float)
    y = np.asarray(inst.y, dtype=float)
    eta = omega + inst.beta
    return np.sum(y * eta - np.exp(eta) - special.gammaln(y + 1.0), axis=-1)


def glmm_grad(inst: GlmmInstance, omega):
    omega = np.asarray(omega, dtype=float)
    return np.asarray(inst.y, dtype=float) - np.exp(omega + inst.beta)


def glmm_hess(inst: GlmmInstance, omega):
    return np.diag(-np.exp(np.asarray(omega, dtype=float) + inst.beta))


def glmm_problem(inst: GlmmInstance) -> GaussianProblem:
    return GaussianProblem(
        np.zeros(inst.dim), inst.cov,
        lambda w: glmm_log_g(inst, w),
        lambda w: glmm_grad(inst, w),
        lambda w: glmm_hess(inst, w),
        name="glmm")


def read_counts(path) -> tuple:
    """Counts from a one-column CSV; a non-numeric first line is a header."""
    vals = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            cell = line.strip().split(",")[0].strip()
            if not cell:
                continue
            try:
                vals.append(int(cell))
            except ValueError:
                if n == 0:
                    continue
                raise DomainError(f"line {n + 1}: not an integer count: {cell!r}") from None
    return tuple(vals)


@dataclass
class GlmmConditionReport:
    mode: np.ndarray
    lambda_max: float
    max_mode: float
    sufficient: bool
    sufficient_margin: float   # exp(-beta)/(alpha2 exp(max mode)) - lambda_max
    necessary: bool
    necessary_margin: float    # 1 - 2 exp(beta) lambda_max exp(max mode)

    def as_dict(self):
        return {"lambda_max": self.lambda_max, "max_mode": self.max_mode,
                "sufficient": self.sufficient, "sufficient_margin": self.sufficient_margin,
                "necessary": self.necessary, "necessary_margin": self.necessary_margin}


def glmm_condition(inst: GlmmInstance, scheme: WeightScheme) -> GlmmConditionReport:
    """Closed-form eigenvalue conditions for the GLMM under a Gaussian weight.

    Sufficient: ``lambda_max < exp(-beta) / (alpha2 exp(max_j mode_j))``.
    Necessary: ``2 exp(beta) lambda_max exp(max_j mode_j) < 1``.
    ``lambda_max`` is the largest eigenvalue of the Laplace covariance.
    """
    if scheme.kind != "gaussian":
        raise DomainError("the GLMM condition is stated for the Gaussian weight")
    p = glmm_problem(inst)
    mode = find_mode(p, np.zeros(inst.dim)).x
    lam_max = float(numkit.sym_eigenvalues(laplace_covariance(p, mode))[-1])
    top = float(np.max(mode))
    rhs = math.exp(-inst.beta) / (scheme.alpha2 * math.exp(top))
    nec = 2.0 * math.exp(inst.beta) * lam_max * math.exp(top)
    return GlmmConditionReport(mode, lam_max, top, lam_max < rhs, rhs - lam_max,
                               nec < 1.0, 1.0 - nec)


# ---------------------------------------------------------------------------
# Randleman-Bartter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RbInstance:
    dim: int
    r0: float = 0.1
    sigma: float = 0.01

    def __post_init__(self):
        if self.dim < 0:
            raise DomainError("dimension must be nonnegative")
        if not self.r0 > 0:
            raise DomainError("initial rate must be positive")
        if not self.sigma >= 0:
            raise DomainError("volatility must be nonnegative")

    @property
    def path_matrix(self) -> np.ndarray:
        """All-ones lower triangle: ``B = A z`` turns increments into a path."""
        return np.tril(np.ones((self.dim, self.dim)))


def rb_rates(inst: RbInstance, z):
    """Short rates ``r_1..r_d`` along the path driven by ``z``."""
    z = np.asarray(z, dtype=float)
    k = np.arange(1, inst.dim + 1)
    path = np.cumsum(z, axis=-1)
    return inst.r0 * np.exp(-0.5 * k * inst.sigma**2 + inst.sigma * path)


def rb_log_g(inst: RbInstance, z):
    """``-sum_{k=0}^d log(1 + r_k)``; the ``k = 0`` term is constant."""
    return -math.log1p(inst.r0) - np.sum(np.log1p(rb_rates(inst, z)), axis=-1)


def rb_grad(inst: RbInstance, z):
    r = rb_rates(inst, z)
    return -inst.sigma * _reverse_cumsum(r / (1.0 + r))


def _rb_curvatures(inst: RbInstance, z):
    r = rb_rates(inst, z)
    return inst.sigma**2 * r / (1.0 + r) ** 2


def rb_hess(inst: RbInstance, z):
    tail = _reverse_cumsum(_rb_curvatures(inst, z))
    idx = np.arange(inst.dim)
    return -tail[np.maximum.outer(idx, idx)]


def rb_hess_factor(inst: RbInstance, z):
    """Upper-triangular ``F`` with ``F F' = -hess g``: ``F[i, k] = sqrt(R_k)`` for ``k >= i``."""
    root = np.sqrt(_rb_curvatures(inst, z))
    return np.triu(np.broadcast_to(root, (inst.dim, inst.dim)))


def rb_frobenius_sq(inst: RbInstance, z) -> float:
    """``||hess g||_F^2 = sum_j (2j - 1) (sum_{k>=j} R_k)^2``."""
    tail = _reverse_cumsum(_rb_curvatures(inst, z))
    j = np.arange(1, inst.dim + 1)
    return float(np.sum((2 * j - 1) * tail**2))


def rb_problem(inst: RbInstance) -> GaussianProblem:
    if inst.dim < 1:
        raise DomainError("a pricing integral needs at least one random step")
    return GaussianProblem(
        np.zeros(inst.dim), np.eye(inst.dim),
        lambda z: rb_log_g(inst, z),
        lambda z: rb_grad(inst, z),
        lambda z: rb_hess(inst, z),
        name="randleman_bartter")


def rb_kappa(r_star: float, sigma: float) -> float:
    """``sigma^2 / (2 + r* + 1/r*)``, a lower bound of every curvature ``R_k`` when all rates are at most 1."""
    return sigma**2 / (2.0 + r_star + 1.0 / r_star)


def rb_order_sum(d: int) -> float:
    """``sum_j (2j - 1)(d - j + 1)^2 = d (d^3 + 2d^2 + 2d + 1) / 6``."""
    return d * (d**3 + 2 * d**2 + 2 * d + 1) / 6.0


@dataclass
class RbAlphaBound:
    kappa: float
    alpha2_max: float
    s_lower: float          # kappa^2 d (d^3 + 2d^2 + 2d + 1) / 6
    frobenius_sq: float     # at the mode
    lower_bound_holds: bool
    r_star: float
    lambda_max: float       # exact largest eigenvalue of the Laplace covariance
    lambda_max_bound: float = 1.0

    def as_dict(self):
        return {k: (float(v) if not isinstance(v, bool) else v) for k, v in self.__dict__.items()}


def rb_alpha_bound(inst: RbInstance) -> RbAlphaBound:
    """Ceiling on ``alpha2`` below which the LapIS rate statement applies.

    ``alpha2 < (1/kappa) sqrt(6 / (d^3 + 2d^2 + 2d + 1))`` with ``kappa``
    from :func:`rb_kappa` at the smallest rate along the mode path.
    """
    if inst.sigma == 0:
        raise DomainError("the curvature bound needs a positive volatility")
    p = rb_problem(inst)
    mode = find_mode(p, np.zeros(inst.dim)).x
    r_star = float(np.min(rb_rates(inst, mode)))
    kappa = rb_kappa(r_star, inst.sigma)
    d = inst.dim
    s_lower = kappa**2 * rb_order_sum(d)
    frob = rb_frobenius_sq(inst, mode)
    alpha2_max = math.sqrt(6.0 / (d**3 + 2 * d**2 + 2 * d + 1)) / kappa
    lam_max = float(numkit.sym_eigenvalues(laplace_covariance(p, mode))[-1])
    # at d = 1 the bound is attained, so allow for rounding in the comparison
    holds = frob >= s_lower * (1.0 - 1e-12)
    return RbAlphaBound(kappa, alpha2_max, s_lower, frob, holds, r_star, lam_max)


def rb_price_closed_form_sigma0(inst: RbInstance) -> float:
    """Deterministic-rate price ``(1 + r0)^-(d+1)``; only valid for zero volatility."""
    if inst.sigma != 0:
        raise DomainError("closed form requires sigma = 0")
    return (1.0 + inst.r0) ** (-(inst.dim + 1))


# ---------------------------------------------------------------------------
# Synthetic fixtures
# ---------------------------------------------------------------------------

@dataclass
class Synthetic:
    problem: GaussianProblem
    exact: Optional[float]


def gaussian_mgf(a) -> Synthetic:
    """``G(z) = exp(a'z)`` under ``N(0, I)``; exact value ``exp(|a|^2 / 2)``.

    The exact value is ``inf`` when it exceeds the double range.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    d = a.shape[0]
    prob = GaussianProblem(np.zeros(d), np.eye(d), lambda z: np.asarray(z) @ a,
                           lambda z: a.copy(), lambda z: np.zeros((d, d)), name="gaussian_mgf")
    half_sq = 0.5 * float(a @ a)
    return Synthetic(prob, math.exp(half_sq) if half_sq < 709.0 else math.inf)


def constant(d: int) -> Synthetic:
    """``G = 1``."""
    prob = GaussianProblem(np.zeros(d), np.eye(d),
                           lambda z: np.zeros(np.shape(z)[:-1]),
                           lambda z: np.zeros(d), lambda z: np.zeros((d, d)), name="constant")
    return Synthetic(prob, 1.0)


def _sine_factor() -> float:
    # E[exp(sin(2 pi Z))] for standard normal Z
    f = lambda t: math.exp(math.sin(2.0 * math.pi * t) - 0.5 * t * t) / math.sqrt(2.0 * math.pi)
    return numkit.adaptive_quad(f, -40.0, 40.0, 1e-14, 1e-13, limit=2000)


def sine_quadratic() -> Synthetic:
    """``G(z) = exp(sin(2 pi z1) + z2^2 / 4)`` in two dimensions."""
    tau = 2.0 * math.pi

    def log_g(z):
        z = np.asarray(z, dtype=float)
        return np.sin(tau * z[..., 0]) + 0.25 * z[..., 1] ** 2

    def grad(z):
        return np.array([tau * math.cos(tau * z[0]), 0.5 * z[1]])

    def hess(z):
        return np.diag([-tau * tau * math.sin(tau * z[0]), 0.5])

    prob = GaussianProblem(np.zeros(2), np.eye(2), log_g, grad, hess, name="sine_quadratic")
    return Synthetic(prob, _sine_factor() * math.sqrt(2.0))


def cubic_decay(d: int) -> Synthetic:
    """``G(z) = exp(-|z|^3)``; grows too fast in absolute value for the growth probe."""
    def log_g(z):
        return -np.linalg.norm(np.asarray(z, dtype=float), axis=-1) ** 3

    prob = GaussianProblem(np.zeros(d), np.eye(d), log_g, name="cubic_decay")
    return Synthetic(prob, None)


def product_peak(c) -> Synthetic:
    """``G(z) = prod_j exp(-c_j z_j^2 / 2)``; exact value ``prod_j (1 + c_j)^(-1/2)``."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if np.any(c <= -1):
        raise DomainError("need c_j > -1 for integrability")
    d = c.shape[0]
    prob = GaussianProblem(
        np.zeros(d), np.eye(d),
        lambda z: -0.5 * np.sum(c * np.asarray(z) ** 2, axis=-1),
        lambda z: -c * np.asarray(z), lambda z: np.diag(-c), name="product_peak")
    return Synthetic(prob, float(np.prod(1.0 / np.sqrt(1.0 + c))))


SYNTHETIC = ("gaussian_mgf", "constant", "sine_quadratic", "cubic_decay", "product_peak")
