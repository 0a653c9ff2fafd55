"""
One-dimensional kernel machinery behind the shift-averaged worst-case error.

A :class:`WeightScheme` fixes the weight function ``psi`` of the function
space together with the marginal density the integrand is taken against:

* ``gaussian``: ``psi(x) = exp(-x**2 / (2 alpha2))`` with the standard normal
  marginal (normal proposals).
* ``rational``: ``psi(x) = (lam - 1)/2 * (1 + |x|)**(-lam)`` with a Student-t
  marginal of ``nu`` degrees of freedom (t proposals).

From the scheme we compute the shift-invariant kernel ``theta``, its Fourier
coefficients ``theta_hat``, the constant ``C1 = theta(0)`` and the decay
certificate ``theta_hat(h) <= C2 |h|**(-2 r2)``. Both supported weights and
marginals are even functions; several routines rely on that.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from . import numkit
from .errors import Diverged, DomainError, IllDefinedScheme

_QUAD_ABS = 1e-13
_QUAD_REL = 1e-12


@dataclass(frozen=True)
class WeightScheme:
    """Weight function and marginal for the one-dimensional kernel.

    Construct with :meth:`gaussian` or :meth:`rational`. Ill-defined
    parameters are allowed so that divergence can be demonstrated; use
    :attr:`well_defined` or :meth:`require_well_defined` before relying on
    finite kernel values.
    """

    kind: str
    alpha2: float = float("nan")
    lam: float = float("nan")
    nu: float = float("nan")

    @classmethod
    def gaussian(cls, alpha2: float) -> "WeightScheme":
        if not alpha2 > 0:
            raise DomainError("alpha2 must be positive")
        return cls("gaussian", alpha2=float(alpha2))

    @classmethod
    def rational(cls, lam: float, nu: float) -> "WeightScheme":
        if not lam > 1:
            raise DomainError("rational weight needs lam > 1")
        if not nu > 0:
            raise DomainError("nu must be positive")
        return cls("rational", lam=float(lam), nu=float(nu))

    def __post_init__(self):
        if self.kind not in ("gaussian", "rational"):
            raise DomainError(f"unknown weight kind {self.kind!r}")

    @property
    def alpha(self) -> float:
        return math.sqrt(self.alpha2)

    @property
    def well_defined(self) -> bool:
        if self.kind == "gaussian":
            return self.alpha2 > 2.0
        return self.nu > 2.0 * self.lam + 1.0

    def require_well_defined(self):
        if not self.well_defined:
            raise IllDefinedScheme(f"{self.label()} does not define a valid RKHS")
        return self

    def label(self) -> str:
        """Compact, lossless text form, e.g. ``gaussian(alpha2=4.0)``."""
        if self.kind == "gaussian":
            return f"gaussian(alpha2={self.alpha2!r})"
        return f"rational(lam={self.lam!r},nu={self.nu!r})"

    @classmethod
    def from_label(cls, text: str) -> "WeightScheme":
        """Inverse of :meth:`label`."""
        m = re.fullmatch(r"\s*(gaussian|rational)\((.*)\)\s*", text)
        if m is None:
            raise DomainError(f"cannot parse weight scheme {text!r}")
        try:
            args = {k.strip(): float(v) for k, v in
                    (item.split("=") for item in m.group(2).split(","))}
            if m.group(1) == "gaussian":
                return cls.gaussian(args["alpha2"])
            return cls.rational(args["lam"], args["nu"])
        except (KeyError, ValueError) as exc:
            raise DomainError(f"cannot parse weight scheme {text!r}: {exc}") from None

    # marginal distribution -------------------------------------------------

    def cdf(self, t):
        if self.kind == "gaussian":
            return special.ndtr(t)
        return special.stdtr(self.nu, t)

    def log_cdf(self, t):
        if self.kind == "gaussian":
            return special.log_ndtr(t)
        with np.errstate(divide="ignore"):
            return np.log(special.stdtr(self.nu, t))

    def log_pdf(self, t):
        if self.kind == "gaussian":
            t = np.asarray(t, dtype=float)
            return -0.5 * t * t - 0.5 * math.log(2.0 * math.pi)
        return numkit.student_t_log_pdf(t, self.nu)

    def ppf(self, u):
        if self.kind == "gaussian":
            return numkit.normal_inv_cdf(u)
        return numkit.student_t_inv_cdf(u, self.nu)

    # weight ------------------------------------------------------------------

    def log_inv_psi2(self, t):
        """``log(1 / psi(t)**2)``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "gaussian":
            return t * t / self.alpha2
        return 2.0 * self.lam * np.log1p(np.abs(t)) - 2.0 * math.log(0.5 * (self.lam - 1.0))

    def psi(self, t):
        return np.exp(-0.5 * self.log_inv_psi2(t))


def eta(x: float, y: float, scheme: WeightScheme) -> float:
    """Non-constant part of the one-dimensional reproducing kernel.

    ``eta(x, y)`` integrates ``1/psi**2`` from 0 to ``min(x, y)`` when both
    points are positive, from ``max(x, y)`` to 0 when both are negative, and
    vanishes otherwise.
    """
    f = lambda t: math.exp(float(scheme.log_inv_psi2(t)))
    if x > 0 and y > 0:
        return numkit.adaptive_quad(f, 0.0, min(x, y), _QUAD_ABS, _QUAD_REL)
    if x < 0 and y < 0:
        return numkit.adaptive_quad(f, max(x, y), 0.0, _QUAD_ABS, _QUAD_REL)
    return 0.0


# ---------------------------------------------------------------------------
# C1 and theta
# ---------------------------------------------------------------------------

def _lower_tail_integrand(scheme, power=1):
    # cdf(t)**power / psi(t)**2, evaluated in log space
    def f(t):
        return math.exp(power * float(scheme.log_cdf(t)) + float(scheme.log_inv_psi2(t)))
    return f


def _upper_tail_integrand(scheme, power=1):
    # (1 - cdf(t))**power / psi(t)**2; the marginal is even so 1 - cdf(t) = cdf(-t)
    def f(t):
        return math.exp(power * float(scheme.log_cdf(-t)) + float(scheme.log_inv_psi2(t)))
    return f


def _two_sided(scheme, power, lo, hi):
    with np.errstate(over="ignore"):
        try:
            left = numkit.adaptive_quad(_lower_tail_integrand(scheme, power), lo, 0.0,
                                        _QUAD_ABS, _QUAD_REL)
            right = numkit.adaptive_quad(_upper_tail_integrand(scheme, power), 0.0, hi,
                                         _QUAD_ABS, _QUAD_REL)
        except OverflowError:
            return math.inf
    return left + right


@lru_cache(maxsize=64)
def c1_constant(scheme: WeightScheme) -> float:
    """``C1 = int_{-inf}^0 Phi/psi^2 + int_0^inf (1 - Phi)/psi^2``.

    Divergence is detected numerically: the integral is first evaluated on
    ``[-T, T]`` for ``T`` in 10, 20, 40 and flagged when the last doubling
    still grows the estimate by more than 10%.

    Raises
    ------
    Diverged
        The integral does not converge (the RKHS is ill defined).
    """
    estimates = []
    for T in (10.0, 20.0, 40.0):
        try:
            estimates.append(_two_sided(scheme, 1, -T, T))
        except numkit.ToleranceNotMet as exc:
            estimates.append(abs(exc.estimate))
    if not all(np.isfinite(estimates)) or estimates[2] > 1.1 * estimates[1]:
        raise Diverged(f"C1 diverges for {scheme.label()}: truncated estimates {estimates}")
    return _two_sided(scheme, 1, -np.inf, np.inf)


@lru_cache(maxsize=64)
def theta_bar(scheme: WeightScheme) -> float:
    """Mean of ``theta`` over [0, 1), i.e. the zeroth Fourier coefficient.

    Equals ``int_{-inf}^0 Phi^2/psi^2 + int_0^inf (1 - Phi)^2/psi^2``.
    """
    c1_constant(scheme)
    return _two_sided(scheme, 2, -np.inf, np.inf)


def theta(x: float, scheme: WeightScheme) -> float:
    """Shift-invariant kernel ``theta(x)`` for ``x`` in [0, 1).

    Evaluates both one-sided integrals of the defining formula directly, so
    the symmetry ``theta(x) == theta(1 - x)`` is a property of the result, not
    of the code path.
    """
    x = float(x)
    if not 0.0 <= x < 1.0:
        raise DomainError("theta is defined on [0, 1)")
    if x == 0.0:
        return c1_constant(scheme)
    inv_psi2 = lambda t: math.exp(float(scheme.log_inv_psi2(t)))

    def part(level):
        a = float(scheme.ppf(level))
        f = lambda t: (float(scheme.cdf(t)) - level) * inv_psi2(t)
        # integral from a to 0; quad handles a > 0 as the reversed interval
        return numkit.adaptive_quad(f, a, 0.0, _QUAD_ABS, _QUAD_REL)

    return part(x) + part(1.0 - x)


@lru_cache(maxsize=32)
def _theta_grid_cached(n: int, scheme: WeightScheme, order: int) -> np.ndarray:
    half = n // 2
    k = np.arange(1, half + 1)
    m = k / n
    a = np.asarray(scheme.ppf(m), dtype=float)
    a[-1] = 0.0
    out = np.empty(n)
    out[0] = c1_constant(scheme)
    if half >= 2:
        lo, hi = a[:-1], a[1:]
        m_lo = m[:-1]
        nodes, weights = numkit.gauss_legendre(order)
        half_w = 0.5 * (hi - lo)
        t = 0.5 * (hi + lo)[:, None] + half_w[:, None] * nodes[None, :]
        inv_psi2 = np.exp(scheme.log_inv_psi2(t))
        excess = (scheme.cdf(t) - m_lo[:, None]) * inv_psi2
        p_seg = (excess * weights).sum(axis=1) * half_w     # int (Phi - m_j)/psi^2
        q_seg = (inv_psi2 * weights).sum(axis=1) * half_w   # int 1/psi^2
        # theta(m_k) = 2 sum_{j>=k} [p_j + (m_j - m_k) q_j]; every term is
        # nonnegative, accumulated from the centre outwards
        s1 = np.cumsum(q_seg[::-1])[::-1]
        s2 = np.zeros_like(s1)
        s2[:-1] = np.cumsum(s1[:0:-1])[::-1] / n
        vals = 2.0 * (np.cumsum(p_seg[::-1])[::-1] + s2)
        out[1:half] = vals
    out[half] = 0.0
    out[half + 1:] = out[1:half][::-1]
    out.setflags(write=False)
    return out


def theta_grid(n: int, scheme: WeightScheme, order: int = 24) -> np.ndarray:
    """``theta(k/n)`` for ``k = 0..n-1`` as a read-only array.

    ``n`` must be even. The grid is exactly mirror symmetric
    (``grid[k] == grid[n-k]``), which makes candidates ``z`` and ``n - z``
    tie bitwise during CBC. Results are memoised per ``(n, scheme)``.
    """
    if n < 2 or n % 2:
        raise DomainError("theta grid needs an even number of points")
    scheme.require_well_defined()
    return _theta_grid_cached(int(n), scheme, int(order))


# ---------------------------------------------------------------------------
# Fourier coefficients
# ---------------------------------------------------------------------------

def _fourier_weight(scheme, u):
    # 1 / (psi^2(x) * pdf(x)) at x = ppf(u)
    x = scheme.ppf(u)
    with np.errstate(over="ignore", invalid="ignore"):
        w = np.exp(scheme.log_inv_psi2(x) - scheme.log_pdf(x))
    return w


def theta_hat(h: int, scheme: WeightScheme, order: int = 32) -> float:
    """Fourier coefficient ``theta_hat(h)`` for nonzero integer ``h``.

    Uses the single-integral form

        theta_hat(h) = 1/(pi h)^2 * int_0^1 sin^2(pi h u) / (psi^2 pdf)(ppf(u)) du

    folded onto [0, 1/2] by symmetry. The first period (which carries the
    endpoint behaviour) goes to adaptive quadrature, the remaining periods to
    fixed Gauss-Legendre panels.
    """
    h = abs(int(h))
    if h == 0:
        return theta_bar(scheme)
    scheme.require_well_defined()

    def f(u):
        u = np.asarray(u, dtype=float)
        s = np.sin(np.pi * h * u)
        val = s * s * _fourier_weight(scheme, u)
        return np.where(np.isfinite(val), val, 0.0)

    first = min(1.0 / h, 0.5)
    total = numkit.adaptive_quad(lambda u: float(f(u)), 0.0, first, 1e-15, 1e-13)
    if first < 0.5:
        edges = np.arange(1, int(math.ceil(0.5 * h)) + 1) / h
        edges[-1] = 0.5
        edges = edges[edges <= 0.5]
        if edges[0] > first:
            edges = np.concatenate([[first], edges])
        if edges.size > 1:
            total += float(numkit.panel_quad(f, edges, order).sum())
    return 2.0 * total / (math.pi * math.pi * h * h)


# ---------------------------------------------------------------------------
# Decay certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateCertificate:
    """Bound ``theta_hat(h) <= C2 * |h|**(-2 r2)``.

    ``c2`` is the closed-form constant (Gaussian case) and ``c2_chain`` the
    constant obtained by keeping every factor of the bounding chain. For the
    rational scheme no separate closed form exists and the two agree.
    """

    c2: float
    r2: float
    scheme: WeightScheme
    c2_chain: float

    def bound(self, h, chain: bool = False):
        const = self.c2_chain if chain else self.c2
        return const * np.abs(np.asarray(h, dtype=float)) ** (-2.0 * self.r2)


def sine_power_bound(c: float, h: float) -> float:
    """Upper bound ``(2 pi h)**c / (c (2 - c))`` of ``int_0^{1/2} u^(-1-c) sin^2(pi h u) du``."""
    return (2.0 * math.pi * h) ** c / (c * (2.0 - c))


def sandwich_constants(nu: float) -> tuple[float, float]:
    """Constants with ``L <= t_pdf(x) / proxy_pdf(x) <= U`` for all x.

    ``proxy_pdf`` is :func:`rational_proxy_pdf`, the rational density with the
    same tail exponent as the t density.
    """
    if not nu > 0:
        raise DomainError("nu must be positive")
    log_c = (special.gammaln(0.5 * (nu + 1.0)) - special.gammaln(0.5 * nu)
             - 0.5 * math.log(nu * math.pi))
    pref = 2.0 * math.exp(log_c) / nu
    lower = pref * min(1.0, nu) ** (0.5 * (nu + 1.0))
    upper = pref * (1.0 + nu) ** (0.5 * (nu + 1.0))
    return lower, upper


def rational_proxy_pdf(x, nu):
    """``(nu/2) (1 + |x|)**(-(nu+1))``."""
    return 0.5 * nu * (1.0 + np.abs(np.asarray(x, dtype=float))) ** (-(nu + 1.0))


def rational_cdf(x, lam):
    """CDF of the density ``(lam-1)/2 * (1+|x|)**(-lam)``."""
    if not lam > 1:
        raise DomainError("lam must exceed 1")
    x = np.asarray(x, dtype=float)
    neg = 0.5 * (1.0 - np.minimum(x, 0.0)) ** (1.0 - lam)
    pos = 1.0 - 0.5 * (1.0 + np.maximum(x, 0.0)) ** (1.0 - lam)
    out = np.where(x < 0, neg, pos)
    return float(out) if out.ndim == 0 else out


def rational_inv_cdf(u, lam):
    """Analytic inverse of :func:`rational_cdf`."""
    if not lam > 1:
        raise DomainError("lam must exceed 1")
    u = np.asarray(numkit._check_open_unit(u))
    e = 1.0 / (1.0 - lam)
    lo = 1.0 - (2.0 * np.minimum(u, 0.5)) ** e
    hi = (2.0 * (1.0 - np.maximum(u, 0.5))) ** e - 1.0
    out = np.where(u < 0.5, lo, hi)
    return float(out) if out.ndim == 0 else out


def rate_certificate(scheme: WeightScheme) -> RateCertificate:
    """Decay constants ``(C2, r2)`` for the Fourier coefficients.

    Gaussian weight, ``c = 2/alpha2``::

        r2       = 1 - 1/alpha2
        C2       = sqrt(2) pi^(c - 3/2) / (alpha2 - 1)
        C2_chain = 2 sqrt(2 pi) / pi^2 * (2 pi)^c / (c (2 - c))

    Rational weight with t marginal, ``c = (2 lam + 1)/nu``::

        r2 = 1 - c/2
        C2 = 2/pi^2 * 4 / ((lam-1)^2 L nu) * (U/2)^(1+c) * (2 pi)^c / (c (2 - c))

    with ``(L, U)`` from :func:`sandwich_constants`.
    """
    if not scheme.well_defined:
        raise IllDefinedScheme(f"{scheme.label()} does not define a valid RKHS")
    if scheme.kind == "gaussian":
        a2 = scheme.alpha2
        c = 2.0 / a2
        c2 = math.sqrt(2.0) * math.pi ** (c - 1.5) / (a2 - 1.0)
        chain = 2.0 * math.sqrt(2.0 * math.pi) / math.pi**2 * sine_power_bound(c, 1.0)
        return RateCertificate(c2, 1.0 - 1.0 / a2, scheme, chain)
    lam, nu = scheme.lam, scheme.nu
    c = (2.0 * lam + 1.0) / nu
    lower, upper = sandwich_constants(nu)
    # lower bound of psi^2 * pdf at ppf(t): ((lam-1)/2)^2 * L * (nu/2) * (2t/U)^(1+c)
    pref = 4.0 / ((lam - 1.0) ** 2 * lower * nu) * (0.5 * upper) ** (1.0 + c)
    chain = 2.0 / math.pi**2 * pref * sine_power_bound(c, 1.0)
    return RateCertificate(chain, 1.0 - 0.5 * c, scheme, chain)
