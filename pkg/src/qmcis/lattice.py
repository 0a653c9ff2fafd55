"""
Randomly shifted rank-1 lattice rules with POD weights.

Point ``i`` (``i = 1..N``) of the rule with generating vector ``z`` and shift
``delta`` is ``frac(i * z / N + delta)``; ``i = N`` is the origin of the
unshifted lattice.

The shift-averaged squared worst-case error of a rule is

    (1/N) sum_i sum_l Gamma_l e_l(beta_1 theta(x_i1), ..., beta_d theta(x_id))
        - sum_l Gamma_l e_l(beta_1 theta_bar, ..., beta_d theta_bar)

where ``x_ij = frac(i z_j / N)`` and ``e_l`` is the elementary symmetric
polynomial of order ``l``. Per-point accumulators of ``e_l`` make both the
error evaluation and the component-by-component (CBC) search linear in ``d``
instead of exponential.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError
from .rkhs import WeightScheme, theta_bar, theta_grid

MAX_CBC_POINTS = 2**14


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GeneratingVector:
    """Integer generating vector of a rank-1 lattice with ``n_points`` points.

    Attributes
    ----------
    n_points : int
        Power of two.
    z : tuple of int
        Components, each odd and in ``[1, n_points - 1]``.
    pod : dict
        Optional metadata (``kappa``, ``eta``, ``lambda``, ``scheme``) kept
        in the file header line.
    errors_sq : tuple of float
        Squared worst-case error after each CBC prefix, when known. Not
        persisted to file.
    """

    n_points: int
    z: tuple
    pod: dict = field(default_factory=dict, compare=False)
    errors_sq: tuple = field(default=(), compare=False)

    def __post_init__(self):
        n = int(self.n_points)
        if not _is_power_of_two(n) or n < 2:
            raise DomainError(f"number of points must be a power of two >= 2, got {n}")
        z = tuple(int(v) for v in self.z)
        if not z:
            raise DomainError("generating vector needs at least one component")
        for v in z:
            if not 1 <= v <= n - 1 or math.gcd(v, n) != 1:
                raise DomainError(f"component {v} is not a unit modulo {n}")
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "z", z)

    @property
    def dim(self) -> int:
        return len(self.z)

    def to_text(self) -> str:
        lines = [f"{self.n_points} {self.dim}", " ".join(str(v) for v in self.z)]
        if self.pod:
            keys = ("kappa", "eta", "lambda", "scheme")
            parts = [f"{k}={self.pod[k]}" for k in keys if k in self.pod]
            lines.append("# pod " + " ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GeneratingVector":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if len(lines) < 2:
            raise DomainError("vector file needs a header line and a component line")
        try:
            n, d = (int(v) for v in lines[0].split())
            z = tuple(int(v) for v in lines[1].split())
        except ValueError as exc:
            raise DomainError(f"malformed vector file: {exc}") from None
        if len(z) != d:
            raise DomainError(f"header says d={d} but {len(z)} components given")
        pod = {}
        if len(lines) > 2 and lines[2].startswith("# pod"):
            for item in lines[2][len("# pod"):].split():
                key, _, val = item.partition("=")
                pod[key] = val
        return cls(n, z, pod)

    def write(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path) -> "GeneratingVector":
        with open(path, encoding="ascii") as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True)
class PodWeights:
    """Product-and-order-dependent weights ``gamma_u = Gamma_|u| prod_{j in u} beta_j``."""

    order_weights: np.ndarray  # Gamma_1 .. Gamma_d
    dim_weights: np.ndarray    # beta_1 .. beta_d
    kappa: float
    eta: float
    lam_w: float

    @property
    def dim(self) -> int:
        return len(self.dim_weights)

    def gamma(self, subset: Sequence[int]) -> float:
        """Weight of a nonempty subset of 1-based coordinate indices."""
        subset = list(subset)
        if not subset:
            raise DomainError("weights are defined for nonempty subsets")
        return float(self.order_weights[len(subset) - 1]
                     * np.prod([self.dim_weights[j - 1] for j in subset]))

    def truncate(self, d: int) -> "PodWeights":
        return PodWeights(self.order_weights[:d], self.dim_weights[:d],
                          self.kappa, self.eta, self.lam_w)


def make_pod_weights(d: int, kappa: float = 0.1, eta: float = 3.1,
                     lam_w: float = 0.51) -> PodWeights:
    """POD weights with ``Gamma_l = (l!)^(2/(1+lam_w))`` and
    ``beta_j = (kappa / j^eta)^(1/(1+lam_w))``."""
    if d < 1:
        raise DomainError("dimension must be positive")
    if not (kappa > 0 and eta > 0 and lam_w > 0):
        raise DomainError("kappa, eta and lam_w must be positive")
    expo = 1.0 / (1.0 + lam_w)
    orders = np.arange(1, d + 1)
    log_fact = np.cumsum(np.log(orders))
    gammas = np.exp(2.0 * expo * log_fact)
    betas = (kappa / orders.astype(float) ** eta) ** expo
    gammas.setflags(write=False)
    betas.setflags(write=False)
    return PodWeights(gammas, betas, float(kappa), float(eta), float(lam_w))


@dataclass(frozen=True)
class ShiftedPointSet:
    generator: GeneratingVector
    shift: np.ndarray
    points: np.ndarray  # (N, d), row i-1 holds point i


def lattice_points(gen: GeneratingVector, shift=None) -> ShiftedPointSet:
    """Points ``frac(i z / N + shift)`` for ``i = 1..N``.

    Coordinates are returned as computed; with a zero shift the last row is
    the origin.
    """
    n, d = gen.n_points, gen.dim
    if shift is None:
        shift = np.zeros(d)
    shift = np.asarray(shift, dtype=float).reshape(-1)
    if shift.shape != (d,):
        raise DomainError(f"shift must have length {d}")
    if np.any(shift < 0) or np.any(shift >= 1):
        raise DomainError("shift must lie in [0, 1)")
    i = np.arange(1, n + 1, dtype=np.int64)
    frac = (np.multiply.outer(i, np.asarray(gen.z, dtype=np.int64)) % n) / n
    pts = frac + shift
    pts -= pts >= 1.0
    return ShiftedPointSet(gen, shift, pts)


# ---------------------------------------------------------------------------
# Worst-case error and CBC
# ---------------------------------------------------------------------------

def _mean_term_constant(w: PodWeights, tbar: float, d: int) -> float:
    # sum_l Gamma_l e_l(beta_1 tbar, ..., beta_d tbar)
    e = np.zeros((d + 1, 1))
    e[0] = 1.0
    for j in range(d):
        _kernels.esp_update_np(e, np.array([w.dim_weights[j] * tbar]))
    return float(w.order_weights[:d] @ e[1:, 0])


def worst_case_error_sq(gen: GeneratingVector, w: PodWeights, scheme: WeightScheme) -> float:
    """Shift-averaged squared worst-case error of the lattice rule.

    Tiny negative values from cancellation are clamped to zero.
    """
    n, d = gen.n_points, gen.dim
    if w.dim < d:
        raise DomainError(f"weights cover {w.dim} dimensions, vector has {d}")
    grid = theta_grid(n, scheme)
    e = np.zeros((d + 1, n))
    e[0] = 1.0
    i = np.arange(n, dtype=np.int64)  # i mod N, so column 0 is the point i = N
    for j, zj in enumerate(gen.z):
        _kernels.esp_update(e, w.dim_weights[j] * grid[(i * zj) % n])
    mean_term = _kernels.esp_weighted_mean(e, np.asarray(w.order_weights[:d], dtype=float))
    value = mean_term - _mean_term_constant(w, theta_bar(scheme), d)
    return max(value, 0.0)


def cbc_candidates(n: int) -> np.ndarray:
    """Odd integers in ``[1, n/2]``.

    ``z`` and ``n - z`` generate the same one-dimensional projections up to
    reflection, which leaves every error unchanged, so the upper half is
    redundant.
    """
    return np.arange(1, max(n // 2, 1) + 1, 2, dtype=np.int64)


def cbc_construct(n: int, d: int, w: PodWeights, scheme: WeightScheme,
                  max_points: int = MAX_CBC_POINTS) -> GeneratingVector:
    """Component-by-component construction of a generating vector.

    Dimension ``s`` picks ``z_s`` minimising the squared error of the
    ``s``-dimensional rule with earlier components held fixed. Ties (up to
    rounding) go to the smallest candidate.
    """
    if not _is_power_of_two(n) or n < 2:
        raise DomainError(f"number of points must be a power of two >= 2, got {n}")
    if n > max_points:
        raise DomainError(f"number of points {n} exceeds the cap {max_points}")
    if d < 1 or w.dim < d:
        raise DomainError("dimension must be positive and covered by the weights")
    grid = theta_grid(n, scheme)
    tbar = theta_bar(scheme)
    gammas = np.asarray(w.order_weights[:d], dtype=float)
    candidates = cbc_candidates(n)
    i = np.arange(n, dtype=np.int64)
    e = np.zeros((d + 1, n))
    e[0] = 1.0
    chosen, errs = [], []
    grid_max = float(np.max(np.abs(grid)))
    for s in range(d):
        # the error of the extended rule is affine in theta(i z / N) with
        # per-point coefficients sum_l Gamma_l e_{l-1}
        coeff = gammas[:s + 1] @ e[:s + 1]
        scores = _kernels.cbc_scan(grid, coeff, candidates)
        tol = 1e-12 * float(np.sum(np.abs(coeff))) * grid_max
        best = int(np.flatnonzero(scores <= scores.min() + tol)[0])
        zs = int(candidates[best])
        chosen.append(zs)
        _kernels.esp_update(e, w.dim_weights[s] * grid[(i * zs) % n])
        mean_term = _kernels.esp_weighted_mean(e, gammas)
        errs.append(max(mean_term - _mean_term_constant(w, tbar, s + 1), 0.0))
    pod = {"kappa": repr(w.kappa), "eta": repr(w.eta), "lambda": repr(w.lam_w),
           "scheme": scheme.label()}
    return GeneratingVector(n, tuple(chosen), pod, tuple(errs))


# ---------------------------------------------------------------------------
# On-disk cache of constructed vectors
# ---------------------------------------------------------------------------

def cache_dir() -> str:
    return os.environ.get("QMCIS_CACHE_DIR",
                          os.path.join(os.path.expanduser("~"), ".cache", "qmcis"))


def cached_cbc(n: int, d: int, w: PodWeights, scheme: WeightScheme,
               directory: Optional[str] = None) -> GeneratingVector:
    """:func:`cbc_construct` backed by a file cache keyed on all inputs."""
    import hashlib

    directory = directory or cache_dir()
    key = f"{n}|{d}|{w.kappa!r}|{w.eta!r}|{w.lam_w!r}|{scheme.label()}"
    digest = hashlib.sha256(key.encode()).hexdigest()[:20]
    path = os.path.join(directory, f"lattice-{digest}.txt")
    if os.path.exists(path):
        try:
            gen = GeneratingVector.read(path)
            if gen.n_points == n and gen.dim == d:
                return gen
        except DomainError:
            pass
    gen = cbc_construct(n, d, w, scheme)
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.{os.getpid()}.tmp"
    gen.write(tmp)
    os.replace(tmp, path)
    return gen
