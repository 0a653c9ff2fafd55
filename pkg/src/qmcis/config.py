"""
Experiment configuration files.

A configuration is an INI file with five sections::

    [problem]
    name = randleman_bartter        ; glmm | randleman_bartter | synthetic:<name>
    dim = 5
    r0 = 0.1
    sigma = 0.01

    [experiment]
    methods = rqmc:odis rqmc:lapis mc:none mc:odis mc:lapis rqmc:student_t:20
    n_list = 256 512 1024
    shifts = 16
    seed = 12345
    t_scale = prior                 ; prior | laplace

    [scheme]
    kind = gaussian                 ; weight used to build lattices for normal plans
    alpha2 = 4.0
    t_lambda = 2.0                  ; rational weight exponent for t plans

    [pod]
    kappa = 0.1
    eta = 3.1
    lambda = 0.51

    [output]
    dir = results

Problem keys by name:

* ``randleman_bartter``: ``dim``, ``r0``, ``sigma``
* ``glmm``: ``counts`` (one-column CSV, relative to the config file) or
  ``y`` (space-separated), plus ``beta``, ``kappa``, ``sigma``
* ``synthetic:gaussian_mgf``: ``a`` (space-separated)
* ``synthetic:constant`` and ``synthetic:cubic_decay``: ``dim``
* ``synthetic:sine_quadratic``: no keys
* ``synthetic:product_peak``: ``c`` (space-separated)

:meth:`ExperimentConfig.to_text` writes a canonical form, and parsing it
gives back an equal configuration.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import models
from .errors import ConfigError, DomainError, IllDefinedScheme
from .isampling import GaussianProblem, PLAN_KINDS
from .rkhs import WeightScheme


@dataclass(frozen=True)
class Method:
    """One estimator: a sampler (``mc`` or ``rqmc``) and a proposal."""

    sampler: str
    proposal: str
    nu: Optional[float] = None

    @property
    def proposal_label(self) -> str:
        if self.proposal == "student_t":
            return f"student_t:{self.nu!r}"
        return self.proposal

    @property
    def label(self) -> str:
        return f"{self.sampler}:{self.proposal_label}"

    @classmethod
    def parse(cls, text: str) -> "Method":
        parts = text.strip().split(":")
        if len(parts) < 2 or parts[0] not in ("mc", "rqmc") or parts[1] not in PLAN_KINDS:
            raise ConfigError(f"bad method {text!r}; expected mc|rqmc:none|odis|lapis|student_t:<nu>")
        if parts[1] == "student_t":
            if len(parts) != 3:
                raise ConfigError(f"method {text!r} needs degrees of freedom")
            try:
                nu = float(parts[2])
            except ValueError:
                raise ConfigError(f"bad degrees of freedom in {text!r}") from None
            if not nu > 0:
                raise ConfigError("degrees of freedom must be positive")
            return cls(parts[0], "student_t", nu)
        if len(parts) != 2:
            raise ConfigError(f"bad method {text!r}")
        return cls(parts[0], parts[1])


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    problem_params: tuple            # sorted (key, value) string pairs
    methods: tuple
    n_list: tuple
    shifts: int = 16
    seed: int = 0
    t_scale: str = "prior"
    scheme: WeightScheme = field(default_factory=lambda: WeightScheme.gaussian(4.0))
    t_lambda: float = 2.0
    pod_kappa: float = 0.1
    pod_eta: float = 3.1
    pod_lambda: float = 0.51
    output_dir: str = "results"
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        ns = list(self.n_list)
        if not ns:
            raise ConfigError("n_list is empty")
        for n in ns:
            if n < 2 or n & (n - 1):
                raise ConfigError(f"N = {n} is not a power of two")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n_list must be strictly increasing")
        if self.shifts < 2:
            raise ConfigError("need at least two shifts")
        if self.t_scale not in ("prior", "laplace"):
            raise ConfigError("t_scale must be prior or laplace")
        if not (self.pod_kappa > 0 and self.pod_eta > 0 and self.pod_lambda > 0):
            raise ConfigError("pod parameters must be positive")
        if not self.t_lambda > 1:
            raise ConfigError("t_lambda must exceed 1")

    @property
    def params(self) -> dict:
        return dict(self.problem_params)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, seed=int(seed))

    def scheme_for(self, method: Method) -> WeightScheme:
        """Weight used to construct the lattice for ``method``."""
        if method.proposal == "student_t":
            return WeightScheme.rational(self.t_lambda, method.nu)
        return self.scheme

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["problem"] = {"name": self.problem, **dict(self.problem_params)}
        cp["experiment"] = {
            "methods": " ".join(m.label for m in self.methods),
            "n_list": " ".join(str(n) for n in self.n_list),
            "shifts": str(self.shifts),
            "seed": str(self.seed),
            "t_scale": self.t_scale,
        }
        if self.scheme.kind == "gaussian":
            scheme = {"kind": "gaussian", "alpha2": repr(self.scheme.alpha2)}
        else:
            scheme = {"kind": "rational", "lambda": repr(self.scheme.lam),
                      "nu": repr(self.scheme.nu)}
        scheme["t_lambda"] = repr(self.t_lambda)
        cp["scheme"] = scheme
        cp["pod"] = {"kappa": repr(self.pod_kappa), "eta": repr(self.pod_eta),
                     "lambda": repr(self.pod_lambda)}
        cp["output"] = {"dir": self.output_dir}
        from io import StringIO
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


def _get(cp, section, key, conv, default=None):
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigError(f"missing [{section}] {key}")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except (ValueError, DomainError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    for section in ("problem", "experiment"):
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}]")
    name = _get(cp, "problem", "name", str)
    params = tuple(sorted((k, v) for k, v in cp.items("problem") if k != "name"))
    methods = tuple(Method.parse(m) for m in _get(cp, "experiment", "methods", str).split())
    n_list = tuple(_get(cp, "experiment", "n_list", lambda s: [int(v) for v in s.split()]))
    kind = _get(cp, "scheme", "kind", str, "gaussian") if cp.has_section("scheme") else "gaussian"
    try:
        if kind == "gaussian":
            alpha2 = _get(cp, "scheme", "alpha2", float, 4.0) if cp.has_section("scheme") else 4.0
            scheme = WeightScheme.gaussian(alpha2)
        elif kind == "rational":
            scheme = WeightScheme.rational(_get(cp, "scheme", "lambda", float),
                                           _get(cp, "scheme", "nu", float))
        else:
            raise ConfigError(f"unknown scheme kind {kind!r}")
        scheme.require_well_defined()
    except (DomainError, IllDefinedScheme) as exc:
        raise ConfigError(str(exc)) from None
    sec = cp.has_section
    cfg = ExperimentConfig(
        problem=name,
        problem_params=params,
        methods=methods,
        n_list=n_list,
        shifts=_get(cp, "experiment", "shifts", int, 16),
        seed=_get(cp, "experiment", "seed", int, 0),
        t_scale=_get(cp, "experiment", "t_scale", str, "prior"),
        scheme=scheme,
        t_lambda=_get(cp, "scheme", "t_lambda", float, 2.0) if sec("scheme") else 2.0,
        pod_kappa=_get(cp, "pod", "kappa", float, 0.1) if sec("pod") else 0.1,
        pod_eta=_get(cp, "pod", "eta", float, 3.1) if sec("pod") else 3.1,
        pod_lambda=_get(cp, "pod", "lambda", float, 0.51) if sec("pod") else 0.51,
        output_dir=_get(cp, "output", "dir", str, "results") if sec("output") else "results",
        base_dir=base_dir,
    )
    build_problem(cfg)   # validates problem keys and referenced files
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# Problem construction
# ---------------------------------------------------------------------------

@dataclass
class BuiltProblem:
    problem: GaussianProblem
    exact: Optional[float]
    instance: object = None


def _floats(text):
    return np.array([float(v) for v in text.split()])


def build_problem(cfg: ExperimentConfig) -> BuiltProblem:
    """Instantiate the configured problem; raises :class:`ConfigError` on bad keys."""
    p = cfg.params
    name = cfg.problem

    def need(key, conv):
        if key not in p:
            raise ConfigError(f"problem {name!r} needs key {key!r}")
        try:
            return conv(p[key])
        except ValueError as exc:
            raise ConfigError(f"[problem] {key} = {p[key]!r}: {exc}") from None

    try:
        if name == "randleman_bartter":
            inst = models.RbInstance(need("dim", int), need("r0", float), need("sigma", float))
            exact = models.rb_price_closed_form_sigma0(inst) if inst.sigma == 0 else None
            return BuiltProblem(models.rb_problem(inst), exact, inst)
        if name == "glmm":
            if "counts" in p:
                path = os.path.join(cfg.base_dir, p["counts"])
                if not os.path.exists(path):
                    raise ConfigError(f"counts file {path} does not exist")
                y = models.read_counts(path)
            else:
                y = tuple(int(v) for v in need("y", str).split())
            inst = models.GlmmInstance(y, need("beta", float), need("kappa", float),
                                       need("sigma", float))
            return BuiltProblem(models.glmm_problem(inst), None, inst)
        if name.startswith("synthetic:"):
            kind = name.split(":", 1)[1]
            if kind == "gaussian_mgf":
                syn = models.gaussian_mgf(need("a", _floats))
            elif kind == "constant":
                syn = models.constant(need("dim", int))
            elif kind == "sine_quadratic":
                syn = models.sine_quadratic()
            elif kind == "cubic_decay":
                syn = models.cubic_decay(need("dim", int))
            elif kind == "product_peak":
                syn = models.product_peak(need("c", _floats))
            else:
                raise ConfigError(f"unknown synthetic problem {kind!r}")
            return BuiltProblem(syn.problem, syn.exact)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown problem {name!r}")
