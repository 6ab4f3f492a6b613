"""Parameter model, mark distributions, stability checks and first-moment oracles.

Everything here is an immutable value object.  The moment formulas are the
closed-form (exponential kernel) or ODE-integrated (Erlang kernel) solutions
of the first-moment equations obtained by taking expectations in the
intensity dynamics.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

log = logging.getLogger(__name__)

EXPONENTIAL = "exp"
ERLANG = "erlang"
KERNELS = (EXPONENTIAL, ERLANG)


class ParameterError(ValueError):
    """Base class for rejected parameter sets."""

    def __init__(self, constraint: str, message: str):
        super().__init__(message)
        self.constraint = constraint


class NonPositiveParameter(ParameterError):
    pass


class UnstableParameters(ParameterError):
    pass


class ConfigError(ParameterError):
    """Malformed parameter document (unknown or missing fields, bad types)."""


class OutOfHorizon(ValueError):
    pass


# --------------------------------------------------------------------------
# marks


@dataclass(frozen=True)
class MarkDistribution:
    def mean(self) -> float:
        raise NotImplementedError

    def second_moment(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(MarkDistribution):
    value: float = 1.0

    def mean(self) -> float:
        return float(self.value)

    def second_moment(self) -> float:
        return float(self.value) ** 2

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def to_dict(self):
        return {"type": "constant", "value": self.value}


@dataclass(frozen=True)
class ExponentialRate(MarkDistribution):
    rate: float = 1.0

    def mean(self) -> float:
        return 1.0 / self.rate

    def second_moment(self) -> float:
        return 2.0 / self.rate**2

    def sample(self, rng, size):
        # standard_exponential can return exactly 0.0 with negligible probability;
        # marks must stay strictly positive.
        z = rng.standard_exponential(size) / self.rate
        return np.where(z > 0.0, z, np.finfo(float).tiny)

    def to_dict(self):
        return {"type": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Empirical(MarkDistribution):
    """Resamples the stored observations uniformly with replacement."""

    samples: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(float(s) for s in self.samples))

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def second_moment(self) -> float:
        return float(np.mean(np.square(self.samples)))

    def sample(self, rng, size):
        data = np.asarray(self.samples)
        return data[rng.integers(0, len(data), size=size)]

    def to_dict(self):
        return {"type": "empirical", "samples": list(self.samples)}


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    alpha: float
    beta: float

    @property
    def is_erlang(self) -> bool:
        return self.variant == ERLANG

    def stability_bound(self) -> float:
        return self.beta**2 if self.is_erlang else self.beta

    def __call__(self, u):
        """Kernel value phi(u)."""
        u = np.asarray(u, dtype=float)
        decay = self.alpha * np.exp(-self.beta * u)
        return u * decay if self.is_erlang else decay


@dataclass(frozen=True)
class HawkesParams:
    kernel: KernelSpec
    lambda_inf: float
    x0: float
    marks: MarkDistribution = field(default_factory=lambda: Constant(1.0))

    @property
    def alpha(self) -> float:
        return self.kernel.alpha

    @property
    def beta(self) -> float:
        return self.kernel.beta

    @property
    def is_erlang(self) -> bool:
        return self.kernel.is_erlang

    def replace(self, **changes) -> "HawkesParams":
        kernel_keys = {"variant", "alpha", "beta"}
        kern = {k: changes.pop(k) for k in list(changes) if k in kernel_keys}
        kernel = KernelSpec(**{**self.kernel.__dict__, **kern})
        return HawkesParams(**{**self.__dict__, "kernel": kernel, **changes})

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.variant,
            "alpha": self.alpha,
            "beta": self.beta,
            "lambda_inf": self.lambda_inf,
            "x0": self.x0,
            "marks": self.marks.to_dict(),
        }

    def digest(self) -> str:
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def exponential_params(alpha, beta, lambda_inf, x0, marks=None) -> HawkesParams:
    return HawkesParams(KernelSpec(EXPONENTIAL, alpha, beta), lambda_inf, x0, marks or Constant(1.0))


def erlang_params(alpha, beta, lambda_inf, x0, marks=None) -> HawkesParams:
    return HawkesParams(KernelSpec(ERLANG, alpha, beta), lambda_inf, x0, marks or Constant(1.0))


def fig4_params() -> HawkesParams:
    """Exponential kernel, alpha=2, beta=5, baseline 3, start 4, Exp(1) marks."""
    return exponential_params(2.0, 5.0, 3.0, 4.0, ExponentialRate(1.0))


@dataclass(frozen=True)
class GridSpec:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise NonPositiveParameter("T", f"horizon must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise NonPositiveParameter("N", f"step count must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.T / self.N

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def index(self, t: float) -> int:
        """Grid index floor(N t / T), robust to rounding at grid points."""
        if t < 0 or t > self.T * (1 + 1e-12):
            raise OutOfHorizon(f"t={t} outside [0, {self.T}]")
        x = min(self.N * t / self.T, float(self.N))
        k = round(x)
        if abs(x - k) <= 1e-9 * max(1.0, x):
            return int(k)
        return int(math.floor(x))


# --------------------------------------------------------------------------
# validation


def validate(params: HawkesParams) -> list[str]:
    """Check positivity and stability; return warnings, raise on violations.

    Raises
    ------
    NonPositiveParameter
        A parameter is outside its admissible range.
    UnstableParameters
        ``alpha * E[zeta]`` reaches the kernel's stability bound.
    """
    k = params.kernel
    if k.variant not in KERNELS:
        raise ConfigError("kernel", f"unknown kernel variant {k.variant!r}")
    checks = [
        ("alpha", k.alpha, k.alpha >= 0),
        ("beta", k.beta, k.beta > 0),
        ("lambda_inf", params.lambda_inf, params.lambda_inf > 0),
        ("x0", params.x0, params.x0 >= 0),
    ]
    for name, value, ok in checks:
        if not (ok and math.isfinite(value)):
            raise NonPositiveParameter(name, f"{name}={value} violates its positivity constraint")
    marks = params.marks
    if isinstance(marks, Constant) and not marks.value > 0:
        raise NonPositiveParameter("marks.value", "constant mark must be positive")
    if isinstance(marks, ExponentialRate) and not marks.rate > 0:
        raise NonPositiveParameter("marks.rate", "exponential mark rate must be positive")
    if isinstance(marks, Empirical) and (not marks.samples or min(marks.samples) <= 0):
        raise NonPositiveParameter("marks.samples", "empirical marks must be nonempty and positive")

    load = k.alpha * marks.mean()
    bound = k.stability_bound()
    if not load < bound:
        raise UnstableParameters(
            "stability",
            f"alpha*E[zeta]={load:g} must be < {bound:g} for the {k.variant} kernel",
        )
    notes = []
    if params.x0 == 0:
        notes.append("x0=0: initial intensity is zero")
    if k.alpha == 0:
        notes.append("alpha=0: process degenerates to an inhomogeneous Poisson process")
    for n in notes:
        log.info(n)
    if params.x0 == 0:
        warnings.warn(notes[0], stacklevel=2)
    return notes


# --------------------------------------------------------------------------
# moments


def _decay_rate(params: HawkesParams) -> float:
    return params.beta - params.alpha * params.marks.mean()


def stationary_intensity(params: HawkesParams) -> float:
    """Long-run mean intensity."""
    validate(params)
    m = params.marks.mean()
    if params.is_erlang:
        return params.beta**2 * params.lambda_inf / (params.beta**2 - params.alpha * m)
    return params.beta * params.lambda_inf / _decay_rate(params)


def _erlang_moments(params: HawkesParams, t: float, steps: int = 10_000) -> np.ndarray:
    """RK4 solution of the linear moment system (E lambda, E xi, E H) at time t."""
    b, lam = params.beta, params.lambda_inf
    am = params.alpha * params.marks.mean()
    A = np.array([[-b, 1.0, 0.0], [am, -b, 0.0], [1.0, 0.0, 0.0]])
    c = np.array([b * lam, 0.0, 0.0])
    z = np.array([params.x0, 0.0, 0.0])
    if t == 0:
        return z
    dt = t / steps

    def f(z):
        return A @ z + c

    for _ in range(steps):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return z


def mean_intensity(params: HawkesParams, t: float) -> float:
    """E[lambda_t] started from lambda_0 = x0."""
    validate(params)
    if t < 0:
        raise OutOfHorizon(f"t={t} < 0")
    if params.is_erlang:
        return float(_erlang_moments(params, t)[0])
    mu = stationary_intensity(params)
    return mu + (params.x0 - mu) * math.exp(-_decay_rate(params) * t)


def mean_auxiliary(params: HawkesParams, t: float) -> float:
    """E[xi_t] for the Erlang kernel (identically zero for the exponential one)."""
    validate(params)
    if not params.is_erlang:
        return 0.0
    return float(_erlang_moments(params, t)[1])


def mean_count(params: HawkesParams, t: float) -> float:
    """E[H_t], the integral of the mean intensity over [0, t]."""
    validate(params)
    if t < 0:
        raise OutOfHorizon(f"t={t} < 0")
    if params.is_erlang:
        return float(_erlang_moments(params, t)[2])
    mu = stationary_intensity(params)
    r = _decay_rate(params)
    return mu * t + (params.x0 - mu) * (-math.expm1(-r * t)) / r


def mean_loss(params: HawkesParams, t: float) -> float:
    return mean_count(params, t) * params.marks.mean()


# --------------------------------------------------------------------------
# JSON ingestion

_PARAM_FIELDS = {"kernel", "alpha", "beta", "lambda_inf", "x0", "marks"}
_MARK_FIELDS = {
    "constant": {"value"},
    "exponential": {"rate"},
    "empirical": {"samples"},
}


def marks_from_dict(doc: Mapping[str, Any]) -> MarkDistribution:
    if not isinstance(doc, Mapping) or "type" not in doc:
        raise ConfigError("marks", "marks must be an object with a 'type' field")
    kind = doc["type"]
    if kind not in _MARK_FIELDS:
        raise ConfigError("marks.type", f"unknown mark type {kind!r}")
    extra = set(doc) - _MARK_FIELDS[kind] - {"type"}
    missing = _MARK_FIELDS[kind] - set(doc)
    if extra:
        raise ConfigError("marks", f"unknown mark fields {sorted(extra)}")
    if missing:
        raise ConfigError("marks", f"missing mark fields {sorted(missing)}")
    try:
        if kind == "constant":
            return Constant(float(doc["value"]))
        if kind == "exponential":
            return ExponentialRate(float(doc["rate"]))
        return Empirical(tuple(float(s) for s in doc["samples"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError("marks", f"bad mark parameter: {exc}") from exc


def params_from_dict(doc: Mapping[str, Any], check: bool = True) -> HawkesParams:
    """Build parameters from a JSON-like document; unknown fields are rejected."""
    extra = set(doc) - _PARAM_FIELDS
    missing = _PARAM_FIELDS - set(doc)
    if extra:
        raise ConfigError("params", f"unknown fields {sorted(extra)}")
    if missing:
        raise ConfigError("params", f"missing fields {sorted(missing)}")
    if doc["kernel"] not in KERNELS:
        raise ConfigError("kernel", f"kernel must be one of {KERNELS}, got {doc['kernel']!r}")
    try:
        kernel = KernelSpec(doc["kernel"], float(doc["alpha"]), float(doc["beta"]))
        params = HawkesParams(kernel, float(doc["lambda_inf"]), float(doc["x0"]), marks_from_dict(doc["marks"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("params", f"bad parameter value: {exc}") from exc
    if check:
        validate(params)
    return params


def load_params(path) -> HawkesParams:
    with open(path) as fh:
        return params_from_dict(json.load(fh))
