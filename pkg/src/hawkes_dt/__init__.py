"""Discrete-time Hawkes chains with exponential and Erlang kernels.

Modules: ``core`` (parameters, moment oracles), ``dthp`` (the chain),
``exact`` (continuous-time reference simulators), ``operators`` (one-step
operators and generators), ``analysis`` (distributional comparison),
``coupling`` (common-random-number pairing), ``cli``.
"""
from .core import (
    Constant,
    Empirical,
    ExponentialRate,
    GridSpec,
    HawkesParams,
    KernelSpec,
    erlang_params,
    exponential_params,
    fig4_params,
    validate,
)

__all__ = [
    "Constant",
    "Empirical",
    "ExponentialRate",
    "GridSpec",
    "HawkesParams",
    "KernelSpec",
    "erlang_params",
    "exponential_params",
    "fig4_params",
    "validate",
]
__version__ = "0.1.0"
