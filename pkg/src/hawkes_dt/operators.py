"""One-step transition operators, generators and compactly supported test functions.

All evaluations are vectorised over arrays of states.  Mark integrals are
replaced by a finite rule ``sum_i w_i g(z_i)`` (see :class:`MarkRule`); every
rule used here has positive weights summing to one, so the operators stay
positive and conservative exactly as their continuous counterparts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.laguerre import laggauss
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from . import rng as _rng
from .core import Constant, Empirical, ExponentialRate, HawkesParams, validate


class QuadratureUnavailable(ValueError):
    pass


# --------------------------------------------------------------------------
# smooth transition and the psi_K family


def bump_kernel(s):
    """exp(-1 / (1 - (2s - 1)^2)) on (0, 1), zero elsewhere."""
    s = np.asarray(s, dtype=float)
    w = 2.0 * s - 1.0
    q = 1.0 - w * w
    inside = q > 1e-3  # exp(-1000) underflows anyway
    return np.where(inside, np.exp(-1.0 / np.where(inside, q, 1.0)), 0.0)


def bump_kernel_d1(s):
    s = np.asarray(s, dtype=float)
    w = 2.0 * s - 1.0
    q = 1.0 - w * w
    inside = q > 1e-3
    qs = np.where(inside, q, 1.0)
    return np.where(inside, -4.0 * w / qs**2 * np.exp(-1.0 / qs), 0.0)


@lru_cache(maxsize=None)
def bump_mass() -> float:
    """Integral of :func:`bump_kernel` over [0, 1]."""
    val, _ = quad(lambda s: float(bump_kernel(s)), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


_GL_X, _GL_W = leggauss(32)
_PANELS = 4  # composite rule: 4 x 32 nodes reaches rounding level, 1 x 48 stalls near 5e-13


def _bump_cdf(s):
    """Normalised integral of the bump kernel from 0 to s (clipped to [0, 1])."""
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 1.0, 1.0, 0.0)
    inside = (s > 0.0) & (s < 1.0)
    if inside.any():
        si = s[inside]
        # integrate over the shorter side of the midpoint; the kernel is symmetric
        r = np.minimum(si, 1.0 - si)
        step = r / _PANELS
        part = np.zeros_like(r)
        for j in range(_PANELS):
            nodes = step[:, None] * (j + 0.5 * (_GL_X + 1.0))
            part += bump_kernel(nodes) @ _GL_W
        part *= 0.5 * step / bump_mass()
        out[inside] = np.where(si <= 0.5, part, 1.0 - part)
    return out


@dataclass(frozen=True)
class Smooth1D:
    """A C^2 scalar function with analytic first and second derivatives."""

    f: Callable
    d1: Callable
    d2: Callable
    support: float  # f, d1, d2 vanish for x > support
    name: str = ""

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    def __mul__(self, other: "Smooth1D") -> "Smooth1D":
        a, b = self, other
        return Smooth1D(
            lambda x: a.f(x) * b.f(x),
            lambda x: a.d1(x) * b.f(x) + a.f(x) * b.d1(x),
            lambda x: a.d2(x) * b.f(x) + 2 * a.d1(x) * b.d1(x) + a.f(x) * b.d2(x),
            min(a.support, b.support),
            f"{a.name}*{b.name}",
        )


def step_down(K: float, width: float = 1.0) -> Smooth1D:
    """1 below K, 0 above K + width, smooth monotone in between."""
    def f(x):
        return 1.0 - _bump_cdf((np.asarray(x, dtype=float) - K) / width)

    def d1(x):
        return -bump_kernel((np.asarray(x, dtype=float) - K) / width) / (bump_mass() * width)

    def d2(x):
        return -bump_kernel_d1((np.asarray(x, dtype=float) - K) / width) / (bump_mass() * width**2)

    return Smooth1D(f, d1, d2, K + width, f"psi[{K:g},{width:g}]")


def make_psi(K: float) -> Smooth1D:
    """psi_K: equal to 1 on x < K and 0 on x > K + 1."""
    if not K > 0:
        raise ValueError("K must be positive")
    return step_down(K, 1.0)


def step_up(K: float, width: float = 1.0) -> Smooth1D:
    down = step_down(K, width)
    return Smooth1D(
        lambda x: 1.0 - down.f(x),
        lambda x: -down.d1(x),
        lambda x: -down.d2(x),
        math.inf,
        f"up[{K:g},{width:g}]",
    )


def plateau(lo: float, hi: float, width: float = 1.0) -> Smooth1D:
    """Rises on [lo, lo+width], equals 1 up to hi-width, vanishes beyond hi."""
    out = step_up(lo, width) * step_down(hi - width, width)
    return Smooth1D(out.f, out.d1, out.d2, hi, f"plateau[{lo:g},{hi:g},{width:g}]")


def polynomial(c0: float, c1: float = 0.0, c2: float = 0.0) -> Smooth1D:
    return Smooth1D(
        lambda x: c0 + c1 * x + c2 * x * x,
        lambda x: c1 + 2 * c2 * x,
        lambda x: np.full_like(np.asarray(x, dtype=float), 2 * c2),
        math.inf,
        f"poly[{c0:g},{c1:g},{c2:g}]",
    )


def zero_1d() -> Smooth1D:
    z = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    return Smooth1D(z, z, z, 0.0, "zero")


def constant_1d(c: float = 1.0) -> Smooth1D:
    z = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    return Smooth1D(lambda x: np.full_like(np.asarray(x, dtype=float), c), z, z, math.inf, f"const[{c:g}]")


# --------------------------------------------------------------------------
# test functions on the state space


@dataclass(frozen=True)
class TestFunction:
    """Test function on R+ (dim 1) or R+^2 (dim 2, product form g(y) k(v)).

    ``d1`` returns f' (dim 1) or the pair (d/dy, d/dv); ``d2`` returns f''
    or the triple (d2/dy2, d2/dydv, d2/dv2).
    """

    __test__ = False  # not a pytest class

    g: Smooth1D
    k: Smooth1D | None = None
    name: str = ""

    @property
    def dim(self) -> int:
        return 1 if self.k is None else 2

    @property
    def support_bound(self) -> float:
        return self.g.support if self.k is None else max(self.g.support, self.k.support)

    def evaluate(self, y, v=None):
        if self.k is None:
            return self.g.f(np.asarray(y, dtype=float))
        y, v = np.asarray(y, dtype=float), np.asarray(v, dtype=float)
        return self.g.f(y) * self.k.f(v)

    __call__ = evaluate

    def d1(self, y, v=None):
        if self.k is None:
            return self.g.d1(np.asarray(y, dtype=float))
        y, v = np.asarray(y, dtype=float), np.asarray(v, dtype=float)
        return self.g.d1(y) * self.k.f(v), self.g.f(y) * self.k.d1(v)

    def d2(self, y, v=None):
        if self.k is None:
            return self.g.d2(np.asarray(y, dtype=float))
        y, v = np.asarray(y, dtype=float), np.asarray(v, dtype=float)
        return (
            self.g.d2(y) * self.k.f(v),
            self.g.d1(y) * self.k.d1(v),
            self.g.f(y) * self.k.d2(v),
        )

    def sup(self, ngrid: int = 4001) -> float:
        """Sup of |f| estimated on a grid over its support box."""
        top = self.support_bound if math.isfinite(self.support_bound) else 50.0
        xs = np.linspace(0.0, top, ngrid)
        if self.k is None:
            return float(np.abs(self.evaluate(xs)).max())
        return float(np.abs(self.g.f(xs)).max() * np.abs(self.k.f(xs)).max())


def family_1d() -> list[TestFunction]:
    """Shipped one-dimensional family: psi_K, plateaus at three scales, plateau x quadratic, zero."""
    return [
        TestFunction(make_psi(8.0), name="psi_8"),
        TestFunction(plateau(1.0, 4.0, 0.5), name="plateau_small"),
        TestFunction(plateau(0.0, 10.0, 1.0), name="plateau_mid"),
        TestFunction(plateau(2.0, 20.0, 3.0), name="plateau_wide"),
        TestFunction(plateau(0.0, 10.0, 1.0) * polynomial(1.0, 0.5, -0.04), name="plateau_quadratic"),
        TestFunction(zero_1d(), name="zero"),
    ]


def family_2d() -> list[TestFunction]:
    """Shipped two-dimensional (tensor product) family for the Erlang state."""
    return [
        TestFunction(make_psi(8.0), make_psi(6.0), name="psi_8 x psi_6"),
        TestFunction(plateau(0.0, 10.0, 1.0), make_psi(6.0), name="plateau_mid x psi_6"),
        TestFunction(plateau(1.0, 6.0, 1.0), plateau(0.5, 5.0, 1.0), name="plateau x plateau"),
        TestFunction(plateau(0.0, 10.0, 1.0) * polynomial(1.0, 0.5, -0.04), make_psi(4.0), name="quadratic x psi_4"),
        TestFunction(zero_1d(), zero_1d(), name="zero"),
    ]


def test_family(params: HawkesParams) -> list[TestFunction]:
    return family_2d() if params.is_erlang else family_1d()


# --------------------------------------------------------------------------
# mark integration


@dataclass(frozen=True)
class MarkRule:
    """Discrete mark law: ascending nodes with positive weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    def expect(self, g: Callable) -> float:
        return float(np.dot(self.weights, g(self.nodes)))

    def upto(self, zmax: float) -> "MarkRule":
        """Nodes not above zmax (the remainder contributes f = 0 by support)."""
        n = int(np.searchsorted(self.nodes, zmax, side="right"))
        return MarkRule(self.nodes[:n], self.weights[:n], self.kind)


@dataclass(frozen=True)
class OperatorConfig:
    """Mark-quadrature choice and sup-norm grid.

    ``mark_rule`` is "auto" (composite Gauss-Legendre for exponential marks,
    exact for constant or empirical marks, Monte Carlo otherwise),
    "composite", "gauss-laguerre", "exact" or "mc".
    """

    mark_rule: str = "auto"
    laguerre_nodes: int = 64
    composite_panels: int = 800
    composite_order: int = 8
    composite_tail: float = 40.0  # truncation point in units of the mean mark
    mc_samples: int = 100_000
    mc_seed: int = 0
    mc_fallback: bool = True
    grid_points: int = 10_000
    grid_points_2d: int = 201
    tail_points: int = 1_000

    def rule(self, params: HawkesParams) -> MarkRule:
        return mark_rule(params, self)


@lru_cache(maxsize=None)
def _laguerre(n: int):
    x, w = laggauss(n)
    return x, w / w.sum()


@lru_cache(maxsize=None)
def _composite_exponential(panels: int, order: int, tail: float):
    """Composite Gauss-Legendre rule for the Exp(1) law truncated at ``tail``."""
    x, w = leggauss(order)
    edges = np.linspace(0.0, tail, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel() * np.exp(-nodes)
    return nodes, weights / weights.sum()


def mark_rule(params: HawkesParams, cfg: OperatorConfig = OperatorConfig()) -> MarkRule:
    marks = params.marks
    kind = cfg.mark_rule
    if kind == "auto":
        if isinstance(marks, ExponentialRate):
            kind = "composite"
        elif isinstance(marks, (Constant, Empirical)):
            kind = "exact"
        else:
            kind = "mc"
    if kind == "composite" and isinstance(marks, ExponentialRate):
        x, w = _composite_exponential(cfg.composite_panels, cfg.composite_order, cfg.composite_tail)
        return MarkRule(x / marks.rate, w, kind)
    if kind == "gauss-laguerre" and isinstance(marks, ExponentialRate):
        x, w = _laguerre(cfg.laguerre_nodes)
        return MarkRule(x / marks.rate, w, kind)
    if kind == "exact" and isinstance(marks, Constant):
        return MarkRule(np.array([marks.value]), np.array([1.0]), kind)
    if kind == "exact" and isinstance(marks, Empirical):
        s, counts = np.unique(np.asarray(marks.samples), return_counts=True)
        return MarkRule(s, counts / counts.sum(), kind)
    if kind == "mc" or cfg.mc_fallback:
        gen = _rng.stream(cfg.mc_seed, 0, _rng.MARK_QUADRATURE)
        z = np.sort(marks.sample(gen, cfg.mc_samples))
        return MarkRule(z, np.full(len(z), 1.0 / len(z)), "mc")
    raise QuadratureUnavailable(f"no rule {cfg.mark_rule!r} for marks {marks!r}")


# --------------------------------------------------------------------------
# operators

_ROWS = 512


def _coeffs(params, h):
    decay = math.exp(-params.beta * h)
    return params.lambda_inf * -math.expm1(-params.beta * h), decay


def _jump_weights(y, h):
    p = y * h
    sure = p >= 1.0
    return np.where(sure, 0.0, 1.0 - p), np.where(sure, 1.0, p)


def _node_limit(alpha, room):
    """Largest mark z with alpha * z <= room (all marks if alpha == 0)."""
    if alpha == 0.0:
        return math.inf if room >= 0 else -math.inf
    return room / alpha


def _rows(n):
    for s in range(0, n, _ROWS):
        yield slice(s, min(n, s + _ROWS))


def one_step_exp(f: TestFunction, y, h: float, params: HawkesParams, cfg: OperatorConfig = OperatorConfig(), rule=None):
    """E[f(l_{k+1}) | l_k = y] for the exponential-kernel chain."""
    rule = rule or cfg.rule(params)
    y_in = np.asarray(y, dtype=float)
    y = y_in.ravel()
    base, decay = _coeffs(params, h)
    stay, jump = _jump_weights(y, h)
    no_jump = f(base + y * decay)
    with_jump = np.zeros_like(y)
    S = f.g.support
    for sl in _rows(len(y)):
        r = rule.upto(_node_limit(params.alpha * decay, S - base - y[sl].min() * decay))
        if len(r.nodes):
            targets = base + (y[sl, None] + params.alpha * r.nodes) * decay
            with_jump[sl] = f(targets) @ r.weights
    return (stay * no_jump + jump * with_jump).reshape(y_in.shape)


def one_step_erlang(f: TestFunction, y, v, h: float, params: HawkesParams, cfg: OperatorConfig = OperatorConfig(), rule=None):
    """E[f(l_{k+1}, a_{k+1}) | (l_k, a_k) = (y, v)] for the Erlang-kernel chain."""
    rule = rule or cfg.rule(params)
    y_in, v_in = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(v, dtype=float))
    y, v = y_in.ravel(), v_in.ravel()
    base, decay = _coeffs(params, h)
    stay, jump = _jump_weights(y, h)
    no_jump = f(base + y * decay + v * h * decay, v * decay)
    with_jump = np.zeros_like(y)
    a_decay = params.alpha * decay
    for sl in _rows(len(y)):
        y0, v0 = y[sl].min(), v[sl].min()
        zmax = min(
            _node_limit(a_decay, f.k.support - v0 * decay),
            _node_limit(a_decay * h, f.g.support - base - y0 * decay - v0 * h * decay),
        )
        r = rule.upto(zmax)
        if len(r.nodes):
            a_next = (v[sl, None] + params.alpha * r.nodes) * decay
            l_next = base + y[sl, None] * decay + h * a_next
            with_jump[sl] = f(l_next, a_next) @ r.weights
    return (stay * no_jump + jump * with_jump).reshape(y_in.shape)


def generator_exp(f: TestFunction, y, params: HawkesParams, cfg: OperatorConfig = OperatorConfig(), rule=None):
    """Generator of the exponential-kernel intensity applied to f at y."""
    rule = rule or cfg.rule(params)
    y_in = np.asarray(y, dtype=float)
    y = y_in.ravel()
    drift = params.beta * (params.lambda_inf - y) * f.d1(y)
    integral = np.zeros_like(y)
    for sl in _rows(len(y)):
        r = rule.upto(_node_limit(params.alpha, f.g.support - y[sl].min()))
        if len(r.nodes):
            integral[sl] = f(y[sl, None] + params.alpha * r.nodes) @ r.weights
    return (drift + y * (integral - f(y))).reshape(y_in.shape)


def generator_erlang(f: TestFunction, y, v, params: HawkesParams, cfg: OperatorConfig = OperatorConfig(), rule=None):
    """Generator of the Erlang-kernel (intensity, auxiliary) pair applied to f at (y, v)."""
    rule = rule or cfg.rule(params)
    y_in, v_in = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(v, dtype=float))
    y, v = y_in.ravel(), v_in.ravel()
    fy, fv = f.d1(y, v)
    drift = (v + params.beta * (params.lambda_inf - y)) * fy - params.beta * v * fv
    integral = np.zeros_like(y)
    for sl in _rows(len(y)):
        r = rule.upto(_node_limit(params.alpha, f.k.support - v[sl].min()))
        if len(r.nodes):
            integral[sl] = f(y[sl, None], v[sl, None] + params.alpha * r.nodes) @ r.weights
    return (drift + y * (integral - f(y, v))).reshape(y_in.shape)


def one_step(f, state, h, params, cfg=OperatorConfig(), rule=None):
    if params.is_erlang:
        return one_step_erlang(f, state[0], state[1], h, params, cfg, rule)
    return one_step_exp(f, state, h, params, cfg, rule)


def generator(f, state, params, cfg=OperatorConfig(), rule=None):
    if params.is_erlang:
        return generator_erlang(f, state[0], state[1], params, cfg, rule)
    return generator_exp(f, state, params, cfg, rule)


# --------------------------------------------------------------------------
# --------------------------------------------------------------------------
# Monte Carlo oracle for one chain step


def mc_one_step(f: TestFunction, state, h: float, params: HawkesParams, n: int = 1_000_000, seed: int = 0):
    """Brute-force E[f(next state)] by drawing n independent chain steps.

    Returns (mean, standard error).
    """
    gen = _rng.stream(seed, 0, _rng.OPERATOR_MC)
    u = gen.random(n)
    z = params.marks.sample(gen, n)
    decay = math.exp(-params.beta * h)
    base = params.lambda_inf * (1.0 - decay)
    if params.is_erlang:
        y, v = state
        inc = np.where(u < y * h, params.alpha * z, 0.0)
        a_next = (v + inc) * decay
        vals = f(base + y * decay + a_next * h, a_next)
    else:
        y = state
        inc = np.where(u < y * h, params.alpha * z, 0.0)
        vals = f(base + (y + inc) * decay)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


# --------------------------------------------------------------------------
# generator convergence


@dataclass
class NormResult:
    N: int
    h: float
    sup_norm_error: float
    argmax_y: object

    def as_row(self) -> dict:
        return {"N": self.N, "h": self.h, "sup_norm_error": self.sup_norm_error, "argmax_y": self.argmax_y}


def grid_extent(support: float, params: HawkesParams, rule: MarkRule) -> float:
    """Upper end of the sup grid along one axis: support + largest jump + lambda_inf + 1."""
    reach = support if math.isfinite(support) else 50.0
    return reach + params.alpha * float(rule.nodes.max()) + params.lambda_inf + 1.0


def _axis(top: float, n: int, h: float, tail: int) -> np.ndarray:
    """Uniform points on [0, top]; if 1/h lies beyond ``top`` a coarse tail reaches 1/h + 1."""
    pts = np.linspace(0.0, top, n)
    edge = 1.0 / h + 1.0
    if edge > top and tail > 0:
        pts = np.concatenate([pts, np.linspace(top, edge, tail + 1)[1:]])
    return pts


def sup_grid(f: TestFunction, params: HawkesParams, h: float, cfg: OperatorConfig, rule: MarkRule):
    if f.dim == 1:
        return (_axis(grid_extent(f.g.support, params, rule), cfg.grid_points, h, cfg.tail_points),)
    ys = _axis(grid_extent(f.g.support, params, rule), cfg.grid_points_2d, h, cfg.tail_points // 10)
    vs = np.linspace(0.0, grid_extent(f.k.support, params, rule), cfg.grid_points_2d)
    Y, V = np.meshgrid(ys, vs, indexing="ij")
    return Y.ravel(), V.ravel()


def generator_convergence_norm(
    f: TestFunction, params: HawkesParams, N: int, T: float, cfg: OperatorConfig = OperatorConfig()
) -> NormResult:
    """Grid sup of |(T^N f - f)/h - A f| with h = T/N."""
    validate(params)
    if N < 1:
        raise ValueError("N must be >= 1")
    if f.dim != (2 if params.is_erlang else 1):
        raise ValueError("test function dimension does not match the kernel")
    h = T / N
    rule = cfg.rule(params)
    pts = sup_grid(f, params, h, cfg, rule)
    if f.dim == 1:
        val = (one_step_exp(f, pts[0], h, params, cfg, rule) - f(pts[0])) / h - generator_exp(f, pts[0], params, cfg, rule)
    else:
        val = (one_step_erlang(f, *pts, h, params, cfg, rule) - f(*pts)) / h - generator_erlang(f, *pts, params, cfg, rule)
    err = np.abs(val)
    i = int(np.argmax(err))
    where = float(pts[0][i]) if f.dim == 1 else [float(pts[0][i]), float(pts[1][i])]
    return NormResult(N, h, float(err[i]), where)


def convergence_table(f, params, N_list, T=1.0, cfg=OperatorConfig()) -> list[NormResult]:
    return [generator_convergence_norm(f, params, int(n), T, cfg) for n in sorted(N_list)]


def loglog_slope(results: list[NormResult]) -> float:
    h = np.log([r.h for r in results])
    e = np.log([r.sup_norm_error for r in results])
    return float(np.polyfit(h, e, 1)[0])
