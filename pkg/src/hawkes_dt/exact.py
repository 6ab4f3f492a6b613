"""Continuous-time reference simulators.

``exact_exponential`` samples inter-arrival times exactly by splitting each
waiting time into a baseline part and a decaying-excess part.
``thinning_erlang`` uses thinning under the global dominating rate of the
no-jump flow.  Both are used as ground truth for the discrete chain.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import rng as _rng
from .core import HawkesParams, OutOfHorizon, validate

_E = math.e


@dataclass
class EventRecord:
    times: np.ndarray
    marks: np.ndarray
    horizon: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.marks = np.asarray(self.marks, dtype=float)

    @property
    def count(self) -> int:
        return len(self.times)

    @property
    def loss(self) -> float:
        return float(self.marks.sum())


class _Buffered:
    """Draws uniforms and marks from a generator in fixed-size blocks."""

    def __init__(self, gen: np.random.Generator, marks, size: int = 64):
        self.gen, self.marks, self.size = gen, marks, size
        self._u = self._z = ()
        self._iu = self._iz = 0

    def uniform(self) -> float:
        if self._iu >= len(self._u):
            self._u = self.gen.random(self.size).tolist()
            self._iu = 0
        self._iu += 1
        return self._u[self._iu - 1]

    def open_uniform(self) -> float:
        # (0, 1): logs of zero are avoided.
        u = self.uniform()
        while u == 0.0:
            u = self.uniform()
        return u

    def mark(self) -> float:
        if self._iz >= len(self._z):
            self._z = self.marks.sample(self.gen, self.size).tolist()
            self._iz = 0
        self._iz += 1
        return self._z[self._iz - 1]


def _first_wait_negative_excess(lam_inf, excess, beta, e):
    """Invert the compensator lam_inf*t + excess*(1-exp(-beta t))/beta = e for excess < 0."""
    def comp(t):
        return lam_inf * t + excess * -math.expm1(-beta * t) / beta - e

    hi = (e - excess / beta) / lam_inf + 1.0
    return brentq(comp, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def exact_exponential(params: HawkesParams, T: float, seed: int, path_index: int = 0) -> EventRecord:
    """Exact event times on (0, T] for the exponential kernel."""
    validate(params)
    if params.is_erlang:
        raise ValueError("exact_exponential needs the exponential kernel")
    src = _Buffered(_rng.stream(seed, path_index, _rng.EXACT), params.marks)
    lam_inf, beta, alpha = params.lambda_inf, params.beta, params.alpha
    s, lam_plus = 0.0, float(params.x0)
    times, marks = [], []
    while True:
        excess = lam_plus - lam_inf
        if excess < 0.0:
            wait = _first_wait_negative_excess(lam_inf, excess, beta, -math.log(src.open_uniform()))
        else:
            if excess > 0.0:
                d = 1.0 + beta * math.log(src.open_uniform()) / excess
                s1 = -math.log(d) / beta if d > 0.0 else math.inf
            else:
                s1 = math.inf
            s2 = -math.log(src.open_uniform()) / lam_inf
            wait = min(s1, s2)
        s += wait
        if s > T:
            break
        zeta = src.mark()
        lam_plus = lam_inf + excess * math.exp(-beta * wait) + alpha * zeta
        times.append(s)
        marks.append(zeta)
    return EventRecord(np.array(times), np.array(marks), T)


def erlang_flow(lam, xi, tau, params: HawkesParams):
    """No-jump evolution of (lambda, xi) over a duration tau."""
    decay = math.exp(-params.beta * tau)
    return (
        params.lambda_inf + (lam - params.lambda_inf) * decay + xi * tau * decay,
        xi * decay,
    )


def erlang_bound(lam, xi, params: HawkesParams) -> float:
    """Supremum over the whole future of the no-jump intensity from (lam, xi)."""
    return params.lambda_inf + max(lam - params.lambda_inf, 0.0) + xi / (_E * params.beta)


def thinning_erlang(params: HawkesParams, T: float, seed: int, path_index: int = 0, stats: dict | None = None) -> EventRecord:
    """Thinning simulation for the Erlang kernel.

    ``stats``, if given, receives ``proposals`` and ``max_ratio`` (the largest
    acceptance ratio seen, which must not exceed 1).
    """
    validate(params)
    if not params.is_erlang:
        raise ValueError("thinning_erlang needs the Erlang kernel")
    src = _Buffered(_rng.stream(seed, path_index, _rng.EXACT), params.marks)
    s, lam, xi = 0.0, float(params.x0), 0.0
    times, marks = [], []
    proposals, max_ratio = 0, 0.0
    while True:
        bound = erlang_bound(lam, xi, params)
        tau = -math.log(src.open_uniform()) / bound
        if s + tau > T:
            break
        s += tau
        lam, xi = erlang_flow(lam, xi, tau, params)
        ratio = lam / bound
        proposals += 1
        max_ratio = max(max_ratio, ratio)
        if not 0.0 <= ratio <= 1.0 + 1e-12:
            raise AssertionError(f"acceptance ratio {ratio} outside [0, 1]")
        if src.uniform() < ratio:
            zeta = src.mark()
            xi += params.alpha * zeta
            times.append(s)
            marks.append(zeta)
    if stats is not None:
        stats.update(proposals=proposals, max_ratio=max_ratio)
    return EventRecord(np.array(times), np.array(marks), T)


def simulate_exact(params: HawkesParams, T: float, seed: int, path_index: int = 0) -> EventRecord:
    fn = thinning_erlang if params.is_erlang else exact_exponential
    return fn(params, T, seed, path_index)


def state_at(record: EventRecord, params: HawkesParams, t) -> tuple:
    """(lambda_t, xi_t, L_t) with events at exactly t included (cadlag)."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if t_arr.min() < 0 or t_arr.max() > record.horizon:
        raise OutOfHorizon(f"t outside [0, {record.horizon}]")
    lag = t_arr[:, None] - record.times[None, :]
    past = lag >= 0.0
    lag = np.where(past, lag, 0.0)
    weight = np.where(past, params.alpha * np.exp(-params.beta * lag) * record.marks, 0.0)
    base = params.lambda_inf + (params.x0 - params.lambda_inf) * np.exp(-params.beta * t_arr)
    loss = np.where(past, record.marks, 0.0).sum(axis=1)
    if params.is_erlang:
        lam = base + (weight * lag).sum(axis=1)
        xi = weight.sum(axis=1)
    else:
        lam = base + weight.sum(axis=1)
        xi = np.zeros_like(lam)
    if np.ndim(t) == 0:
        return float(lam[0]), float(xi[0]), float(loss[0])
    return lam, xi, loss


def _exact_chunk(params, T, seed, indices, times):
    lam = np.empty((len(indices), len(times)))
    xi = np.empty_like(lam)
    counts = np.empty(len(indices), dtype=np.int64)
    losses = np.empty(len(indices))
    for row, i in enumerate(indices):
        rec = simulate_exact(params, T, seed, int(i))
        lam[row], xi[row], _ = state_at(rec, params, times)
        counts[row] = rec.count
        losses[row] = rec.loss
    return lam, xi, counts, losses


def exact_batch(params: HawkesParams, T: float, seed: int, n_paths: int, times, jobs: int = 1) -> dict:
    """Same output layout as :func:`hawkes_dt.dthp.simulate_batch`."""
    validate(params)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    indices = np.arange(n_paths)
    if jobs <= 1:
        parts = [_exact_chunk(params, T, seed, indices, times)]
    else:
        from concurrent.futures import ProcessPoolExecutor

        chunks = np.array_split(indices, jobs)
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_exact_chunk, *zip(*[(params, T, seed, c, times) for c in chunks])))
    lam, xi, counts, losses = (np.concatenate(p) for p in zip(*parts))
    return {"lambda": lam, "xi": xi, "count": counts, "loss": losses}


def events_csv(record: EventRecord, meta: dict | None = None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "mark"])
    for th, z in zip(record.times, record.marks):
        w.writerow([format(th, ".17g"), format(z, ".17g")])
    return buf.getvalue()
