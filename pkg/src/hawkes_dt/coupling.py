"""Common-random-number coupling of the chain and the exact process.

Both processes are driven by one marked Poisson random measure on
``[0, T] x [0, inf)`` with unit intensity:

* the exact process accepts a point ``(s, y)`` iff ``y`` lies below the
  intensity just before ``s`` (thinning representation);
* the chain uses, on each grid strip ``[t_k, t_k + h)``, the lowest point
  ``Y_k`` of the strip: ``u_k = 1 - exp(-h Y_k)`` is uniform on [0, 1) and
  independent across strips, so the chain keeps exactly its own law.  The
  step jumps iff ``u_k < l_k h``, i.e. ``Y_k < -log(1 - l_k h) / h``, with the
  mark of that lowest point.

Each marginal law is untouched; only the joint law of the pair changes.  The
empirical 1-Wasserstein distance between coupled samples estimates the same
distance between the marginal laws as independent samples do, without the
sampling noise floor of two independent empirical measures.

The measure is generated in horizontal layers ``[0, H), [H, 2H), ...`` from
the path's stream; a layer is added whenever a threshold reaches the current
top, so results are deterministic per ``(seed, path_index)``.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from . import rng as _rng
from .core import GridSpec, HawkesParams, validate

COUPLING = 6
_NEED_MORE = -1


class _Measure:
    def __init__(self, params: HawkesParams, T: float, gen: np.random.Generator, layer: float):
        self.params, self.T, self.gen, self.layer = params, T, gen, layer
        self.top = 0.0
        self.times = np.empty(0)
        self.heights = np.empty(0)
        self.marks = np.empty(0)
        self.extend()

    def extend(self):
        n = self.gen.poisson(self.layer * self.T)
        t = self.gen.random(n) * self.T
        y = self.top + self.gen.random(n) * self.layer
        z = self.params.marks.sample(self.gen, n)
        self.top += self.layer
        times = np.concatenate([self.times, t])
        order = np.argsort(times, kind="stable")
        self.times = times[order]
        self.heights = np.concatenate([self.heights, y])[order]
        self.marks = np.concatenate([self.marks, z])[order]


@numba.njit(cache=True)
def _chain_on_measure(times, heights, marks, top, N, h, x0, lam_inf, alpha, beta, erlang):
    decay = math.exp(-beta * h)
    base = lam_inf * -math.expm1(-beta * h)
    low = np.full(N, np.inf)
    low_mark = np.zeros(N)
    for i in range(times.shape[0]):
        k = min(int(times[i] / h), N - 1)
        if heights[i] < low[k]:
            low[k] = heights[i]
            low_mark[k] = marks[i]
    l, a = x0, 0.0
    count = 0
    loss = 0.0
    for k in range(N):
        p = l * h
        if p >= 1.0:
            if low[k] == np.inf:
                return l, a, count, loss, _NEED_MORE
            jump = True
        else:
            c = -math.log1p(-p) / h
            if low[k] == np.inf and c >= top:
                return l, a, count, loss, _NEED_MORE
            jump = low[k] < c
        inc = 0.0
        if jump:
            inc = alpha * low_mark[k]
            count += 1
            loss += low_mark[k]
        if erlang:
            a = (a + inc) * decay
            l = base + l * decay + a * h
        else:
            l = base + (l + inc) * decay
    return l, a, count, loss, 0


@numba.njit(cache=True)
def _exact_on_measure(times, heights, marks, top, T, x0, lam_inf, alpha, beta, erlang):
    s = 0.0
    lam = x0  # cadlag value at s
    xi = 0.0
    count = 0
    loss = 0.0
    for i in range(times.shape[0]):
        tau = times[i] - s
        d = math.exp(-beta * tau)
        if erlang:
            if lam_inf + max(lam - lam_inf, 0.0) + xi / (math.e * beta) >= top:
                return lam, xi, count, loss, _NEED_MORE
            lam = lam_inf + (lam - lam_inf) * d + xi * tau * d
            xi = xi * d
        else:
            if max(lam, lam_inf) >= top:
                return lam, xi, count, loss, _NEED_MORE
            lam = lam_inf + (lam - lam_inf) * d
        s = times[i]
        if heights[i] < lam:
            count += 1
            loss += marks[i]
            if erlang:
                xi += alpha * marks[i]
            else:
                lam += alpha * marks[i]
    tau = T - s
    d = math.exp(-beta * tau)
    if erlang:
        if lam_inf + max(lam - lam_inf, 0.0) + xi / (math.e * beta) >= top:
            return lam, xi, count, loss, _NEED_MORE
        lam = lam_inf + (lam - lam_inf) * d + xi * tau * d
        xi = xi * d
    else:
        lam = lam_inf + (lam - lam_inf) * d
    return lam, xi, count, loss, 0


def coupled_batch(
    params: HawkesParams,
    T: float,
    N_list,
    seed: int,
    n_paths: int,
    oracle_params: HawkesParams | None = None,
    layer: float | None = None,
) -> dict:
    """Terminal states at T of coupled exact and chain paths.

    ``oracle_params`` (default ``params``) drive the exact process.

    Returns
    -------
    dict with key "exact" and one key per N, each mapping to a dict of arrays
    ``lambda``, ``xi``, ``count``, ``loss`` of length ``n_paths``.
    """
    validate(params)
    oracle = oracle_params or params
    validate(oracle)
    N_list = [int(n) for n in N_list]
    layer = layer or 2.0 * (max(params.x0, params.lambda_inf) + params.alpha * params.marks.mean()) + 5.0
    keys = ["exact", *N_list]
    out = {k: {"lambda": np.empty(n_paths), "xi": np.empty(n_paths),
               "count": np.empty(n_paths, np.int64), "loss": np.empty(n_paths)} for k in keys}
    args = (params.x0, params.lambda_inf, params.alpha, params.beta, params.is_erlang)
    oargs = (oracle.x0, oracle.lambda_inf, oracle.alpha, oracle.beta, oracle.is_erlang)
    for i in range(n_paths):
        m = _Measure(params, T, _rng.stream(seed, i, COUPLING), layer)
        for key in keys:
            while True:
                if key == "exact":
                    res = _exact_on_measure(m.times, m.heights, m.marks, m.top, T, *oargs)
                else:
                    res = _chain_on_measure(m.times, m.heights, m.marks, m.top, key, GridSpec(T, key).h, *args)
                if res[4] != _NEED_MORE:
                    break
                m.extend()
            rec = out[key]
            rec["lambda"][i], rec["xi"][i], rec["count"][i], rec["loss"][i] = res[:4]
    return out
