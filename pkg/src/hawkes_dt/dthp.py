"""Discrete-time Hawkes chain, its piecewise-constant path and the loss process.

Random stream layout (fixed, relied upon by the determinism tests): steps are
processed in blocks of ``BLOCK`` steps; for each block the path's stream first
yields one uniform per step, then one mark per step.  A uniform and a mark are
consumed at every step whether or not a jump occurs.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import rng as _rng
from .core import GridSpec, HawkesParams, OutOfHorizon, validate

BLOCK = 1 << 16
STREAMING_THRESHOLD = 10_000_000


@dataclass(frozen=True)
class ChainState:
    l: float
    a: float = 0.0
    k: int = 0


@dataclass
class ChainPath:
    grid: GridSpec
    l_values: np.ndarray
    a_values: np.ndarray
    jump_flags: np.ndarray
    marks: np.ndarray
    excites: bool = True  # False when alpha = 0: events leave the intensity unchanged

    @property
    def n_jumps(self) -> int:
        """Number of flagged steps (events of the counting process)."""
        return int(self.jump_flags.sum())

    @property
    def intensity_jumps(self) -> np.ndarray:
        """Flags of steps whose event moves the intensity."""
        return self.jump_flags & self.excites


@dataclass
class StreamedPath:
    """Reduced record of a chain run: jumps plus values at requested steps."""

    grid: GridSpec
    jump_steps: np.ndarray
    jump_marks: np.ndarray
    sample_steps: np.ndarray
    l_samples: np.ndarray
    a_samples: np.ndarray
    final: ChainState


@dataclass
class LossPath:
    grid: GridSpec
    cumulative: np.ndarray
    event_steps: list = field(default_factory=list)
    event_marks: list = field(default_factory=list)

    @property
    def counts(self) -> np.ndarray:
        """H at grid points (number of flagged steps strictly before each index)."""
        out = np.zeros(self.grid.N + 1, dtype=np.int64)
        if self.event_steps:
            np.add.at(out, np.asarray(self.event_steps) + 1, 1)
        return np.cumsum(out)


def _coefficients(params: HawkesParams, h: float) -> tuple[float, float]:
    decay = math.exp(-params.beta * h)
    base = params.lambda_inf * -math.expm1(-params.beta * h)
    return base, decay


# --------------------------------------------------------------------------
# single steps (scalar reference)


def step_exponential(state: ChainState, u: float, zeta: float, h: float, params: HawkesParams) -> ChainState:
    """One exponential-kernel step; a jump happens iff ``u < l*h``."""
    base, decay = _coefficients(params, h)
    inc = params.alpha * zeta if u < state.l * h else 0.0
    return ChainState(base + (state.l + inc) * decay, 0.0, state.k + 1)


def step_erlang(state: ChainState, u: float, zeta: float, h: float, params: HawkesParams) -> ChainState:
    """One Erlang-kernel step; the updated auxiliary value feeds the new intensity."""
    base, decay = _coefficients(params, h)
    inc = params.alpha * zeta if u < state.l * h else 0.0
    a_next = (state.a + inc) * decay
    return ChainState(base + state.l * decay + a_next * h, a_next, state.k + 1)


def step(state, u, zeta, h, params):
    fn = step_erlang if params.is_erlang else step_exponential
    return fn(state, u, zeta, h, params)


# --------------------------------------------------------------------------
# compiled block kernel


@numba.njit(cache=True)
def _advance(l, a, u, z, base, decay, alpha, h, erlang, l_out, a_out, flags):
    """Run len(u) steps from (l, a); l_out/a_out receive post-step values."""
    for i in range(u.shape[0]):
        jump = u[i] < l * h
        inc = alpha * z[i] if jump else 0.0
        if erlang:
            a = (a + inc) * decay
            l = base + l * decay + a * h
        else:
            l = base + (l + inc) * decay
        l_out[i] = l
        a_out[i] = a
        flags[i] = jump
    return l, a


def _blocks(params: HawkesParams, grid: GridSpec, gen: np.random.Generator):
    """Yield (start, u, marks) per block in the documented stream order."""
    start = 0
    while start < grid.N:
        n = min(BLOCK, grid.N - start)
        u = gen.random(n)
        z = params.marks.sample(gen, n)
        yield start, u, z
        start += n


def simulate_chain(
    params: HawkesParams,
    grid: GridSpec,
    seed: int,
    path_index: int = 0,
    *,
    streaming: bool | None = None,
    sample_steps=None,
):
    """Simulate the Hawkes chain on ``grid``.

    Parameters
    ----------
    params, grid
        Model and uniform time grid.
    seed, path_index
        Identify the random stream (see :mod:`hawkes_dt.rng`).
    streaming
        Keep only jumps and the values at ``sample_steps`` instead of full
        arrays.  Defaults to True for ``N >= 10**7``.
    sample_steps
        Grid indices to record in streaming mode (default: the final index).

    Returns
    -------
    ChainPath or StreamedPath
    """
    validate(params)
    if streaming is None:
        streaming = grid.N >= STREAMING_THRESHOLD
    gen = _rng.stream(seed, path_index, _rng.DTHP)
    h = grid.h
    base, decay = _coefficients(params, h)
    erlang = bool(params.is_erlang)
    l, a = float(params.x0), 0.0

    if not streaming:
        l_values = np.empty(grid.N + 1)
        a_values = np.empty(grid.N + 1)
        flags = np.empty(grid.N, dtype=np.bool_)
        marks = np.empty(grid.N)
        l_values[0], a_values[0] = l, a
        for start, u, z in _blocks(params, grid, gen):
            stop = start + len(u)
            l, a = _advance(
                l, a, u, z, base, decay, params.alpha, h, erlang,
                l_values[start + 1: stop + 1], a_values[start + 1: stop + 1], flags[start:stop],
            )
            marks[start:stop] = z
        return ChainPath(grid, l_values, a_values, flags, marks, params.alpha > 0)

    steps = np.atleast_1d(np.asarray([grid.N] if sample_steps is None else sample_steps, dtype=np.int64))
    if steps.min() < 0 or steps.max() > grid.N:
        raise OutOfHorizon("sample step outside the grid")
    l_samp = np.empty(len(steps))
    a_samp = np.empty(len(steps))
    l_samp[steps == 0] = l
    a_samp[steps == 0] = a
    jump_steps, jump_marks = [], []
    l_buf = np.empty(min(BLOCK, grid.N))
    a_buf = np.empty_like(l_buf)
    f_buf = np.empty(len(l_buf), dtype=np.bool_)
    for start, u, z in _blocks(params, grid, gen):
        n = len(u)
        l, a = _advance(l, a, u, z, base, decay, params.alpha, h, erlang, l_buf[:n], a_buf[:n], f_buf[:n])
        hit = np.flatnonzero(f_buf[:n])
        jump_steps.append(hit + start)
        jump_marks.append(z[hit])
        sel = (steps > start) & (steps <= start + n)
        l_samp[sel] = l_buf[steps[sel] - start - 1]
        a_samp[sel] = a_buf[steps[sel] - start - 1]
    return StreamedPath(
        grid,
        np.concatenate(jump_steps) if jump_steps else np.empty(0, np.int64),
        np.concatenate(jump_marks) if jump_marks else np.empty(0),
        steps,
        l_samp,
        a_samp,
        ChainState(l, a, grid.N),
    )


def replay_chain(path: ChainPath, params: HawkesParams) -> np.ndarray:
    """Recompute l-values from the stored flags and marks, step by step in Python."""
    base, decay = _coefficients(params, path.grid.h)
    h = path.grid.h
    l, a = float(params.x0), 0.0
    out = [l]
    for jump, z in zip(path.jump_flags, path.marks):
        inc = params.alpha * float(z) if jump else 0.0
        if params.is_erlang:
            a = (a + inc) * decay
            l = base + l * decay + a * h
        else:
            l = base + (l + inc) * decay
        out.append(l)
    return np.array(out)


def path_value(path: ChainPath, t: float) -> tuple[float, float]:
    """Right-continuous step-function value (lambda, xi) at time t."""
    k = path.grid.index(t)
    return float(path.l_values[k]), float(path.a_values[k])


def reconstruct_loss(path: ChainPath) -> LossPath:
    inc = np.where(path.jump_flags, path.marks, 0.0)
    cumulative = np.concatenate([[0.0], np.cumsum(inc)])
    steps = np.flatnonzero(path.jump_flags)
    return LossPath(path.grid, cumulative, steps.tolist(), path.marks[steps].tolist())


# --------------------------------------------------------------------------
# batches


def _batch_chunk(params, grid, seed, indices, steps):
    lam = np.empty((len(indices), len(steps)))
    xi = np.empty_like(lam)
    counts = np.empty(len(indices), dtype=np.int64)
    losses = np.empty(len(indices))
    for row, i in enumerate(indices):
        rec = simulate_chain(params, grid, seed, int(i), streaming=True, sample_steps=steps)
        lam[row], xi[row] = rec.l_samples, rec.a_samples
        counts[row] = len(rec.jump_steps)
        losses[row] = rec.jump_marks.sum()
    return lam, xi, counts, losses


def simulate_batch(params: HawkesParams, grid: GridSpec, seed: int, n_paths: int, times, jobs: int = 1):
    """Sample (lambda, xi) at ``times`` plus final count and loss for many paths.

    Path ``i`` uses stream ``(seed, i)``, so results do not depend on ``jobs``.

    Returns
    -------
    dict with arrays ``lambda`` and ``xi`` of shape (n_paths, len(times)),
    ``count`` and ``loss`` of shape (n_paths,).
    """
    validate(params)
    steps = np.array([grid.index(t) for t in np.atleast_1d(times)], dtype=np.int64)
    indices = np.arange(n_paths)
    if jobs <= 1:
        parts = [_batch_chunk(params, grid, seed, indices, steps)]
    else:
        from concurrent.futures import ProcessPoolExecutor

        chunks = np.array_split(indices, jobs)
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_batch_chunk, *zip(*[(params, grid, seed, c, steps) for c in chunks])))
    lam, xi, counts, losses = (np.concatenate(p) for p in zip(*parts))
    return {"lambda": lam, "xi": xi, "count": counts, "loss": losses}


# --------------------------------------------------------------------------
# export


def trajectory_rows(path: ChainPath):
    loss = reconstruct_loss(path)
    times = path.grid.times()
    flags = np.append(path.intensity_jumps, False)
    for i in range(path.grid.N + 1):
        yield times[i], path.l_values[i], path.a_values[i], loss.cumulative[i], int(flags[i])


TRAJECTORY_HEADER = ("t", "lambda", "xi", "L", "jump")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(rows, fh, meta: dict | None = None) -> None:
    """Write ``t,lambda,xi,L,jump`` rows.

    ``jump`` is 1 if the intensity jumps on the step starting at t.  With
    alpha = 0 events still occur (L increases) but ``jump`` stays 0.
    """
    if meta:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    for t, lam, xi, L, jump in rows:
        writer.writerow([_fmt(t), _fmt(lam), _fmt(xi), _fmt(L), int(jump)])


def trajectory_csv(path: ChainPath, meta: dict | None = None) -> str:
    buf = io.StringIO()
    write_trajectory_csv(trajectory_rows(path), buf, meta)
    return buf.getvalue()
