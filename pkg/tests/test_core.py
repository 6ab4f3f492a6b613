import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp

from hawkes_dt import core


# --------------------------------------------------------------------------
# independent oracles


def volterra_mean(params, t, n=4000):
    """E[lambda_s] on [0, t] from the renewal equation
    m(s) = mu0(s) + int_0^s phi(s - r) E[zeta] m(r) dr, solved by the trapezoid rule.
    Uses only the kernel definition, not the moment ODE.
    """
    s = np.linspace(0.0, t, n + 1)
    dt = t / n
    mu0 = params.lambda_inf + (params.x0 - params.lambda_inf) * np.exp(-params.beta * s)
    phi = params.kernel(s) * params.marks.mean()
    m = np.empty_like(s)
    m[0] = mu0[0]
    for i in range(1, n + 1):
        conv = dt * (0.5 * phi[i] * m[0] + np.dot(phi[i - 1:0:-1], m[1:i]))
        m[i] = (mu0[i] + conv) / (1.0 - 0.5 * dt * phi[0])
    return s, m


def ode_moments(params, t):
    am = params.alpha * params.marks.mean()
    b, lam = params.beta, params.lambda_inf
    if params.is_erlang:
        rhs = lambda _, z: [b * (lam - z[0]) + z[1], am * z[0] - b * z[1], z[0]]
        z0 = [params.x0, 0.0, 0.0]
    else:
        rhs = lambda _, z: [b * (lam - z[0]) + am * z[0], 0.0, z[0]]
        z0 = [params.x0, 0.0, 0.0]
    sol = solve_ivp(rhs, (0, t), z0, method="DOP853", rtol=1e-12, atol=1e-12)
    return sol.y[:, -1]


# --------------------------------------------------------------------------
# moments


def test_fig4_first_moments_match_independent_ode(fig4):
    lam, _, count = ode_moments(fig4, 1.0)
    assert core.mean_intensity(fig4, 1.0) == pytest.approx(lam, abs=1e-8)
    assert core.mean_count(fig4, 1.0) == pytest.approx(count, abs=1e-8)
    assert core.mean_intensity(fig4, 1.0) == pytest.approx(4.950213, abs=5e-7)
    assert core.mean_count(fig4, 1.0) == pytest.approx(4.683262, abs=5e-7)


@pytest.mark.parametrize("t", [0.3, 1.0, 4.0])
def test_erlang_moments_match_independent_ode(erlang_const, t):
    lam, xi, count = ode_moments(erlang_const, t)
    assert core.mean_intensity(erlang_const, t) == pytest.approx(lam, abs=1e-8)
    assert core.mean_auxiliary(erlang_const, t) == pytest.approx(xi, abs=1e-8)
    assert core.mean_count(erlang_const, t) == pytest.approx(count, abs=1e-8)


def test_mean_intensity_matches_renewal_equation(any_params):
    s, m = volterra_mean(any_params, 2.0)
    for t in (0.5, 1.0, 2.0):
        i = int(round(t / s[1]))
        assert core.mean_intensity(any_params, t) == pytest.approx(m[i], rel=1e-5)


def test_mean_count_is_integral_of_mean_intensity(any_params):
    val, _ = quad(lambda s: core.mean_intensity(any_params, s), 0, 1.5, epsabs=1e-12)
    assert core.mean_count(any_params, 1.5) == pytest.approx(val, rel=1e-9)


def test_mean_loss_scales_with_mark_mean():
    p = core.exponential_params(1.0, 5.0, 3.0, 4.0, core.ExponentialRate(2.0))
    assert core.mean_loss(p, 1.0) == pytest.approx(core.mean_count(p, 1.0) * 0.5)


def test_stationary_start_is_constant(fig4):
    mu = core.stationary_intensity(fig4)
    p = fig4.replace(x0=mu)
    assert core.mean_intensity(p, 3.0) == pytest.approx(mu, rel=1e-14)
    assert mu == pytest.approx(5 * 3 / (5 - 2))


def test_long_run_erlang_mean(erlang_const):
    mu = core.stationary_intensity(erlang_const)
    assert mu == pytest.approx(25 * 3 / 23)
    assert core.mean_intensity(erlang_const, 20.0) == pytest.approx(mu, rel=1e-8)


def test_alpha_zero_mean_is_deterministic_relaxation():
    p = core.exponential_params(0.0, 5.0, 3.0, 4.0)
    t = 0.7
    assert core.mean_intensity(p, t) == pytest.approx(3 + math.exp(-5 * t))
    assert core.mean_count(p, t) == pytest.approx(3 * t + (1 - math.exp(-5 * t)) / 5)


def test_negative_time_rejected(fig4):
    with pytest.raises(core.OutOfHorizon):
        core.mean_intensity(fig4, -1.0)


# --------------------------------------------------------------------------
# validation


@pytest.mark.parametrize(
    "changes, err",
    [
        ({"alpha": -1.0}, core.NonPositiveParameter),
        ({"beta": 0.0}, core.NonPositiveParameter),
        ({"lambda_inf": 0.0}, core.NonPositiveParameter),
        ({"x0": -0.1}, core.NonPositiveParameter),
        ({"alpha": 5.0}, core.UnstableParameters),
        ({"alpha": float("nan")}, core.NonPositiveParameter),
    ],
)
def test_invalid_exponential_parameters(fig4, changes, err):
    with pytest.raises(err) as exc:
        core.validate(fig4.replace(**changes))
    assert exc.value.constraint


def test_stability_boundary_is_strict():
    # alpha * E[zeta] == beta for exp, == beta^2 for Erlang
    with pytest.raises(core.UnstableParameters):
        core.validate(core.exponential_params(5.0, 5.0, 1.0, 1.0))
    with pytest.raises(core.UnstableParameters):
        core.validate(core.erlang_params(25.0, 5.0, 1.0, 1.0))
    core.validate(core.erlang_params(24.0, 5.0, 1.0, 1.0))


def test_x0_zero_warns(fig4):
    with pytest.warns(UserWarning):
        notes = core.validate(fig4.replace(x0=0.0))
    assert notes


def test_alpha_zero_is_admissible(fig4):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        notes = core.validate(fig4.replace(alpha=0.0))
    assert any("alpha=0" in n for n in notes)


@pytest.mark.parametrize("marks", [core.Constant(0.0), core.ExponentialRate(-1.0), core.Empirical(())])
def test_invalid_marks(fig4, marks):
    with pytest.raises(core.NonPositiveParameter):
        core.validate(fig4.replace(marks=marks))


# --------------------------------------------------------------------------
# grid


def test_grid_index_rounding():
    g = core.GridSpec(1.0, 10)
    assert g.h == pytest.approx(0.1)
    assert g.index(0.3) == 3  # 10 * 0.3 = 2.9999999999999996
    assert g.index(0.35) == 3
    assert g.index(1.0) == 10
    assert g.index(0.0) == 0
    with pytest.raises(core.OutOfHorizon):
        g.index(1.01)
    with pytest.raises(core.OutOfHorizon):
        g.index(-1e-3)


@pytest.mark.parametrize("T, N", [(0.0, 10), (-1.0, 10), (1.0, 0), (1.0, 2.5)])
def test_grid_rejects_bad_input(T, N):
    with pytest.raises(core.NonPositiveParameter):
        core.GridSpec(T, N)


@given(st.integers(1, 10**6), st.floats(0.01, 100.0))
def test_grid_index_of_grid_points(N, T):
    g = core.GridSpec(T, N)
    times = g.times()
    for k in {0, N // 3, N // 2, N}:
        assert g.index(times[k]) == k


# --------------------------------------------------------------------------
# marks


@pytest.mark.parametrize(
    "marks", [core.Constant(1.5), core.ExponentialRate(2.0), core.Empirical((0.5, 1.0, 4.0))]
)
def test_mark_sampling_moments(marks, rng):
    z = marks.sample(rng, 200_000)
    assert np.all(z > 0)
    se = math.sqrt(max(marks.second_moment() - marks.mean() ** 2, 0.0) / z.size)
    assert abs(z.mean() - marks.mean()) <= 5 * se + 1e-12
    assert np.mean(z**2) == pytest.approx(marks.second_moment(), rel=0.02)


@given(st.floats(1e-3, 1e3))
def test_exponential_mark_moments(rate):
    m = core.ExponentialRate(rate)
    assert m.mean() == pytest.approx(1 / rate)
    assert m.second_moment() == pytest.approx(2 * m.mean() ** 2)


# --------------------------------------------------------------------------
# JSON


def test_params_round_trip_through_json(any_params, tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(any_params.to_dict()))
    back = core.load_params(path)
    assert back == any_params
    assert back.digest() == any_params.digest()


def test_digest_changes_with_parameters(fig4):
    assert fig4.digest() != fig4.replace(beta=5.5).digest()


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(gamma=1),
        lambda d: d.pop("beta"),
        lambda d: d.update(kernel="power"),
        lambda d: d.update(marks={"type": "gamma", "shape": 2}),
        lambda d: d.update(marks={"type": "constant", "value": 1, "extra": 2}),
        lambda d: d.update(alpha="two"),
    ],
)
def test_bad_documents_rejected(fig4, mutate):
    doc = fig4.to_dict()
    mutate(doc)
    with pytest.raises(core.ConfigError):
        core.params_from_dict(doc)


def test_unstable_document_rejected(fig4):
    doc = {**fig4.to_dict(), "alpha": 6.0}
    with pytest.raises(core.UnstableParameters):
        core.params_from_dict(doc)
    assert core.params_from_dict(doc, check=False).alpha == 6.0


@settings(max_examples=50)
@given(
    st.sampled_from(["exp", "erlang"]),
    st.floats(0.0, 10.0),
    st.floats(0.1, 10.0),
    st.floats(0.1, 10.0),
    st.floats(0.1, 10.0),
)
def test_validation_matches_stability_inequality(kernel, alpha, beta, lam, x0):
    p = core.HawkesParams(core.KernelSpec(kernel, alpha, beta), lam, x0, core.Constant(1.0))
    bound = beta**2 if kernel == "erlang" else beta
    if alpha < bound:
        core.validate(p)
    else:
        with pytest.raises(core.UnstableParameters):
            core.validate(p)
