import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hawkes_dt import core, operators as op


def psi_oracle(K, x):
    """psi_K by 30-digit adaptive quadrature of the bump (independent of the module's rule)."""
    if x <= K:
        return 1.0
    if x >= K + 1:
        return 0.0
    with mp.workdps(30):
        bump = lambda s: mp.exp(-1 / (1 - (2 * s - 1) ** 2))  # noqa: E731
        mass = mp.quad(bump, [0, 0.5, 1])
        return float(1 - mp.quad(bump, [0, x - K]) / mass)


# --------------------------------------------------------------------------
# test functions


def test_psi_reference_values():
    psi = op.make_psi(10.0)
    assert psi(9.0) == 1.0
    assert psi(12.0) == 0.0
    assert psi(10.5) == pytest.approx(0.5, abs=1e-14)
    with pytest.raises(ValueError):
        op.make_psi(0.0)


@pytest.mark.parametrize("x", [10.01, 10.2, 10.37, 10.5, 10.8, 10.99])
def test_psi_matches_adaptive_quadrature(x):
    assert op.make_psi(10.0)(x) == pytest.approx(psi_oracle(10.0, x), abs=1e-13)


def test_psi_monotone_and_bounded():
    x = np.linspace(0, 12, 20001)
    v = op.make_psi(10.0)(x)
    assert np.all(np.diff(v) <= 1e-15)
    assert v.min() >= 0 and v.max() <= 1


def _fd1(f, x, e=1e-4):
    return (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * e)


def _all_smooth():
    fams = [(f.name, f.g) for f in op.family_1d()]
    fams += [(f.name + ":k", f.k) for f in op.family_2d()]
    return fams


@pytest.mark.parametrize("name, g", _all_smooth())
def test_derivatives_match_finite_differences(name, g):
    top = g.support if math.isfinite(g.support) else 20.0
    x = np.linspace(0.05, top + 0.5, 3001)
    d1, d2 = g.d1(x), g.d2(x)
    fd1 = _fd1(g.f, x)
    fd2 = _fd1(g.d1, x)
    # five-point stencil with e = 1e-4: truncation and rounding both stay near 1e-9
    assert np.max(np.abs(fd1 - d1)) <= 1e-6 * max(1.0, np.abs(d1).max())
    assert np.max(np.abs(fd2 - d2)) <= 1e-6 * max(1.0, np.abs(d2).max())


def test_test_function_two_dimensional_derivatives():
    f = op.family_2d()[0]
    y, v = np.linspace(0.1, 9.5, 40), np.linspace(0.1, 7.5, 40)
    fy, fv = f.d1(y, v)
    np.testing.assert_allclose(fy, _fd1(lambda t: f(t, v), y), atol=1e-6 * max(1, np.abs(fy).max()))
    np.testing.assert_allclose(fv, _fd1(lambda t: f(y, t), v), atol=1e-6 * max(1, np.abs(fv).max()))
    yy, yv, vv = f.d2(y, v)
    np.testing.assert_allclose(yv, _fd1(lambda t: f.d1(y, t)[0], v), atol=1e-6 * max(1, np.abs(yv).max()))
    np.testing.assert_allclose(vv, _fd1(lambda t: f.d1(y, t)[1], v), atol=1e-6 * max(1, np.abs(vv).max()))


def test_supports_are_compact():
    for f in op.family_1d():
        assert f(f.support_bound + 0.01) == 0.0
    for f in op.family_2d():
        b = f.support_bound + 0.01
        assert f(b, 0.5) == 0.0 and f(0.5, b) == 0.0


# --------------------------------------------------------------------------
# mark rules


def test_composite_rule_moments():
    p = core.fig4_params().replace(marks=core.ExponentialRate(2.0))
    r = op.mark_rule(p)
    assert r.kind == "composite"
    assert r.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert r.expect(lambda z: z) == pytest.approx(0.5, abs=1e-12)
    assert r.expect(lambda z: z**2) == pytest.approx(0.5, abs=1e-12)
    # smooth compactly supported integrand vs adaptive quadrature
    g = op.make_psi(1.0)
    ref, _ = quad(lambda z: float(g(z)) * 2 * math.exp(-2 * z), 0, 3, epsabs=1e-14, limit=200)
    assert r.expect(g) == pytest.approx(ref, abs=1e-10)


def test_gauss_laguerre_available_but_coarser():
    p = core.fig4_params()
    gl = op.mark_rule(p, op.OperatorConfig(mark_rule="gauss-laguerre"))
    assert gl.kind == "gauss-laguerre" and len(gl.nodes) == 64
    assert gl.expect(lambda z: z**3) == pytest.approx(6.0, rel=1e-10)


def test_exact_rules():
    p = core.fig4_params().replace(marks=core.Empirical((1.0, 2.0, 2.0, 5.0)))
    r = op.mark_rule(p)
    np.testing.assert_array_equal(r.nodes, [1, 2, 5])
    np.testing.assert_allclose(r.weights, [0.25, 0.5, 0.25])
    r = op.mark_rule(p.replace(marks=core.Constant(1.5)))
    assert list(r.nodes) == [1.5] and list(r.weights) == [1.0]


def test_mc_rule_and_unavailable():
    p = core.fig4_params()
    r = op.mark_rule(p, op.OperatorConfig(mark_rule="mc", mc_samples=1000))
    assert r.kind == "mc" and len(r.nodes) == 1000
    with pytest.raises(op.QuadratureUnavailable):
        op.mark_rule(p, op.OperatorConfig(mark_rule="exact", mc_fallback=False))


def test_rule_truncation_by_support():
    r = op.MarkRule(np.array([0.5, 1.0, 2.0]), np.array([0.2, 0.3, 0.5]), "x")
    assert len(r.upto(1.0).nodes) == 2
    assert len(r.upto(0.1).nodes) == 0


# --------------------------------------------------------------------------
# generators: closed-form examples


def test_generator_exp_flat_region_is_zero():
    p = core.exponential_params(0.1, 5.0, 3.0, 4.0, core.Constant(1.0))
    f = op.TestFunction(op.plateau(0.0, 20.0, 1.0))
    assert op.generator_exp(f, np.array([5.0, 8.0]), p) == pytest.approx([0.0, 0.0], abs=1e-15)


def test_generator_exp_at_zero_is_drift_only(fig4):
    f = op.TestFunction(op.plateau(0.0, 10.0, 1.0))
    got = op.generator_exp(f, np.array([0.0, 0.3]), fig4)
    np.testing.assert_allclose(got[0], 5 * 3 * f.d1(0.0), atol=1e-15)


def test_generator_exp_constant_marks_two_term_formula():
    p = core.exponential_params(2.0, 5.0, 3.0, 4.0, core.Constant(1.0))
    f = op.TestFunction(op.make_psi(6.0))
    # f(5) = 1, f(7) = 0, f'(5) = 0  ->  5 * (0 - 1)
    assert float(op.generator_exp(f, 5.0, p)) == pytest.approx(-5.0, abs=1e-14)
    # y = 6.4: drift uses f' inside the rolloff, jump lands at 8.4 beyond support
    y = 6.4
    dpsi = (psi_oracle(6.0, y + 1e-5) - psi_oracle(6.0, y - 1e-5)) / 2e-5
    ref = 5 * (3 - y) * dpsi + y * (psi_oracle(6.0, y + 2) - psi_oracle(6.0, y))
    assert float(op.generator_exp(f, y, p)) == pytest.approx(ref, rel=1e-7)


def test_generator_erlang_special_states(erlang_const):
    f = op.family_2d()[2]
    lam = erlang_const.lambda_inf
    got = float(op.generator_erlang(f, lam, 0.0, erlang_const))
    ref = lam * (float(f(lam, 2.0)) - float(f(lam, 0.0)))
    assert got == pytest.approx(ref, abs=1e-14)
    # f independent of xi: only the intensity drift survives
    g = op.TestFunction(op.plateau(0.0, 10.0, 1.0), op.constant_1d())
    y, v = np.array([0.5, 3.0, 9.4]), np.array([0.2, 1.0, 4.0])
    want = (v + 5 * (3 - y)) * g.g.d1(y)
    np.testing.assert_allclose(op.generator_erlang(g, y, v, erlang_const), want, atol=1e-14)


# --------------------------------------------------------------------------
# one-step operators: structure


def _cover(params):
    if params.is_erlang:
        return op.TestFunction(op.plateau(-2.0, 400.0, 1.0), op.plateau(-2.0, 400.0, 1.0))
    return op.TestFunction(op.plateau(-2.0, 400.0, 1.0))


@pytest.mark.parametrize("h", [1e-3, 0.05, 0.5])
def test_conservative(any_params, h):
    f = _cover(any_params)
    y = np.linspace(0, 30, 61)
    if any_params.is_erlang:
        val = op.one_step_erlang(f, y, y / 3, h, any_params)
    else:
        val = op.one_step_exp(f, y, h, any_params)
    np.testing.assert_allclose(val, 1.0, atol=1e-10)


def test_large_step_uses_jump_branch_only(fig4):
    f = op.family_1d()[2]
    h, y = 0.5, 3.0  # y h >= 1
    rule = op.mark_rule(fig4)
    base, decay = 3 * -math.expm1(-2.5), math.exp(-2.5)
    ref = rule.expect(lambda z: f(base + (y + 2 * z) * decay))
    assert float(op.one_step_exp(f, y, h, fig4)) == pytest.approx(ref, abs=1e-14)


def test_erlang_no_jump_branch_structure(erlang_const):
    f = op.TestFunction(op.plateau(0.0, 10.0, 1.0), op.constant_1d())
    h = 0.01
    y, v = np.array([1.0, 2.0, 4.0]), np.zeros(3)
    d = math.exp(-5 * h)
    base = 3 * (1 - d)
    want = (1 - y * h) * f.g(base + y * d) + y * h * f.g(base + y * d + h * 2 * d)
    np.testing.assert_allclose(op.one_step_erlang(f, y, v, h, erlang_const), want, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-4, 0.3), st.floats(0, 25), st.floats(0, 10), st.integers(0, 4))
def test_positive_and_contractive(h, y, v, which):
    for params in (core.fig4_params(), core.erlang_params(2.0, 5.0, 3.0, 4.0, core.Constant(1.0))):
        fam = op.test_family(params)
        f = fam[which]
        val = float(op.one_step(f, (y, v) if params.is_erlang else y, h, params))
        assert abs(val) <= f.sup() + 1e-10
        if f.name.startswith(("psi", "plateau")) and "quadratic" not in f.name:
            assert val >= -1e-10


def test_zero_function_maps_to_zero(any_params):
    f = op.test_family(any_params)[-1]
    assert f.name == "zero"
    state = (np.array([1.0, 4.0]), np.array([0.0, 2.0])) if any_params.is_erlang else np.array([1.0, 4.0])
    assert np.all(op.one_step(f, state, 0.01, any_params) == 0)
    assert np.all(op.generator(f, state, any_params) == 0)


# --------------------------------------------------------------------------
# Monte Carlo oracle (a few triples; the full set runs in the acceptance suite)


@pytest.mark.parametrize("i", range(3))
def test_one_step_matches_monte_carlo(any_params, i):
    rng = np.random.default_rng(100 + i)
    fam = [f for f in op.test_family(any_params) if f.name != "zero"]
    f = fam[i % len(fam)]
    h = float(rng.uniform(0.01, 0.2))
    y = float(rng.uniform(0, 9))
    state = (y, float(rng.uniform(0, 5))) if any_params.is_erlang else y
    mean, se = op.mc_one_step(f, state, h, any_params, n=200_000, seed=i)
    val = float(op.one_step(f, state, h, any_params))
    assert abs(val - mean) <= 4 * se + 1e-10


# --------------------------------------------------------------------------
# generator convergence


def test_zero_function_norm_is_zero(fig4):
    rows = op.convergence_table(op.family_1d()[-1], fig4, [100, 1000])
    assert all(r.sup_norm_error == 0.0 for r in rows)


def test_alpha_zero_norm_is_order_h():
    p = core.exponential_params(0.0, 5.0, 3.0, 4.0)
    f = op.TestFunction(op.plateau(0.0, 10.0, 1.0))
    rows = op.convergence_table(f, p, [100, 1000, 10000])
    e = [r.sup_norm_error for r in rows]
    assert e[0] > e[1] > e[2] > 0
    assert 0.9 < op.loglog_slope(rows) < 1.1


def test_fig4_plateau_ratio(fig4):
    f = op.family_1d()[2]
    rows = op.convergence_table(f, fig4, [100, 1000, 10000])
    e = [r.sup_norm_error for r in rows]
    assert e[0] > e[1] > e[2]
    assert 5 <= e[0] / e[1] <= 20 and 5 <= e[1] / e[2] <= 20
    assert rows[0].as_row()["N"] == 100


def test_dimension_mismatch_rejected(fig4):
    with pytest.raises(ValueError):
        op.generator_convergence_norm(op.family_2d()[0], fig4, 100, 1.0)
