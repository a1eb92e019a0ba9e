import math

import numpy as np
import pytest
from scipy import integrate

from levyscale.definetti import (
    SmoothFunction,
    barrier_dominance,
    barrier_function,
    barrier_value,
    generator_apply,
    hjb_residual,
    scale_function,
    solve,
)
from levyscale.errors import DomainError
from levyscale.gallery import GALLERY, gallery_model
from levyscale.levy_model import LevyModel, NoJumps, PiecewiseExponentialDensity, pi_tail
from levyscale.scale_fn import compute_scale

BM = LevyModel(0.0, 1.0, NoJumps())
CL = LevyModel.from_bv_drift(1.0, PiecewiseExponentialDensity.exponential(1.0, 2.0))
HUMP = LevyModel.from_bv_drift(3.0, PiecewiseExponentialDensity.from_table([0, 1, 2, 4], [0.2, 2.0, 0.5, 0.05]))


@pytest.fixture(scope="module")
def cl_scale():
    return compute_scale(CL, 0.1)


@pytest.fixture(scope="module")
def cl_solution(cl_scale):
    return solve(CL, 0.1, scale=cl_scale)


def test_barrier_value_brownian_oracle():
    q, a = 0.5, 1.0
    r = math.sqrt(2 * q)
    s = compute_scale(BM, q)
    xs = np.array([0.2, 0.7, 1.0, 1.5, 3.0])
    exact = np.where(xs <= a, np.sinh(r * xs), np.sinh(r * a) + r * np.cosh(r * a) * (xs - a)) \
        / (r * np.cosh(r * a))
    assert np.allclose(barrier_value(s, a, xs), exact, rtol=1e-8)


def test_barrier_value_continuity_and_slope(cl_scale):
    a = 1.3
    f = barrier_function(cl_scale, a)
    lo, hi = barrier_value(cl_scale, a, a - 1e-9), barrier_value(cl_scale, a, a + 1e-9)
    assert abs(hi - lo) < 1e-8
    assert np.allclose(f.d1(np.array([a + 0.1, a + 2.0, 7.0])), 1.0)
    assert barrier_value(cl_scale, a, -0.5) == 0.0


def test_barrier_outside_grid(cl_scale):
    with pytest.raises(DomainError):
        barrier_function(cl_scale, cl_scale.x_max + 1.0)


def test_generator_annihilates_scale_function(cl_scale):
    f = scale_function(cl_scale)
    xs = np.array([0.3, 1.0, 2.5, 5.0])
    res = generator_apply(CL, f, xs) - 0.1 * f.value(xs)
    assert np.max(np.abs(res) / f.value(xs)) < 1e-6


def test_generator_of_constant():
    one = lambda y: np.ones_like(np.asarray(y, dtype=float))
    zero = lambda y: np.zeros_like(np.asarray(y, dtype=float))
    xs = np.array([0.5, 2.0])
    free = SmoothFunction(one, zero, zero, zero_below=False)
    assert np.allclose(generator_apply(CL, free, xs), 0.0, atol=1e-12)
    # killed below zero: only jumps past the origin contribute
    killed = SmoothFunction(one, zero, zero)
    assert np.allclose(generator_apply(CL, killed, xs), -pi_tail(CL, xs), rtol=1e-9)


def test_generator_of_identity_by_quadrature():
    ident = SmoothFunction(lambda y: np.maximum(np.asarray(y, dtype=float), 0.0),
                           lambda y: (np.asarray(y, dtype=float) > 0).astype(float),
                           lambda y: np.zeros_like(np.asarray(y, dtype=float)))
    dens = lambda y: 2.0 * math.exp(-2.0 * y)
    for x in (0.4, 1.7):
        jump = integrate.quad(lambda y: (-y + y * (y < 1)) * dens(y), 0, x, points=[1.0] if x > 1 else None)[0] \
            + integrate.quad(lambda y: (-x + y * (y < 1)) * dens(y), x, np.inf)[0]
        assert generator_apply(CL, ident, x) == pytest.approx(CL.gamma + jump, rel=1e-9)


def test_generator_domain(cl_scale):
    with pytest.raises(DomainError):
        generator_apply(CL, scale_function(cl_scale), 0.0)


@pytest.mark.parametrize("name", ["cramer_lundberg_exp", "piecewise_power", "piecewise_exp"])
def test_solve_certifies_gallery(name):
    sol = solve(gallery_model(name), 0.1)
    assert sol.verdict == "optimal_certified" and sol.exit_code == 0
    assert sol.checks["hjb_interior_ok"] and sol.checks["hjb_exterior_ok"]
    assert sol.checks["value_above_lump_sum"] and sol.checks["slope_at_least_one"]


def test_solve_hump_density_inconclusive():
    sol = solve(HUMP, 0.1)
    assert not sol.density_cert.passed
    assert sol.verdict == "inconclusive" and sol.exit_code == 3


def test_solve_needs_positive_rate():
    with pytest.raises(DomainError):
        solve(CL, 0.0)


def test_smooth_fit(cl_solution):
    assert cl_solution.a_star.value > 0
    assert cl_solution.checks["smooth_fit"] < 1e-8


def test_hjb_residual_bounds(cl_solution):
    q = cl_solution.q
    v_in = cl_solution.value_at(cl_solution.hjb_x_interior)
    v_out = cl_solution.value_at(cl_solution.hjb_x_exterior)
    assert np.max(np.abs(cl_solution.hjb_interior) / (q * v_in)) < 5e-4
    assert np.max(cl_solution.hjb_exterior / (q * v_out)) < 5e-4


def test_suboptimal_barrier_violates_exterior(cl_scale, cl_solution):
    a_star = cl_solution.a_star.value
    a = 0.5 * a_star
    xs = np.linspace(a + 0.05, a_star - 0.05, 20)
    assert np.max(hjb_residual(CL, cl_scale, a, xs)) > 1e-4


def test_barrier_dominance(cl_scale, cl_solution):
    xs = np.linspace(0.0, 6.0, 25)
    dom = barrier_dominance(cl_scale, cl_solution.a_star.value, xs)
    assert max(dom["max_excess"]) <= 1e-8


def test_summary_is_serialisable(cl_solution):
    import json
    json.dumps(cl_solution.summary())
