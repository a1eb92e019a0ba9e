import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyscale.errors import MarginError, PreconditionError
from levyscale.gallery import GALLERY, gallery_model
from levyscale.levy_model import LevyModel, NoJumps, PiecewiseExponentialDensity
from levyscale.scale_fn import (
    ScaleGrid,
    compute_scale,
    evaluate,
    laplace_residual,
    make_grid,
    read_csv,
    recover_exponent,
    write_csv,
)

BM = LevyModel(0.0, 1.0, NoJumps())
CL = LevyModel.from_bv_drift(1.0, PiecewiseExponentialDensity.exponential(1.0, 2.0))


def cl_exact(q, x):
    # c r^2 + (c mu - lam - q) r - q mu = 0 with c = 1, lam = 1, mu = 2
    b = 1.0 - q
    d = math.sqrt(b * b + 8.0 * q)
    roots = ((-b + d) / 2, (-b - d) / 2)
    return sum(np.exp(r * x) / (1 - 2 / (2 + r) ** 2) for r in roots)


@pytest.fixture(scope="module")
def bm_half():
    return compute_scale(BM, 0.5)


def test_brownian_sinh_value(bm_half):
    w, _ = evaluate(bm_half, 1.0)
    assert w == pytest.approx(2 * math.sinh(1.0), rel=1e-9)


@pytest.mark.parametrize("q", [0.0, 0.1, 1.0])
def test_cramer_lundberg_closed_form(q):
    s = compute_scale(CL, q)
    xs = np.linspace(0.01, min(10.0, s.x_max), 200)
    w = evaluate(s, xs)[0]
    assert np.max(np.abs(w / cl_exact(q, xs) - 1)) < 1e-8


def test_cramer_lundberg_zero_scale_shape():
    # W(x) = (1/psi'(0+)) (1 - r e^{-zeta x}) with zeta = 1, r = 1/2
    s = compute_scale(CL, 0.0)
    xs = np.array([0.5, 1.0, 4.0])
    assert np.allclose(evaluate(s, xs)[0], 2.0 * (1 - 0.5 * np.exp(-xs)), rtol=1e-9)


def test_negative_argument_is_zero(bm_half):
    w, w1 = evaluate(bm_half, -0.3)
    assert w == 0.0 and math.isnan(w1)


def test_evaluate_at_nodes(bm_half):
    i = 700
    w, w1 = evaluate(bm_half, bm_half.xs[i])
    assert w == bm_half.w[i] and w1 == bm_half.w1[i]


def test_grid_refinement_agreement():
    coarse = compute_scale(CL, 0.1, x_max=10.0)
    fine = compute_scale(CL, 0.1, x_max=10.0, n=4096, n_log=1024)
    mid = 0.5 * (coarse.xs[600:-1:37] + coarse.xs[601::37])
    a, b = evaluate(coarse, mid)[0], evaluate(fine, mid)[0]
    assert np.max(np.abs(a / b - 1)) < 1e-6


@pytest.mark.parametrize("name", list(GALLERY))
def test_scale_invariants(name):
    m = gallery_model(name)
    s = compute_scale(m, 0.1)
    assert np.all(s.w > 0) and np.all(np.diff(s.w) > 0)
    assert np.allclose(s.w1, s.phi_q * s.w + s.u_q, rtol=1e-12, atol=1e-12)
    if m.is_bounded_variation:
        assert s.w0 * m.bv_drift == pytest.approx(1.0, rel=1e-6)
        assert s.w[0] * m.bv_drift == pytest.approx(1.0, rel=1e-3)
    else:
        # W vanishes at 0 like a positive power of x
        slope = np.diff(np.log(s.w[:20])) / np.diff(np.log(s.xs[:20]))
        assert s.w0 == 0.0 and np.all(slope > 0.3)


def test_u_q_refined_grid_matches():
    m = gallery_model("piecewise_exp")
    a = compute_scale(m, 0.1, x_max=8.0)
    b = compute_scale(m, 0.1, x_max=8.0, n=4096, n_log=1024)
    xs = np.linspace(0.2, 5.0, 50)
    ua = np.interp(xs, a.xs, a.u_q)
    ub = np.interp(xs, b.xs, b.u_q)
    assert np.max(np.abs(ua - ub) / ub) < 1e-5


@pytest.mark.parametrize("name", list(GALLERY))
def test_tilted_and_direct_routes_agree(name):
    m = gallery_model(name)
    a = compute_scale(m, 0.1, x_max=5.0)
    b = compute_scale(m, 0.1, x_max=5.0, route="direct")
    sel = a.xs >= 0.1
    assert np.max(np.abs(a.w[sel] / b.w[sel] - 1)) < 1e-6


def test_grid_layout():
    xs = make_grid(10.0)
    assert xs.size == 2048 and xs[0] == pytest.approx(1e-4) and xs[-1] == 10.0
    assert np.all(np.diff(xs) > 0)
    h = np.diff(xs)
    # spacing grows smoothly into the linear part
    assert np.max(h[1:] / h[:-1]) < 1.05


def test_laplace_residual_with_exact_brownian_table():
    q = 0.5
    xs = make_grid(60.0, n=8192, n_log=1024)
    r = math.sqrt(2 * q)
    w = 2 * np.sinh(r * xs) / r
    w1 = 2 * np.cosh(r * xs)
    w2 = 2 * r * np.sinh(r * xs)
    e = np.exp(-r * xs)
    wt = e * w
    wt1 = e * (w1 - r * w)
    s = ScaleGrid(q, r, xs, w, w1, w2, w1 - r * w, wt, wt1, 0.0, method={"source": "exact"})
    for k in (1.0, 2.0, 5.0):
        assert laplace_residual(s, BM, q, r + k).residual < 1e-10


def test_laplace_residual_margin(bm_half):
    with pytest.raises(MarginError):
        laplace_residual(bm_half, BM, 0.5, bm_half.phi_q + 0.1)


def test_recover_exponent_brownian():
    rec = recover_exponent(compute_scale(BM, 0.0), [1.0, 2.0, 5.0])
    assert np.allclose(rec.psi_hat, [0.5, 2.0, 12.5], rtol=1e-6)
    assert rec.valid


def test_recover_exponent_bernstein_candidate():
    xs = make_grid(40.0, n=4096, n_log=1024)
    w = -np.expm1(-xs)
    rec = recover_exponent(w, [0.5, 1.0, 3.0], w1=np.exp(-xs), w2=-np.exp(-xs), xs=xs)
    th = np.array([0.5, 1.0, 3.0])
    assert np.allclose(rec.psi_hat, th * (th + 1), rtol=1e-6)
    assert rec.valid


def test_recover_exponent_rejects_convex_candidate():
    xs = make_grid(10.0)
    w = xs + 0.3 * xs ** 2
    with pytest.raises(PreconditionError):
        recover_exponent(w, [1.0], w1=1 + 0.6 * xs, w2=0.6 + 0 * xs, xs=xs)


def test_csv_round_trip_and_determinism():
    s = compute_scale(CL, 0.1, x_max=8.0)
    a, b = io.StringIO(), io.StringIO()
    write_csv(s, a)
    write_csv(compute_scale(CL, 0.1, x_max=8.0), b)
    assert a.getvalue() == b.getvalue()
    lines = a.getvalue().splitlines()
    assert lines[4] == "x,W,W1,W2,u_q"
    assert len(lines[5].split(",")[0].split("e")[0].replace(".", "").lstrip("-")) == 17


def test_csv_read_back(tmp_path):
    s = compute_scale(CL, 0.1, x_max=8.0)
    p = tmp_path / "w.csv"
    write_csv(s, p)
    back = read_csv(p)
    assert np.array_equal(back.xs, s.xs) and np.array_equal(back.w, s.w)
    assert back.q == s.q and back.phi_q == s.phi_q


@settings(max_examples=25, deadline=None)
@given(x=st.floats(0.0, 9.5))
def test_evaluate_monotone_interpolation(x):
    s = _CL_GRID
    w_lo = evaluate(s, x)[0]
    w_hi = evaluate(s, x + 0.01)[0]
    assert w_lo <= w_hi
    assert w_lo == pytest.approx(float(cl_exact(0.1, x)) if x > 0 else 1.0, rel=1e-7)


_CL_GRID = compute_scale(CL, 0.1, x_max=10.0)
