import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from levyscale.certify import complete_monotonicity_probe, log_convexity_check
from levyscale.errors import DomainError, ModelError
from levyscale.gallery import GALLERY, gallery_model
from levyscale.levy_model import (
    AtomicJumps,
    LevyModel,
    NoJumps,
    PiecewiseExponentialDensity,
    PiecewisePowerDensity,
    drift_sign,
    ladder,
    ladder_exponent,
    phi_inverse,
    pi_tail,
    psi,
    upsilon_q,
    upsilon_tail,
)

BM = LevyModel(0.0, 1.0, NoJumps())
CL = LevyModel.from_bv_drift(1.0, PiecewiseExponentialDensity.exponential(1.0, 2.0))
POWER = LevyModel(2.0, 0.0, PiecewisePowerDensity(1.5, 0.5))


def test_psi_brownian():
    assert psi(BM, 2.0) == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("name", list(GALLERY))
def test_psi_at_zero(name):
    assert abs(psi(gallery_model(name), 0.0)) < 1e-14


def test_psi_cramer_lundberg_closed_form():
    assert psi(CL, 3.0) == pytest.approx(3.0 - 3.0 / 5.0, rel=1e-12)


def test_psi_jump_integral_by_quadrature():
    theta = 1.7
    # x = t^2 on (0, 1) removes the x^{-1/2} behaviour at the origin
    near = lambda t: 2 * t * (-math.expm1(-theta * t * t) - theta * t * t) * t ** -5 if t > 0 else 0.0
    far = lambda x: -math.expm1(-theta * x) * x ** -1.5
    jump = integrate.quad(near, 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0] + \
        integrate.quad(far, 1, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    assert psi(POWER, theta) == pytest.approx(2.0 * theta - jump, rel=1e-9)


def test_phi_inverse_brownian():
    assert phi_inverse(BM, 2.0) == pytest.approx(2.0, rel=1e-12)


def test_phi_inverse_net_profit_gives_zero():
    assert phi_inverse(CL, 0.0) == 0.0


def test_phi_inverse_cramer_lundberg_quadratic():
    # theta - theta/(2+theta) = 0.1  <=>  theta^2 + 0.9 theta - 0.2 = 0
    root = (-0.9 + math.sqrt(0.81 + 0.8)) / 2
    assert phi_inverse(CL, 0.1) == pytest.approx(root, rel=1e-12)


@pytest.mark.parametrize("name", list(GALLERY))
@pytest.mark.parametrize("q", [0.0, 0.05, 0.1, 0.5, 1.0, 5.0])
def test_root_identity(name, q):
    m = gallery_model(name)
    ph = phi_inverse(m, q)
    assert abs(psi(m, ph) - q) <= 1e-10 * max(1.0, q)


def test_pi_tail_examples():
    assert pi_tail(CL, 1.0) == pytest.approx(math.exp(-2.0), rel=1e-13)
    assert pi_tail(POWER, 2.0) == pytest.approx(2 * 2 ** -0.5, rel=1e-12)
    assert pi_tail(CL, 200.0) < 1e-80


def test_upsilon_tail_exponential():
    assert upsilon_tail(CL, 1.0) == pytest.approx(math.exp(-2.0) / 2, rel=1e-12)
    xs = np.array([0.3, 1.0, 2.5])
    assert np.all(upsilon_tail(CL, xs) <= upsilon_tail(CL, xs / 2))


def test_upsilon_q_density_closed_form():
    # choose q with Phi(q) = 1: q = psi(1) = 1 - 1/3
    q = psi(CL, 1.0)
    tail, dens = upsilon_q(CL, q, 1.0)
    # e^{x} int_x^inf e^{-z} 2 e^{-2z} dz = (2/3) e^{-2x}
    assert dens == pytest.approx(2 / 3 * math.exp(-2.0), rel=1e-12)
    # tail: e^{x} int_x^inf e^{-z} e^{-2z} dz = e^{-2x}/3
    assert tail == pytest.approx(math.exp(-2.0) / 3, rel=1e-12)


def test_upsilon_q_at_zero_is_pi_tail_and_density():
    for x in (0.2, 1.0, 3.0):
        tail, dens = upsilon_q(CL, 0.0, x)
        assert dens == pytest.approx(pi_tail(CL, x), rel=1e-12)


def test_drift_sign_examples():
    assert drift_sign(CL) == pytest.approx(0.5, rel=1e-12)
    assert drift_sign(BM) == 0.0
    neg = LevyModel(-5.0, 1.0, PiecewiseExponentialDensity.exponential(0.1, 3.0))
    assert drift_sign(neg) < 0


def test_ladder_exponent_examples():
    assert ladder_exponent(BM, 2.0, 1.0) == pytest.approx(1.5, rel=1e-12)
    q = 0.3
    assert ladder_exponent(CL, q, 0.0) == pytest.approx(q / phi_inverse(CL, q), rel=1e-12)
    # q = 0, Phi(0) = 0: psi(theta)/theta
    assert ladder_exponent(CL, 0.0, 2.0) == pytest.approx(psi(CL, 2.0) / 2.0, rel=1e-12)


def test_ladder_exponent_removable_singularity():
    q = 0.4
    ph = phi_inverse(CL, q)
    at = ladder_exponent(CL, q, ph)
    near = ladder_exponent(CL, q, ph + 1e-4)
    assert at == pytest.approx(near, rel=1e-3)


@pytest.mark.parametrize("model", [CL, POWER, BM], ids=["cl", "power", "bm"])
@pytest.mark.parametrize("q", [0.0, 0.1, 1.0])
def test_ladder_dual_representation(model, q):
    lad = ladder(model, q)
    for theta in (0.5, 1.0, 3.0):
        assert lad(theta) == pytest.approx(ladder_exponent(model, q, theta), rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.0, 20.0), b=st.floats(0.0, 20.0))
def test_psi_convex_property(a, b):
    for m in (CL, POWER):
        mid = psi(m, 0.5 * (a + b))
        assert mid <= 0.5 * (psi(m, a) + psi(m, b)) + 1e-9 * (1 + abs(mid))


@settings(max_examples=30, deadline=None)
@given(t1=st.floats(0.0, 10.0), t2=st.floats(0.0, 10.0), q=st.sampled_from([0.0, 0.2, 2.0]))
def test_ladder_exponent_bernstein_monotone(t1, t2, q):
    lo, hi = sorted((t1, t2))
    assert ladder_exponent(CL, q, lo) <= ladder_exponent(CL, q, hi) + 1e-12


def test_bernstein_matches_generic_formula():
    jumps = PiecewiseExponentialDensity([0.0, 2.0], [0.1 * math.e ** 2, 0.1], [1.0, 0.5])
    th = np.array([0.1, 1.0, 7.0])
    generic = jumps.laplace_integral(th) + th * jumps.first_moment(0.0, 1.0)
    assert np.allclose(jumps.bernstein(th), generic, rtol=1e-12, atol=1e-15)


def test_invalid_models_rejected():
    with pytest.raises(ModelError):
        LevyModel(0.0, -1.0, NoJumps())
    with pytest.raises(ModelError):
        LevyModel(0.0, 0.0, NoJumps())
    with pytest.raises(ModelError):
        LevyModel.from_bv_drift(-0.5, PiecewiseExponentialDensity.exponential(1.0, 1.0))
    with pytest.raises(ModelError):
        PiecewisePowerDensity(2.5, 0.5)


def test_domain_errors():
    with pytest.raises(DomainError):
        pi_tail(CL, -1.0)
    with pytest.raises(DomainError):
        upsilon_q(LevyModel.from_bv_drift(2.0, AtomicJumps([1.0], [0.5])), 0.0, 1.0)


def test_log_convexity_examples():
    assert log_convexity_check(lambda x: np.exp(-2 * x), (0.1, 10), 256).passed
    assert log_convexity_check(POWER.jumps.density, (1e-3, 30), 512).passed
    bad = log_convexity_check(lambda x: np.exp(-x ** 2), (0.1, 3), 256)
    assert not bad.passed and bad.worst_violation > 0


def test_complete_monotonicity_examples():
    assert complete_monotonicity_probe(lambda x: np.exp(-x), (0.1, 5), 8).passed
    assert complete_monotonicity_probe(lambda x: np.ones_like(x), (0.1, 5), 8).passed
    pe = gallery_model("piecewise_exp").jumps
    rep = complete_monotonicity_probe(pe.density, (0.5, 4.0), 8)
    assert not rep.passed
    assert abs(rep.location - 2.0) < 0.5
