import math
from dataclasses import replace

import numpy as np
import pytest

from levyscale.certify import convexity_report
from levyscale.errors import DomainError, LocalizationError, PreconditionError
from levyscale.gallery import GALLERY, gallery_model
from levyscale.levy_model import (
    AtomicJumps,
    LevyModel,
    NoJumps,
    PiecewiseExponentialDensity,
)
from levyscale.scale_fn import ScaleGrid, compute_scale, evaluate
from levyscale.shape_analysis import (
    conjugate_tail,
    density_log_convexity,
    excursion_sup_jump,
    excursion_sup_tail,
    find_a_star,
    potential_density_check,
    shape_suite,
    smoothness_class,
)

BM = LevyModel(0.0, 1.0, NoJumps())
CL = LevyModel.from_bv_drift(1.0, PiecewiseExponentialDensity.exponential(1.0, 2.0))
ATOM = LevyModel.from_bv_drift(2.0, AtomicJumps([1.0], [0.5]))


def _grid(xs, w1, w2=None):
    w2 = np.gradient(w1, xs) if w2 is None else w2
    w = np.concatenate([[0.0], np.cumsum(0.5 * (w1[1:] + w1[:-1]) * np.diff(xs))])
    return ScaleGrid(0.1, 0.0, xs, w, w1, w2, w1, w, w1, 0.0, method={})


def test_a_star_brownian_interior_minimum():
    s = compute_scale(BM, 0.1, x_max=10.0)
    a = find_a_star(s)
    assert a.value == 0.0  # W' = 2 cosh(sqrt(0.2) x) is increasing from 0


def test_a_star_matches_dense_argmin_for_drifted_brownian():
    # W' has an interior minimum when the drift is positive
    m = LevyModel(1.0, 1.0, NoJumps())
    s = compute_scale(m, 0.1, x_max=20.0)
    a = find_a_star(s, model=m)
    dense = np.linspace(0.01, 10, 200001)
    w1 = evaluate(s, dense)[1]
    assert abs(a.value - dense[np.argmin(w1)]) <= np.max(np.diff(s.xs))
    assert np.all(s.w1 >= a.w1_min - 1e-9 * a.w1_min)


def test_a_star_cramer_lundberg_known_value():
    s = compute_scale(CL, 0.1)
    assert find_a_star(s, model=CL).value == pytest.approx(2.107035, abs=2e-6)


def test_a_star_zero_when_w1_increasing():
    # W''(0+) has the sign of (q + lam)^2 - c lam mu = 2.25 - 0.5
    light = LevyModel.from_bv_drift(1.0, PiecewiseExponentialDensity.exponential(1.0, 0.5))
    s = compute_scale(light, 0.5)
    assert find_a_star(s, model=light).value == 0.0


def test_a_star_plateau_takes_right_edge():
    xs = np.linspace(0.0, 10.0, 2001)
    w1 = np.where(xs < 2, 1 + (xs - 2) ** 2, np.where(xs > 4, 1 + (xs - 4) ** 2, 1.0))
    a = find_a_star(_grid(xs, w1))
    # resolved to the grid spacing
    assert a.value == pytest.approx(4.0, abs=xs[1] - xs[0])
    assert a.plateau[0] == pytest.approx(2.0, abs=1e-2)


@pytest.mark.parametrize("c", [1e-3, 0.5, 7.0])
def test_a_star_scale_invariant(c):
    s = compute_scale(CL, 0.1)
    base = find_a_star(s).value
    scaled = replace(s, w1=c * s.w1, w2=c * s.w2)
    # golden-section refinement tolerance
    assert find_a_star(scaled).value == pytest.approx(base, rel=1e-7)


def test_a_star_not_localized():
    xs = np.linspace(0.0, 5.0, 500)
    with pytest.raises(LocalizationError):
        find_a_star(_grid(xs, 2.0 - xs / 5.0, -np.full_like(xs, 0.2)))


def test_convexity_report_square():
    xs = np.linspace(0, 1, 100)
    assert convexity_report(xs, xs ** 2, "convex").passed
    assert not convexity_report(xs, xs ** 2, "concave").passed


@pytest.mark.parametrize("name", list(GALLERY))
@pytest.mark.parametrize("q", [0.1, 1.0])
def test_shape_suite_gallery(name, q):
    m = gallery_model(name)
    s = compute_scale(m, q)
    a = find_a_star(s, model=m)
    rep = shape_suite(s, a)
    assert all(r.passed for r in rep.values()), {k: r.worst_violation for k, r in rep.items()}
    for r in rep.values():
        assert (r.worst_violation <= 0) == r.passed


def test_smoothness_classes():
    gauss_exp = LevyModel(0.5, 1.0, PiecewiseExponentialDensity.exponential(1.0, 2.0))
    assert smoothness_class(gauss_exp).cls == "C2"
    atom = smoothness_class(ATOM)
    assert atom.cls == "C1_iff_tail_continuous" and atom.c1 is False and 1.0 in atom.atoms
    bv = smoothness_class(CL)
    assert bv.cls == "C1_iff_tail_continuous" and bv.c1 is True
    assert smoothness_class(gallery_model("piecewise_power")).cls == "C1"


def test_density_log_convexity_gate():
    assert density_log_convexity(CL).passed
    assert density_log_convexity(BM).passed
    hump = LevyModel.from_bv_drift(3.0, PiecewiseExponentialDensity.from_table([0, 1, 2, 4],
                                                                              [0.2, 2.0, 0.5, 0.05]))
    assert not density_log_convexity(hump).passed


def test_conjugate_tail_brownian_vanishes():
    ct = conjugate_tail(compute_scale(BM, 0.0), BM)
    assert np.max(np.abs(ct.values)) < 1e-8
    assert all(r.passed for r in ct.reports)


def test_conjugate_tail_cramer_lundberg():
    ct = conjugate_tail(compute_scale(CL, 0.0), CL)
    assert ct.values[-1] == 0.0
    assert all(r.passed for r in ct.reports)
    assert "bias" in ct.bias_note


def test_conjugate_tail_needs_q_zero():
    with pytest.raises(PreconditionError):
        conjugate_tail(compute_scale(CL, 0.1), CL)


def test_potential_density_examples():
    xs = np.linspace(0.0, 20.0, 2001)
    r = potential_density_check(xs, 1 / (1 + xs), -1 / (1 + xs) ** 2)
    assert r.passed
    e = potential_density_check(xs, np.exp(-xs), -np.exp(-xs))
    assert all(h.passed for h in e.hypotheses)
    bump = 1 / (1 + xs) + 0.05 * np.exp(-((xs - 5) ** 2))
    b = potential_density_check(xs, bump, np.gradient(bump, xs))
    assert not b.passed


def test_potential_density_needs_uniform_grid():
    xs = np.geomspace(1e-3, 1, 50)
    with pytest.raises(DomainError):
        potential_density_check(xs, 1 / (1 + xs), -1 / (1 + xs) ** 2)


def test_excursion_tail_equals_log_derivative():
    s = compute_scale(CL, 0.0)
    for z in (0.5, 1.0, 3.0):
        w, w1 = evaluate(s, z)
        assert excursion_sup_tail(CL, s, z) == pytest.approx(w1 / w, rel=1e-7)


def test_excursion_tail_non_increasing():
    s = compute_scale(CL, 0.0)
    vals = [excursion_sup_tail(CL, s, z) for z in (0.2, 0.7, 1.5, 4.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_excursion_jump_at_atom():
    s = compute_scale(ATOM, 0.0, x_max=3.0)
    j = excursion_sup_jump(ATOM, s, 1.0)
    lam_over_delta = 0.5 / 2.0
    # W(x) = e^{x/4}/2 on [0, 1], so m W(0) / (delta W(1)) = (1/4) e^{-1/4}
    assert j["exact"] == pytest.approx(lam_over_delta * math.exp(-lam_over_delta), rel=1e-10)
    assert j["probe"] == pytest.approx(j["exact"], abs=1e-8)


def test_excursion_continuous_tail_has_no_jump():
    s = compute_scale(CL, 0.0)
    for z in (0.5, 1.0, 2.0):
        assert abs(excursion_sup_jump(CL, s, z)["probe"]) < 1e-8


def test_excursion_needs_bounded_variation():
    with pytest.raises(DomainError):
        excursion_sup_tail(BM, compute_scale(BM, 0.0), 1.0)
