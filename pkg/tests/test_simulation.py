import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyscale.definetti import barrier_value
from levyscale.errors import DomainError, UnsupportedModelError
from levyscale.gallery import gallery_model
from levyscale.levy_model import LevyModel, PiecewiseExponentialDensity
from levyscale.scale_fn import compute_scale
from levyscale.simulation import StrategySpec, compare_strategies, simulate_value, thread_count

CL = LevyModel.from_bv_drift(1.0, PiecewiseExponentialDensity.exponential(1.0, 2.0))


def test_deterministic_under_seed():
    a = simulate_value(CL, "barrier:a=1.5", 0.1, 1.0, n_paths=5000, seed=7, keep_paths=True)
    b = simulate_value(CL, "barrier:a=1.5", 0.1, 1.0, n_paths=5000, seed=7, keep_paths=True)
    assert a.mean == b.mean and np.array_equal(a.values, b.values)
    c = simulate_value(CL, "barrier:a=1.5", 0.1, 1.0, n_paths=5000, seed=8)
    assert c.mean != a.mean


def test_thread_count_does_not_change_result():
    kw = dict(n_paths=9000, seed=3, keep_paths=True)
    one = simulate_value(CL, "barrier:a=2", 0.1, 1.0, threads=1, **kw)
    three = simulate_value(CL, "barrier:a=2", 0.1, 1.0, threads=3, **kw)
    assert np.array_equal(one.values, three.values)


def test_thread_env(monkeypatch):
    monkeypatch.setenv("LEVYSCALE_THREADS", "4")
    assert thread_count() == 4
    assert thread_count(2) == 2


def test_prefix_consistency():
    # the first paths do not depend on how many are drawn
    small = simulate_value(CL, "barrier:a=1", 0.1, 0.5, n_paths=100, seed=11, keep_paths=True)
    large = simulate_value(CL, "barrier:a=1", 0.1, 0.5, n_paths=5000, seed=11, keep_paths=True)
    assert np.array_equal(small.values, large.values[:100])


def test_monte_carlo_matches_barrier_value():
    q, a, x0 = 0.1, 2.107, 1.0
    est = simulate_value(CL, StrategySpec.barrier(a), q, x0, n_paths=20000, seed=1)
    exact = barrier_value(compute_scale(CL, q), a, x0)
    assert abs(est.mean - exact) <= 4 * est.std_error + est.truncation_bias_bound
    assert not est.approximate


def test_large_rate_limit():
    # with heavy discounting only the initial lump above the barrier counts
    est = simulate_value(CL, "barrier:a=1", 50.0, 3.0, n_paths=4000, seed=2)
    assert est.mean == pytest.approx(2.0, abs=0.05)


def test_no_payout_strategy():
    est = simulate_value(CL, "none", 0.1, 1.0, n_paths=1000, seed=0)
    assert est.mean == 0.0 and est.std_error == 0.0


def test_euler_mode_is_flagged():
    m = gallery_model("piecewise_power")
    with pytest.raises(UnsupportedModelError):
        simulate_value(m, "barrier:a=0.5", 0.1, 0.5, n_paths=100)
    est = simulate_value(m, "barrier:a=0.5", 1.0, 0.5, n_paths=200, mode="euler", dt=1e-3, horizon=5.0)
    assert est.approximate and math.isfinite(est.mean)


def test_compare_strategies_common_numbers():
    rows = compare_strategies(CL, 0.1, 1.0, ["barrier:a=2.107", "barrier:a=0", "threshold:b=1,rate=0.5"],
                              n_paths=4000, seed=5)
    assert rows[0]["diff_vs_reference"] == 0.0 and rows[0]["diff_std_error"] == 0.0
    assert not any(r["beats_reference"] for r in rows)
    assert sorted(r["rank"] for r in rows) == [1, 2, 3]


def test_invalid_inputs():
    with pytest.raises(DomainError):
        simulate_value(CL, "barrier:a=1", 0.0, 1.0)
    with pytest.raises(DomainError):
        simulate_value(CL, "barrier:a=1", 0.1, -1.0)
    with pytest.raises(DomainError):
        StrategySpec.parse("barrier:x=1")
    with pytest.raises(DomainError):
        StrategySpec.parse("refract:a=1")
    with pytest.raises(DomainError):
        StrategySpec.parse("threshold:b=1")


finite = st.floats(0.0, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(spec=st.one_of(finite.map(StrategySpec.barrier),
                      st.tuples(finite, finite).map(lambda t: StrategySpec.threshold(*t)),
                      st.just(StrategySpec("none"))))
def test_label_parse_round_trip(spec):
    back = StrategySpec.parse(spec.label())
    assert back.kind == spec.kind
    assert back.label() == spec.label()
    for k in ("a", "b", "rate"):
        v, w = getattr(spec, k), getattr(back, k)
        assert (v is None and w is None) or w == pytest.approx(v, rel=1e-5, abs=1e-300)
