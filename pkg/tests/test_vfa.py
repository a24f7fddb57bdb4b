"""Value function: features, linear model, opportunity costs, training."""

import json
import math

import numpy as np
import pytest

from conftest import make_instance
from sddlab.routing import InsertionCandidate, VehicleStats
from sddlab.vfa import (
    N_FEATURES,
    Observation,
    ValueModel,
    candidate_stats,
    fleet_features,
    opportunity_costs,
    refit,
    train,
)


def _stats(revenue=0.0, final_mean=0.0, final_var=0.0, slack_sum=0.0,
           slack_cnt=0, pon_prod=1.0, dist_sum=0.0, n_cust=0):
    return VehicleStats(revenue, final_mean, final_var, slack_sum, slack_cnt,
                        pon_prod, dist_sum, n_cust)


def test_features_single_vehicle_example():
    # final depot arrival: mean 300, variance 100 at a 480-minute shift
    s = _stats(final_mean=300.0, final_var=100.0, slack_sum=80.0, slack_cnt=2,
               pon_prod=0.9, dist_sum=12.0, n_cust=3)
    f1, f2, f3, f4, f5 = fleet_features([s], 100.0, 480.0)
    assert f1 == pytest.approx(180.0, abs=1e-12)
    assert f2 == pytest.approx(40.0, abs=1e-12)  # mean slack of {30, 50}
    assert f3 == pytest.approx(0.9, abs=1e-12)
    assert f4 == pytest.approx(160.0, abs=1e-12)
    assert f5 == pytest.approx(4.0, abs=1e-12)


def test_features_empty_fleet_fallbacks():
    idle = _stats(final_mean=100.0)
    f1, f2, f3, f4, f5 = fleet_features([idle], 100.0, 480.0)
    assert f1 == 380.0
    assert f2 == 380.0  # no routed customers: remaining shift time
    assert f3 == 1.0
    assert f4 == 380.0
    assert f5 == 0.0


def test_features_aggregate_worst_vehicle():
    a = _stats(final_mean=300.0, final_var=100.0)   # mean + 2 sd = 320
    b = _stats(final_mean=280.0, final_var=900.0)   # mean + 2 sd = 340
    f1, _, _, f4, _ = fleet_features([a, b], 0.0, 480.0)
    assert f1 == 480.0 - 300.0  # latest expected return
    assert f4 == 480.0 - 340.0  # worst two-sigma return


def test_features_multiply_on_time_products():
    a = _stats(pon_prod=0.8, slack_sum=30.0, slack_cnt=1, dist_sum=4.0, n_cust=1)
    b = _stats(pon_prod=0.5, slack_sum=50.0, slack_cnt=1, dist_sum=8.0, n_cust=2)
    _, f2, f3, _, f5 = fleet_features([a, b], 0.0, 480.0)
    assert f3 == pytest.approx(0.4, abs=1e-12)
    assert f2 == pytest.approx(40.0, abs=1e-12)
    assert f5 == pytest.approx(4.0, abs=1e-12)


def test_value_model_basics():
    m = ValueModel.zero()
    assert m.coef.shape == (32, 1 + N_FEATURES)
    assert m.value(100.0, (1.0, 2.0, 3.0, 4.0, 5.0)) == 0.0
    m.coef[6, 0] = 5.0
    m.coef[6, 1] = 0.1
    assert m.value(6 * 15.0, (100.0, 0.0, 0.0, 0.0, 0.0)) == pytest.approx(15.0)
    m.coef[6, 0] = -3.0
    m.coef[6, 1] = 0.0
    assert m.value(6 * 15.0, (100.0, 0.0, 0.0, 0.0, 0.0)) == 0.0  # clamped


def test_value_model_period_lookup():
    m = ValueModel.zero()
    m.coef[0, 0] = 1.0
    m.coef[31, 0] = 7.0
    assert m.value(0.0, (0,) * 5) == 1.0
    assert m.value(14.999, (0,) * 5) == 1.0
    assert m.value(479.0, (0,) * 5) == 7.0
    assert m.value(480.0, (0,) * 5) == 7.0  # clamps to the last period
    with pytest.raises(ValueError):
        m.period_index(-1.0)


def test_value_linear_before_clamp():
    rng = np.random.default_rng(2)
    m = ValueModel.zero()
    m.coef[3] = rng.uniform(0.5, 1.0, size=6)  # positive: no clamping below
    x = tuple(rng.uniform(0.0, 10.0, size=5))
    y = tuple(rng.uniform(0.0, 10.0, size=5))
    lam = 0.3
    mix = tuple(lam * a + (1 - lam) * b for a, b in zip(x, y))
    t = 3 * 15.0
    assert m.value(t, mix) == pytest.approx(
        lam * m.value(t, x) + (1 - lam) * m.value(t, y), abs=1e-9
    )


def test_opportunity_costs_floor_and_identity():
    m = ValueModel.zero()
    m.coef[0] = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0])  # value = f1
    base = [_stats(final_mean=100.0)]
    same = InsertionCandidate(
        vehicle=0, walk_pos=0, stops_pos=0, walk_n=0, deadline_abs=60.0,
        delta_revenue=1.0, pon_new=1.0, stats=base[0], vehicle_was_empty=True,
    )
    worse = InsertionCandidate(
        vehicle=0, walk_pos=0, stops_pos=0, walk_n=0, deadline_abs=120.0,
        delta_revenue=1.0, pon_new=1.0,
        stats=_stats(final_mean=140.0), vehicle_was_empty=True,
    )
    better = InsertionCandidate(
        vehicle=0, walk_pos=0, stops_pos=0, walk_n=0, deadline_abs=240.0,
        delta_revenue=1.0, pon_new=1.0,
        stats=_stats(final_mean=60.0), vehicle_was_empty=True,
    )
    opps = opportunity_costs(
        m, 0.0, 480.0, base, {60.0: same, 120.0: worse, 240.0: better}
    )
    assert opps[60.0] == 0.0          # identical plan
    assert opps[120.0] == pytest.approx(40.0)  # f1 drops by 40
    assert opps[240.0] == 0.0         # improvement floors at zero


def test_candidate_stats_replaces_only_that_vehicle():
    base = [_stats(revenue=1.0), _stats(revenue=2.0)]
    cand = InsertionCandidate(
        vehicle=1, walk_pos=0, stops_pos=0, walk_n=0, deadline_abs=60.0,
        delta_revenue=0.5, pon_new=1.0, stats=_stats(revenue=2.5),
        vehicle_was_empty=False,
    )
    out = candidate_stats(base, cand)
    assert out[0] is base[0]
    assert out[1].revenue == 2.5
    assert base[1].revenue == 2.0


def test_refit_recovers_linear_model():
    # noiseless data: the only deviation left is the ridge term's shrinkage,
    # which vanishes as observations accumulate
    rng = np.random.default_rng(8)
    true = ValueModel.zero()
    periods = (4, 21)
    for p in periods:
        true.coef[p] = rng.uniform(-1.0, 1.0, size=1 + N_FEATURES)
    obs = []
    for p in periods:
        feats = rng.uniform(0.0, 300.0, size=(150_000, N_FEATURES))
        ys = true.coef[p, 0] + feats @ true.coef[p, 1:]
        obs.extend(
            Observation(period=p, features=tuple(f), reward_togo=float(y))
            for f, y in zip(feats, ys)
        )
    fitted = refit(ValueModel.zero(), obs, ridge_lam=1e-3)
    for p in periods:
        assert np.max(np.abs(fitted.coef[p] - true.coef[p])) < 1e-6


def test_refit_matches_independent_ridge_solver():
    from scipy.linalg import lstsq

    rng = np.random.default_rng(14)
    lam = 1e-3
    obs = []
    raw = {}
    for p in range(32):
        n = int(rng.integers(24, 60))
        feats = rng.uniform(0.0, 200.0, size=(n, N_FEATURES))
        ys = rng.normal(0.0, 5.0, size=n)
        raw[p] = (feats, ys)
        obs.extend(
            Observation(period=p, features=tuple(f), reward_togo=float(y))
            for f, y in zip(feats, ys)
        )
    fitted = refit(ValueModel.zero(), obs, ridge_lam=lam)
    for p, (feats, ys) in raw.items():
        x = np.hstack([np.ones((len(ys), 1)), feats])
        aug = np.vstack([x, math.sqrt(lam) * np.eye(1 + N_FEATURES)])
        rhs = np.concatenate([ys, np.zeros(1 + N_FEATURES)])
        want = lstsq(aug, rhs)[0]
        assert fitted.coef[p] == pytest.approx(want, abs=1e-8)


def test_refit_keeps_untouched_periods():
    m = ValueModel.zero()
    m.coef[5, 0] = 2.5
    obs = [Observation(period=0, features=(1.0, 0, 0, 0, 0), reward_togo=3.0)]
    out = refit(m, obs)
    assert out.coef[5, 0] == 2.5
    assert out.coef[0, 0] != 0.0
    with pytest.raises(ValueError):
        refit(m, [Observation(period=32, features=(0,) * 5, reward_togo=0.0)])


def test_model_round_trip(tmp_path):
    m = ValueModel.zero()
    m.coef[:] = np.random.default_rng(4).normal(size=m.coef.shape)
    p = tmp_path / "model.json"
    m.save(p, meta={"note": "round trip"})
    loaded = ValueModel.load(p)
    assert np.array_equal(loaded.coef, m.coef)
    with open(p) as fh:
        d = json.load(fh)
    assert d["schema"] == "sddlab vfa v1"
    d["schema"] = "other"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    with pytest.raises(ValueError):
        ValueModel.load(bad)


def test_train_zero_demand_stays_zero():
    inst = make_instance(expected_orders=0)
    model, curve = train(inst, "gaussian", "stochastic", episodes=4, seed=0,
                         batch_size=2)
    assert np.all(model.coef == 0.0)
    assert [row[1] for row in curve] == [0.0] * 4
    assert [row[0] for row in curve] == [0, 1, 2, 3]


def test_train_is_reproducible():
    inst = make_instance(expected_orders=8)
    a, curve_a = train(inst, "gaussian", "stochastic", episodes=6, seed=3,
                       batch_size=3)
    b, curve_b = train(inst, "gaussian", "stochastic", episodes=6, seed=3,
                       batch_size=3)
    assert np.array_equal(a.coef, b.coef)
    assert curve_a == curve_b
    assert any(row[1] != 0.0 for row in curve_a)  # something was sold


def test_train_curve_running_average():
    inst = make_instance(expected_orders=6)
    _, curve = train(inst, "gaussian", "stochastic", episodes=5, seed=1,
                     batch_size=5)
    profits = [row[1] for row in curve]
    for i, (_, _, running) in enumerate(curve):
        assert running == pytest.approx(
            sum(profits[: i + 1]) / (i + 1), abs=1e-12
        )
