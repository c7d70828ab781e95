
import numpy as np
import pytest

from batreg.analysis import _half_cost_argmins
from batreg.core import BatteryParams, MarketPrices, RegulationTrace
from batreg.cost import ConvexStress, PowerLawStress, total_cost
from batreg.offline import (BudgetExceeded, OracleConfig, brute_force_offline, grid_dispatch,
                            measure_gap, run_threshold)
from batreg.policy import compute_u_hat
from batreg.rainflow import count_dispatch

from oracles import enumerate_offline

PHI = PowerLawStress()


def _instance(seed, n_lo=2, n_hi=6, p=BatteryParams()):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(n_lo, n_hi + 1))
    return RegulationTrace(rng.uniform(-1, 1, N), p.T), float(rng.uniform(p.e_min, p.e_max))


def test_prohibitive_aging_means_no_action():
    p = BatteryParams(e_min=0.0, e_max=1.0, T=1.0, R=1e12)
    res = brute_force_offline(RegulationTrace([0.5, -0.5], 1.0), p, PHI, MarketPrices(50, 50),
                              0.5, OracleConfig(2))
    assert res.dispatch.c.tolist() == [0.0, 0.0] and res.dispatch.d.tolist() == [0.0, 0.0]
    assert res.cost.j_reg == pytest.approx(50.0) and res.cost.j_total == pytest.approx(50.0)


def test_free_battery_follows_exactly():
    p = BatteryParams(e_min=0.0, e_max=1.0, T=0.25, R=0.0)
    tr = RegulationTrace([0.4, -0.9, 0.3, 0.2], p.T)
    res = brute_force_offline(tr, p, PHI, MarketPrices(50, 50), 0.5, OracleConfig(3))
    assert res.cost.j_total == 0.0
    assert np.allclose(res.dispatch.c - res.dispatch.d, tr.r, rtol=0, atol=1e-15)


def test_balanced_gap_within_slack():
    p = BatteryParams()
    for seed in range(10):
        tr, e0 = _instance(seed, 2, 5)
        g = measure_gap(tr, p, PHI, MarketPrices(50, 50), e0, OracleConfig(9))
        assert g.gap <= g.slack + 1e-9
        assert set(g.to_dict()) >= {"optimum", "dispatch", "gap_vs_policy", "slack"}


@pytest.mark.parametrize("seed", range(40))
def test_search_matches_exhaustive_enumeration(seed):
    rng = np.random.default_rng(1000 + seed)
    eta = float(rng.choice([1.0, 0.85, 0.7]))
    p = BatteryParams.with_round_trip(eta)
    p = BatteryParams(e_min=float(rng.uniform(0.0, 0.4)), e_max=float(rng.uniform(0.6, 1.0)),
                      eta_c=p.eta_c, eta_d=p.eta_d, R=float(rng.choice([3e4, 3e5, 3e6])), T=0.25)
    m = MarketPrices(float(rng.uniform(0, 150)), float(rng.uniform(0, 150)))
    N, K = int(rng.integers(1, 5)), int(rng.choice([2, 3, 5]))
    r = rng.uniform(-1, 1, N)
    r[rng.random(N) < 0.15] = 0.0
    e0 = float(rng.uniform(p.e_min, p.e_max))
    res = brute_force_offline(RegulationTrace(r, p.T), p, PHI, m, e0, OracleConfig(K))
    ref, _, _ = enumerate_offline(r, e0, K, p.T, p.eta_c, p.eta_d, p.E, p.R, p.e_min, p.e_max,
                                  p.P, m.theta, m.pi, PHI.alpha, PHI.beta)
    assert res.cost.j_total == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_undeliverable_instruction_is_a_constant():
    # instructions beyond the power rating add the same penalty to every candidate
    p = BatteryParams()
    m = MarketPrices(30, 70)
    r = np.array([1.6, -0.4, -1.3])
    res = brute_force_offline(RegulationTrace(r, p.T), p, PHI, m, 0.5, OracleConfig(5))
    clipped = brute_force_offline(RegulationTrace(np.clip(r, -1, 1), p.T), p, PHI, m, 0.5,
                                  OracleConfig(5))
    extra = p.T * (m.theta * 0.6 + m.pi * 0.3)
    assert res.cost.j_total == pytest.approx(clipped.cost.j_total + extra, rel=1e-12)


def test_refined_grid_never_worse():
    p = BatteryParams.with_round_trip(0.85)
    m = MarketPrices(80, 20)
    for seed in range(8):
        tr, e0 = _instance(seed, 2, 5, p)
        coarse = brute_force_offline(tr, p, PHI, m, e0, OracleConfig(5))
        fine = brute_force_offline(tr, p, PHI, m, e0, OracleConfig(5).refined())
        assert fine.cost.j_total <= coarse.cost.j_total + 1e-9


def test_grid_dispatch_respects_limits():
    p = BatteryParams(T=1.0)
    dsp = grid_dispatch(np.array([1.0, 1.0, -1.0]), np.array([2, 2, 2]), 3, p, 0.5)
    assert dsp.c == pytest.approx([p.e_max - 0.5, 0.0, 0.0], abs=1e-12)
    assert dsp.d[2] == pytest.approx(p.e_max - p.e_min, abs=1e-12)


def test_errors():
    p = BatteryParams()
    tr = RegulationTrace(np.full(13, 0.3), p.T)
    with pytest.raises(BudgetExceeded):
        brute_force_offline(tr, p, PHI, MarketPrices(50, 50), 0.5)
    small = RegulationTrace([0.9, -0.8, 0.7, -0.6, 0.5, -0.4], p.T)
    with pytest.raises(BudgetExceeded):
        brute_force_offline(small, p, PHI, MarketPrices(50, 50), 0.5, OracleConfig(9, budget=5))
    with pytest.raises(TypeError):
        brute_force_offline(small, p, ConvexStress(PHI.value, PHI.derivative),
                            MarketPrices(50, 50), 0.5)
    with pytest.raises(ValueError):
        brute_force_offline(small, p, PHI, MarketPrices(50, 50), 0.99)
    with pytest.raises(ValueError):
        OracleConfig(1)


def test_threshold_runner_matches_cost_recount():
    p = BatteryParams.with_round_trip(0.85)
    tr, e0 = _instance(3, 20, 40, p)
    dsp, cost = run_threshold(tr, p, PHI, MarketPrices(80, 20), e0)
    assert cost == total_cost(dsp, tr, p, PHI, MarketPrices(80, 20))


# Structure of the optimum: full cycles never exceed u_hat, and half cycles
# stay near their own minimizers with the counts the gap bound assumes.

K = 9
NEAR_BALANCED = [(50, 50, 1.0), (50, 50, 0.85), (400, 400, 1.0)]
ASYMMETRIC = [(80, 20, 0.85), (20, 80, 0.85)]


def _optimum_cycles(theta, pi, eta, seeds):
    p = BatteryParams.with_round_trip(eta)
    m = MarketPrices(theta, pi)
    # one grid cell of normalized depth at a full-scale instruction
    cell = max(p.T * p.eta_c, p.T / p.eta_d) / (p.E * (K - 1))
    for s in seeds:
        tr, e0 = _instance(s, 2, 6, p)
        yield p, m, cell, count_dispatch(brute_force_offline(tr, p, PHI, m, e0, OracleConfig(K)).dispatch, p)


@pytest.mark.parametrize("theta,pi,eta", NEAR_BALANCED + ASYMMETRIC + [(150, 30, 0.85)])
def test_optimum_full_cycles_within_u_hat(theta, pi, eta):
    for p, m, cell, cs in _optimum_cycles(theta, pi, eta, range(60)):
        if cs.u.size:
            assert cs.u.max() <= compute_u_hat(m, p, PHI) + cell


def _half_structure_violations(theta, pi, eta, seeds):
    bad = 0
    for p, m, cell, cs in _optimum_cycles(theta, pi, eta, seeds):
        v, w = _half_cost_argmins(m, p, PHI)
        halves = np.concatenate([cs.v, cs.w])
        deep = np.sum(halves > min(v, w) + cell)
        near = np.sum(halves > min(v, w) - cell)
        over_own = (cs.v.size and cs.v.max() > v + cell) or (cs.w.size and cs.w.max() > w + cell)
        bad += bool(deep > 1 or near > 3 or over_own)
    return bad


@pytest.mark.parametrize("theta,pi,eta", NEAR_BALANCED)
def test_optimum_half_cycles_near_balanced(theta, pi, eta):
    assert _half_structure_violations(theta, pi, eta, range(150)) == 0


@pytest.mark.xfail(strict=True, reason="with strongly asymmetric prices the optimum takes a "
                   "half cycle deeper than its own minimizer to shorten an opposite half")
@pytest.mark.parametrize("theta,pi,eta", ASYMMETRIC)
def test_optimum_half_cycles_asymmetric(theta, pi, eta):
    assert _half_structure_violations(theta, pi, eta, range(150)) == 0
