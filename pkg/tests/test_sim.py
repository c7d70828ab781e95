import math
import warnings

import numpy as np
import pytest

from batreg import sim
from batreg.core import BatteryParams, MarketPrices, RegulationTrace
from batreg.cost import PowerLawStress
from batreg.offline import OracleConfig
from batreg.rainflow import CycleSet
from batreg.sim import (BATCH_COLUMNS, BatchCase, ClipWarning, InvariantViolation, TraceFormatError,
                        default_e0, generate_trace, load_profile_csv, load_trace_csv,
                        pjm_like_trace, repeat_trace, run_batch, run_simulation, table_cases)

PHI = PowerLawStress()


def _write(path, text):
    path.write_text(text)
    return path


def test_generate_trace_is_seeded():
    a, b = generate_trace(5, 50), generate_trace(5, 50)
    assert np.array_equal(a.r, b.r)
    assert not np.array_equal(a.r, generate_trace(6, 50).r)


def test_generate_trace_distribution():
    tr = generate_trace(1, 10_000, P=2.0)
    sigma = 2.0 / math.sqrt(3.0) / math.sqrt(10_000)
    assert abs(tr.r.mean()) < 3 * sigma
    assert tr.r.min() >= -2.0 and tr.r.max() <= 2.0


def test_repeat_trace_doubles():
    tr = generate_trace(2, 7)
    rep = repeat_trace(tr)
    assert len(rep) == 14 and np.array_equal(rep.r[:7], rep.r[7:])
    with pytest.raises(ValueError):
        repeat_trace(tr, 0)


def test_pjm_like_trace_shape():
    tr = pjm_like_trace(3, 50_000)
    assert len(tr) == 50_000 and tr.T == pytest.approx(2 / 3600)
    assert np.all(np.abs(tr.r) <= 1.0)
    assert np.array_equal(tr.r, pjm_like_trace(3, 50_000).r)


def test_load_trace_zeros(tmp_path):
    tr = load_trace_csv(_write(tmp_path / "z.csv", "t,r\n0,0\n2,0\n4,0\n"))
    assert tr.r.tolist() == [0.0, 0.0, 0.0]


def test_load_trace_clips_with_warning(tmp_path):
    f = _write(tmp_path / "c.csv", "t,r\n0,1.5\n2,-0.2\n4,-3\n")
    with pytest.warns(ClipWarning) as rec:
        tr = load_trace_csv(f, P=1.0, normalized=True)
    assert rec[0].message.count == 2
    assert tr.r.tolist() == [1.0, -0.2, -1.0]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert load_trace_csv(f, P=4.0, negate=True).r.tolist() == [-1.5, 0.2, 3.0]


def test_load_four_week_file(tmp_path):
    n = 4 * 7 * 24 * 1800
    assert n == 1_209_600
    f = tmp_path / "month.csv"
    t = np.arange(n) * 2
    r = np.round(np.sin(np.arange(n) * 1e-3) * 0.5, 4)
    with f.open("w") as fh:
        fh.write("t,r\n")
        fh.write("\n".join(f"{a},{b}" for a, b in zip(t.tolist(), r.tolist())))
    tr = load_trace_csv(f)
    assert len(tr) == n


@pytest.mark.parametrize("text,line", [
    ("t,x\n0,1\n", 1),
    ("t,r\n0,0.1\n2,abc\n", 3),
    ("t,r\n0,0.1,5\n", 2),
    ("t,r\n0,nan\n", 2),
    ("t,r\n,0.1\n", 2),
])
def test_load_trace_errors_name_the_line(tmp_path, text, line):
    f = _write(tmp_path / "bad.csv", text)
    with pytest.raises(TraceFormatError, match=f":{line}:"):
        load_trace_csv(f)


def test_load_trace_requires_rows(tmp_path):
    with pytest.raises(TraceFormatError):
        load_trace_csv(_write(tmp_path / "h.csv", "t,r\n"))


def test_load_profile(tmp_path):
    assert load_profile_csv(_write(tmp_path / "e.csv", "")).size == 0
    assert load_profile_csv(_write(tmp_path / "h.csv", "t,s\n")).size == 0
    assert load_profile_csv(_write(tmp_path / "p.csv", "t,s\n0,0.2\n1,0.4\n")).tolist() == [0.2, 0.4]


def test_balanced_report_has_zero_gap():
    p = BatteryParams()
    for seed in range(1, 6):
        tr = generate_trace(seed, 5)
        rep = run_simulation("threshold", tr, default_e0(p), p, PHI, MarketPrices(50, 50),
                             OracleConfig(9))
        assert rep.gap <= rep.slack + 1e-9
        assert math.isfinite(rep.optimum)


def test_long_trace_skips_oracle():
    p = BatteryParams()
    rep = run_simulation("threshold", generate_trace(1, 40), 0.5, p, PHI, MarketPrices(50, 50),
                         OracleConfig(9, max_steps=12))
    assert rep.gap is None and rep.optimum is None


def test_threshold_beats_simple_per_trial():
    p = BatteryParams.with_round_trip(0.85)
    for theta, pi in ((50, 50), (80, 20), (20, 80)):
        m = MarketPrices(theta, pi)
        for seed in range(1, 21):
            tr = generate_trace(seed, 96)
            a = run_simulation("threshold", tr, default_e0(p), p, PHI, m)
            b = run_simulation("simple", tr, default_e0(p), p, PHI, m)
            assert a.breakdown.j_total <= b.breakdown.j_total


def test_higher_prices_follow_more_closely():
    p = BatteryParams()
    tr = generate_trace(4, 400)
    shares = []
    for price in (50, 100, 200, 400, 800):
        rep = run_simulation("threshold", tr, 0.5, p, PHI, MarketPrices(price, price))
        mismatch = rep.breakdown.j_reg / price
        shares.append(mismatch)
    assert all(b <= a + 1e-12 for a, b in zip(shares, shares[1:]))
    assert shares[-1] < shares[0]


def test_report_dict_and_series():
    p = BatteryParams()
    rep = run_simulation("simple", generate_trace(1, 10), 0.5, p, PHI, MarketPrices(10, 10))
    d = rep.to_dict()
    assert d["policy"] == "simple" and d["metadata"]["N"] == 10 and "soc" not in d
    s = rep.to_dict(series=True)
    assert len(s["soc"]) == 11 and len(s["c"]) == 10 and "u" in s["cycles"]


def test_run_simulation_validates_inputs():
    p = BatteryParams()
    tr = generate_trace(1, 5)
    with pytest.raises(ValueError):
        run_simulation("greedy", tr, 0.5, p, PHI, MarketPrices(1, 1))
    with pytest.raises(ValueError):
        run_simulation("simple", RegulationTrace(tr.r, 1.0), 0.5, p, PHI, MarketPrices(1, 1))


def test_streaming_mismatch_is_an_invariant_violation(monkeypatch):
    monkeypatch.setattr(sim, "count_dispatch", lambda *a, **k: CycleSet(u=[0.5]))
    with pytest.raises(InvariantViolation):
        run_simulation("simple", generate_trace(1, 20), 0.5, BatteryParams(), PHI,
                       MarketPrices(1, 1))


def test_table_cases():
    cases = table_cases(3)
    assert [c.name for c in cases] == [str(i) for i in range(1, 10)]
    for a, b in zip(cases[3:6], cases[6:]):
        assert (a.theta, a.pi, a.eta) == (b.theta, b.pi, b.eta)
        assert b.steps == 2 * a.steps


def test_batch_balanced_and_deterministic():
    p = BatteryParams()
    cases = [BatchCase("1", 50, 50, 1.0, 3)]
    rows, trials = run_batch(cases, 10, p, PHI)
    assert list(rows[0]) == list(BATCH_COLUMNS)
    assert all(t.policy.gap <= t.policy.slack + 1e-9 for t in trials)
    assert rows[0]["epsilon_theory"] == 0.0
    again, _ = run_batch(cases, 10, p, PHI)
    assert again == rows
    parallel, _ = run_batch(cases, 10, p, PHI, jobs=2)
    assert parallel == rows


def test_batch_doubling_doubles_objective():
    p = BatteryParams()
    base = BatchCase("5", 80, 20, 0.85, 96)
    rows, _ = run_batch([base, BatchCase("8", 80, 20, 0.85, 96, repeat=2)], 30, p, PHI,
                        oracle=None)
    ratio = rows[1]["mean_objective_policy"] / rows[0]["mean_objective_policy"]
    assert ratio == pytest.approx(2.0, rel=0.1)
    assert math.isnan(rows[0]["max_gap"])


@pytest.mark.parametrize("theta,pi", [(80, 20), (20, 80), (50, 50)])
def test_short_traces_lose_at_most_epsilon_to_simple(theta, pi):
    # on a few steps the simple policy can win a half cycle, by less than the regret bound
    from batreg.analysis import optimality_gap_bound
    p = BatteryParams.with_round_trip(0.85)
    m = MarketPrices(theta, pi)
    eps = optimality_gap_bound(m, p, PHI).epsilon
    for N in (2, 4, 6, 12):
        for seed in range(1, 201):
            tr = generate_trace(seed, N)
            a = run_simulation("threshold", tr, default_e0(p), p, PHI, m).breakdown.j_total
            b = run_simulation("simple", tr, default_e0(p), p, PHI, m).breakdown.j_total
            assert a <= b + eps + 1e-9
