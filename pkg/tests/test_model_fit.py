import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import least_squares

from formflood.attack_sim import DAY, MIB, SweepRow, SweepTable, TimeSeries, replication_seed, run_attack, sweep
from formflood.calibration import refine_forms_to_kill
from formflood.model_fit import (
    ModelParams,
    UnconvergedFitError,
    crossing_point,
    eval_model,
    fit_exponential,
    fit_linear,
    fit_power_law,
    fit_report_csv,
    fit_tanh_model,
    forms_to_kill,
    long_term_rate,
    model_jacobian,
    model_kill_time,
    scaling_report_csv,
)
from formflood.scenario import standard_attack

T200 = np.linspace(0.0, 100.0, 200)


def rel_err(x, ref):
    return abs(x - ref) / abs(ref)


# -- the growth model --------------------------------------------------------


def test_model_is_zero_at_start():
    assert eval_model(ModelParams(3.0, 7.0, 0.2), 0.0) == 0.0


def test_model_saturates_to_a_line():
    assert eval_model(ModelParams(1.0, 0.0, 1e3), 5.0) == pytest.approx(5.0)


def test_model_worked_value():
    # (0.5 * 10 + 2) * tanh(1), with tanh(1) = 0.7615941559557649
    assert eval_model(ModelParams(0.5, 2.0, 0.1), 10.0) == pytest.approx(7 * 0.7615941559557649, rel=1e-14)
    assert eval_model(ModelParams(0.5, 2.0, 0.1), 10.0) == pytest.approx(5.331159091690354, rel=1e-14)


@given(st.floats(0, 100), st.floats(0, 1e4), st.floats(0, 10), st.floats(0, 1e6))
def test_model_is_non_negative(a, b, c, t):
    assert eval_model(ModelParams(a, b, c), t) >= 0.0


def test_jacobian_matches_central_differences():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        a, b, c = rng.uniform(0.01, 10), rng.uniform(0.0, 100), rng.uniform(1e-3, 1.0)
        # keep c t where tanh still bends, otherwise the c partial underflows to 0
        t = rng.uniform(0.01, 4.0) / c
        J = model_jacobian(a, b, c, [t])[0]
        p = np.array([a, b, c])
        for k in range(3):
            h = 1e-6 * max(abs(p[k]), 1e-3)
            up, dn = p.copy(), p.copy()
            up[k] += h
            dn[k] -= h
            fd = (eval_model(ModelParams(*up), t) - eval_model(ModelParams(*dn), t)) / (2 * h)
            assert abs(J[k] - fd) <= 1e-6 * max(abs(J[k]), 1e-3)


# -- fitting -----------------------------------------------------------------


def test_noiseless_worked_example():
    truth = ModelParams(0.5, 2.0, 0.1)
    fit = fit_tanh_model((T200, eval_model(truth, T200)))
    assert fit.converged
    for got, want in zip((fit.a, fit.b, fit.c), (0.5, 2.0, 0.1)):
        assert rel_err(got, want) < 1e-3


def test_noisy_worked_example():
    truth = ModelParams(0.5, 2.0, 0.1)
    errs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        y = eval_model(truth, T200) * (1 + 0.05 * rng.standard_normal(T200.size))
        fit = fit_tanh_model((T200, y))
        errs.append([rel_err(fit.a, 0.5), rel_err(fit.b, 2.0), rel_err(fit.c, 0.1)])
    assert np.all(np.median(errs, axis=0) < 0.10)


def test_all_zero_series_is_unconverged():
    fit = fit_tanh_model((T200, np.zeros_like(T200)))
    assert not fit.converged and fit.a == 0 and fit.b == 0
    with pytest.raises(UnconvergedFitError):
        long_term_rate(fit)


def test_too_few_samples():
    with pytest.raises(ValueError):
        fit_tanh_model((np.arange(3.0), np.arange(3.0)))


def test_long_term_rate_is_a():
    assert long_term_rate(ModelParams(0.5, 2.0, 0.1)) == 0.5


def test_pure_line_fits_with_a_fast_burst():
    t = np.linspace(0.0, 50.0, 100)
    fit = fit_tanh_model((t, 3 * t))
    assert fit.converged
    assert fit.a == pytest.approx(3.0, rel=1e-3)


def test_fit_agrees_with_scipy():
    rng = np.random.default_rng(5)
    truth = ModelParams(2.0, 40.0, 0.05)
    y = eval_model(truth, T200) * (1 + 0.05 * rng.standard_normal(T200.size))
    ours = fit_tanh_model((T200, y))

    def resid(p):
        return y - eval_model(ModelParams(*p), T200)

    ref = least_squares(resid, x0=[1.0, 10.0, 0.1], method="lm", xtol=1e-14, ftol=1e-14)
    assert ours.residual_norm == pytest.approx(np.linalg.norm(ref.fun), rel=1e-6)
    np.testing.assert_allclose([ours.a, ours.b, ours.c], ref.x, rtol=1e-4)


def test_fit_takes_a_time_series():
    t = np.linspace(0, 200, 50)
    y = np.round(eval_model(ModelParams(1.5, 30.0, 0.08), t)).astype(int)
    s = TimeSeries(t, y, y * 4000)
    by_msgs = fit_tanh_model(s, "messages")
    by_bytes = fit_tanh_model(s, "bytes")
    assert by_bytes.a == pytest.approx(4000 * by_msgs.a, rel=1e-4)


@settings(max_examples=30)
@given(st.floats(0.05, 5), st.floats(0, 100), st.floats(0.01, 1), st.integers(0, 1000))
def test_refit_is_idempotent(a, b, c, seed):
    rng = np.random.default_rng(seed)
    y = eval_model(ModelParams(a, b, c), T200) + rng.normal(0, 0.5, T200.size)
    first = fit_tanh_model((T200, y))
    again = fit_tanh_model((T200, y), initial=first)
    assert again.iterations <= 2
    assert again.residual_norm <= first.residual_norm * (1 + 1e-12)


def test_random_recovery_over_many_seeds():
    rng = np.random.default_rng(7)
    for _ in range(50):
        truth = ModelParams(rng.uniform(0.1, 5), rng.uniform(1, 200), rng.uniform(0.02, 0.5))
        fit = fit_tanh_model((T200, eval_model(truth, T200)))
        for got, want in zip((fit.a, fit.b, fit.c), (truth.a, truth.b, truth.c)):
            assert rel_err(got, want) < 1e-3


def test_fit_report_row():
    text = fit_report_csv(ModelParams(1.0, 2.0, 3.0, 0.5, True, 4), "bytes")
    assert text.splitlines() == ["channel,a,b,c,residual,converged,iterations", "bytes,1.0,2.0,3.0,0.5,true,4"]


def test_simulated_rate_matches_the_mix():
    # uncapped inbox, fitted over four days of polling
    cfg = standard_attack(2050).replace(quota=math.inf, horizon=4 * DAY)
    analytic = 2050 * cfg.expected_rate_per_form()
    rates = []
    for r in range(5):
        out = run_attack(cfg.replace(seed=replication_seed(0, r)))
        rates.append(long_term_rate(fit_tanh_model(out.series.snapshots(), "messages")))
    assert np.mean(rates) == pytest.approx(analytic, rel=0.25)


# -- scaling laws ------------------------------------------------------------


def test_power_law_exact():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    fit = fit_power_law(list(zip(x, 2 * x**3)))
    assert fit.exponent_or_rate == pytest.approx(3.0, abs=1e-12)
    assert fit.coefficient == pytest.approx(2.0, rel=1e-12)
    assert abs(fit.r_squared - 1.0) < 1e-12


def test_power_law_with_noise():
    rng = np.random.default_rng(1)
    x = np.geomspace(100, 10000, 12)
    y = 5 * x**-3.2 * (1 + 0.01 * rng.standard_normal(x.size))
    assert -3.3 <= fit_power_law(list(zip(x, y))).exponent_or_rate <= -3.1


@given(st.lists(st.floats(0.1, 1e4), min_size=3, max_size=10, unique=True),
       st.floats(-4, 4), st.floats(1e-3, 1e3))
def test_power_law_scale_equivariance(xs, e, k):
    x = np.array(xs)
    y = 3.0 * x**e * (1 + 0.1 * np.sin(x))
    base = fit_power_law(list(zip(x, y)))
    scaled = fit_power_law(list(zip(x, k * y)))
    assert scaled.exponent_or_rate == pytest.approx(base.exponent_or_rate, abs=1e-9)
    assert scaled.coefficient == pytest.approx(k * base.coefficient, rel=1e-9)


def test_power_law_rejects_non_positive():
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (0, 2)])
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (2, -2)])
    with pytest.raises(ValueError):
        fit_power_law([(1, 1)])


def test_exponential_exact_and_noisy():
    x = np.linspace(0, 4000, 20)
    assert fit_exponential(list(zip(x, np.exp(0.002 * x)))).exponent_or_rate == pytest.approx(0.002)
    rng = np.random.default_rng(3)
    y = 3 * np.exp(0.0019 * x) * (1 + 0.01 * rng.standard_normal(x.size))
    assert 0.0017 <= fit_exponential(list(zip(x, y))).exponent_or_rate <= 0.0021
    with pytest.raises(ValueError):
        fit_exponential([(1, 0), (2, 1)])


def test_linear_through_origin():
    fit = fit_linear([(1, 2), (2, 4), (5, 10)])
    assert fit.coefficient == pytest.approx(2.0)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.predict(3.0) == pytest.approx(6.0)


def test_exponential_beats_linear_once_a_run_dies_early():
    # 3911 forms kill the box during the attack, so its fitted rate is the burst itself
    table = sweep(standard_attack(514), [514, 1026, 2050, 3911], replications=10, channel="messages")
    pts = [(r.F, r.mean_fit_a) for r in table.rows]
    assert fit_exponential(pts).r_squared > fit_linear(pts).r_squared


def test_crossing_point():
    # kill = 1e10 F^-2 meets F/100 at F^3 = 1e12
    fit = fit_power_law([(F, 1e10 * F**-2.0) for F in (10, 100, 1000)])
    assert crossing_point(fit, 100.0) == pytest.approx(1e4, rel=1e-9)
    with pytest.raises(ValueError):
        crossing_point(fit_linear([(1, 1), (2, 2)]), 1.0)


def test_scaling_report_csv():
    text = scaling_report_csv([fit_linear([(1, 2), (2, 4)])])
    assert text.splitlines()[0] == "kind,coefficient,exponent_or_rate,r_squared,n_points"
    assert text.splitlines()[1].startswith("linear,2.0,1.0,")


# -- inverting the kill model ------------------------------------------------


def test_model_kill_time():
    assert model_kill_time(ModelParams(2.0, 0.0, 1e3), 100.0) == pytest.approx(50.0, rel=1e-9)
    assert model_kill_time(ModelParams(0.0, 10.0, 1.0), 100.0) == math.inf
    assert model_kill_time(ModelParams(1.0, 0.0, 1.0, converged=False), 1.0) == math.inf


def synthetic_table(Fs, k=1e-3, exponent=0.7, table_quota=1.0):
    # growth a = k F^(1/e): kill at quota q is q / a, so the F killing by a deadline scales as q^e
    rows = [SweepRow(F, [None], [0.0], [ModelParams(k * F ** (1 / exponent), 0.0, 1e3)]) for F in Fs]
    return SweepTable(rows, quota=table_quota, fill_rate=116.0)


def test_forms_to_kill_follows_the_quota_power_law():
    table = synthetic_table([10**3, 10**4, 10**5, 10**6, 10**7])
    one = forms_to_kill(2 * MIB, 60.0, table)
    two = forms_to_kill(4 * MIB, 60.0, table)
    assert not one.extrapolated and not two.extrapolated
    assert two.forms / one.forms == pytest.approx(2**0.7, rel=1e-3)


@given(st.floats(1e5, 1e7), st.floats(1.01, 3.0))
def test_forms_to_kill_is_monotone_in_quota(q, factor):
    table = synthetic_table([10**3, 10**4, 10**5, 10**6, 10**7])
    assert forms_to_kill(q * factor, 60.0, table).forms >= forms_to_kill(q, 60.0, table).forms


def test_forms_to_kill_with_no_deadline():
    rows = [SweepRow(100, [None], [0.0], [None]),
            SweepRow(200, [5000.0], [0.0], [None]),
            SweepRow(400, [900.0], [0.0], [None])]
    table = SweepTable(rows, quota=2 * MIB, fill_rate=116.0)
    assert forms_to_kill(2 * MIB, math.inf, table).forms == 200


def test_forms_to_kill_flags_extrapolation():
    table = synthetic_table([10**3, 10**4, 10**5])
    far = forms_to_kill(2 * MIB, 1e-3, table)
    assert far.extrapolated
    assert far.forms > 10**5


def test_forms_to_kill_needs_three_rows():
    with pytest.raises(ValueError):
        forms_to_kill(2 * MIB, 60.0, synthetic_table([10, 100]))


def test_forms_to_kill_round_trip():
    # kill times at the cliff vary strongly with the seed set, so the round
    # trip reuses the replication seeds the estimate was built from
    base = standard_attack(2050)
    result, table = refine_forms_to_kill(base, 2 * MIB, 60.0, [1024, 2048, 2560, 3072, 4096], replications=20)
    check = sweep(base, [result.forms], replications=20)
    kill = check.rows[0].mean_kill
    print(f"forms_to_kill -> F={result.forms}, mean kill {kill:.1f} min")
    assert abs(kill - 60.0) <= 15.0
