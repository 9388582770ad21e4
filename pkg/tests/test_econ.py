"""Profit model, amortization, break-even, trend fits, reports, projections."""

import io

import numpy as np
import pytest

from corpus import M1, M3, build_corpus

from rampsched import (DegenerateFitError, EconReport, FleetSpec,
                       MACHINE_PRESETS, ProfitModel, ReportOnUnconvergedError,
                       SampledProfile, ScheduleStats, TrendModel,
                       ValidationError, amortized_daily_msrp,
                       breakeven_max_machine_price, daily_report,
                       fit_price_trend, fit_ramp_trend, make_scenario,
                       profit_vs_price, project_net_profit, solve)
from rampsched.econ import (format_report_table, read_trend_csv,
                            report_as_dict, write_trend_csv,
                            BREAKEVEN_AMORT_DAYS, BREAKEVEN_MSRP_OFFSET,
                            BREAKEVEN_PROFIT_FLOOR)
from rampsched.pmp import PmpSolution

M2 = MACHINE_PRESETS["2"]


# ------------------------------------------------------------- profit line

def test_profit_at_zero_price_is_intercept():
    assert profit_vs_price(0.0, ProfitModel()) == 14.0


def test_profit_line_values():
    pm = ProfitModel()
    assert profit_vs_price(140.0, pm) == pytest.approx(0.0)
    assert profit_vs_price(10.0, pm) == pytest.approx(13.0)


def test_profit_is_affine():
    pm = ProfitModel(a=11.0, b=0.07)
    rng = np.random.default_rng(2)
    for _ in range(100):
        p1, p2 = rng.uniform(-200.0, 200.0, 2)
        lhs = profit_vs_price(p1, pm) + profit_vs_price(p2, pm)
        rhs = 2.0 * profit_vs_price(0.5 * (p1 + p2), pm)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_profit_model_rejects_negative_coefficients():
    with pytest.raises(ValidationError):
        ProfitModel(a=-1.0)


# ------------------------------------------------------------- amortization

def test_amortized_msrp_reference_machines():
    assert amortized_daily_msrp(7400.0, 2.0) == pytest.approx(10.14, abs=0.01)
    assert amortized_daily_msrp(5200.0, 2.0) == pytest.approx(7.12, abs=0.01)
    assert amortized_daily_msrp(6500.0, 2.0) == pytest.approx(8.90, abs=0.01)


def test_amortization_scales_linearly():
    rng = np.random.default_rng(3)
    for _ in range(50):
        price = rng.uniform(100.0, 20000.0)
        k = rng.uniform(0.1, 10.0)
        assert amortized_daily_msrp(k * price, 2.0) \
            == pytest.approx(k * amortized_daily_msrp(price, 2.0), rel=1e-12)


def test_amortization_needs_positive_lifespan():
    with pytest.raises(ValidationError):
        amortized_daily_msrp(1000.0, 0.0)


# ------------------------------------------------------------- break-even

def test_breakeven_at_profit_floor():
    assert breakeven_max_machine_price(5.0) == pytest.approx(6497.0, abs=0.5)


def test_breakeven_linearity():
    base = breakeven_max_machine_price(5.0)
    for x in (1.0, 10.0, 250.0):
        assert breakeven_max_machine_price(5.0 + x / 730.0) \
            == pytest.approx(base + x, rel=1e-12)
    assert breakeven_max_machine_price(13.9) == pytest.approx(730.0 * 17.8)


def test_breakeven_satisfies_rule_with_equality():
    for v in (0.0, 5.0, 9.3, 25.0):
        c = breakeven_max_machine_price(v)
        lhs = c / BREAKEVEN_AMORT_DAYS - BREAKEVEN_MSRP_OFFSET
        rhs = v - BREAKEVEN_PROFIT_FLOOR
        assert lhs == pytest.approx(rhs, abs=1e-9)


# ------------------------------------------------------------- trend fits

def test_price_fit_exact_line():
    pts = [(s, 20.0 + 1.5 * s) for s in (0.0, 10.0, 25.0, 40.0)]
    fit = fit_price_trend(pts)
    assert fit.price_slope == pytest.approx(1.5, rel=1e-12)
    assert fit.price_intercept == pytest.approx(20.0, rel=1e-12)
    assert fit.price_rms == pytest.approx(0.0, abs=1e-10)


def test_price_fit_degenerate_only_when_all_shares_equal():
    with pytest.raises(DegenerateFitError):
        fit_price_trend([(5.0, 1.0), (5.0, 2.0), (5.0, 3.0)])
    fit = fit_price_trend([(5.0, 1.0), (5.0, 2.0), (9.0, 3.0)])
    assert fit.price_slope is not None


def test_price_fit_recovers_noisy_line():
    rng = np.random.default_rng(4)
    slope, intercept = 0.8, 30.0
    x = rng.uniform(5.0, 60.0, 1000)
    y = intercept + slope * x
    y = y + rng.normal(0.0, 0.05 * np.abs(y))
    fit = fit_price_trend(np.column_stack([x, y]))
    se = fit.price_rms / (np.std(x) * np.sqrt(len(x)))
    assert abs(fit.price_slope - slope) < 3.0 * se


def test_ramp_fit_exact_parabola():
    pts = [(s, 0.02 * s * s) for s in (5.0, 10.0, 20.0, 40.0)]
    fit = fit_ramp_trend(pts)
    assert fit.ramp_coeff == pytest.approx(0.02, rel=1e-12)
    assert fit.ramp_rms == pytest.approx(0.0, abs=1e-12)


def test_ramp_fit_zero_share_points_are_inert():
    pts = [(0.0, 123.0), (10.0, 2.0), (20.0, 8.0)]
    fit = fit_ramp_trend(pts)
    pts_without = [(10.0, 2.0), (20.0, 8.0), (0.0, 0.0)]
    assert fit.ramp_coeff == pytest.approx(fit_ramp_trend(pts_without).ramp_coeff)


def test_ramp_fit_degenerate_when_all_zero():
    with pytest.raises(DegenerateFitError):
        fit_ramp_trend([(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)])


def test_ramp_fit_recovers_noisy_parabola():
    rng = np.random.default_rng(6)
    c = 0.004
    x = rng.uniform(5.0, 60.0, 500)
    y = c * x * x
    y = y + rng.normal(0.0, 0.05 * y)
    fit = fit_ramp_trend(np.column_stack([x, y]))
    assert abs(fit.ramp_coeff - c) / c < 0.05


def test_fits_are_least_squares_optima():
    rng = np.random.default_rng(7)
    x = rng.uniform(1.0, 50.0, 200)
    y = 12.0 + 0.6 * x + rng.normal(0.0, 1.0, 200)
    fit = fit_price_trend(np.column_stack([x, y]))

    def rms(slope, intercept):
        return float(np.sqrt(np.mean((y - intercept - slope * x) ** 2)))

    best = rms(fit.price_slope, fit.price_intercept)
    for ds in (-1e-3, 1e-3):
        assert rms(fit.price_slope * (1 + ds), fit.price_intercept) >= best
        assert rms(fit.price_slope, fit.price_intercept * (1 + ds)) >= best


def test_trend_csv_roundtrip(tmp_path):
    pts = [(5.0, 30.1), (15.0, 44.7), (30.0, 61.2)]
    path = tmp_path / "trend.csv"
    write_trend_csv(path, pts)
    assert read_trend_csv(path) == pts


# ------------------------------------------------------------- projections

def _flat_trend(**kw):
    base = dict(price_intercept=40.0, price_slope=0.0, price_rms=0.0,
                ramp_coeff=0.01, ramp_rms=0.0, share_per_year=0.0)
    base.update(kw)
    return TrendModel(**base)


def test_projection_constant_when_trends_flat():
    stats = ScheduleStats(share0_pct=10.0, ramp_saved_usd_day=2.0)
    series = project_net_profit(M1, _flat_trend(), 6, stats)
    assert len(set(series.net)) == 1
    assert series.first_loss_year is None or series.net[0] < 0


def test_projection_expensive_machine_loses_immediately():
    stats = ScheduleStats(share0_pct=10.0, ramp_saved_usd_day=0.0)
    v_daily = profit_vs_price(40.0, stats.profit)
    pricey = type(M1)(name="pricey", demand_w=M1.demand_w,
                      hashrate_ths=M1.hashrate_ths,
                      income_usd_day=M1.income_usd_day,
                      elec_cost_coeff=M1.elec_cost_coeff,
                      price_usd=3.0 * breakeven_max_machine_price(v_daily),
                      lifespan_years=2.0, k_const=M1.k_const)
    series = project_net_profit(pricey, _flat_trend(), 3, stats)
    assert series.first_loss_year == 1
    assert series.net[0] < 0.0


def test_projection_mining_declines_with_rising_prices():
    trend = _flat_trend(price_slope=1.2, share_per_year=4.0)
    stats = ScheduleStats(share0_pct=10.0, ramp_saved_usd_day=1.0)
    series = project_net_profit(M1, trend, 6, stats)
    assert all(b < a for a, b in zip(series.mining, series.mining[1:]))
    assert all(b > a for a, b in zip(series.ramping_saved,
                                     series.ramping_saved[1:]))


def test_projection_share_capped_at_hundred():
    trend = _flat_trend(share_per_year=50.0, price_slope=1.0)
    stats = ScheduleStats(share0_pct=20.0)
    series = project_net_profit(M1, trend, 5, stats)
    # shares clamp at 100 so late-year mining stops falling
    assert series.mining[-1] == series.mining[-2]


def test_projection_requires_price_fit():
    with pytest.raises(ValidationError):
        project_net_profit(M1, TrendModel(ramp_coeff=0.1), 3,
                           ScheduleStats(share0_pct=10.0))


# ------------------------------------------------------------- reports

def _constant_solution(fleet, xstar, level=100.0, n=96):
    load = SampledProfile(24.0 / n, np.full(n, level))
    cm = fleet.machine.income_usd_day / (fleet.machine.demand_kw * 24.0)
    sc = make_scenario(load, fleet, g=cm / (2.0 * xstar),
                       alpha_schedule=(1.0,))
    return solve(sc), sc


def test_daily_report_duty_factor_single_machine():
    fleet = FleetSpec(M1, 1)  # bound = machine demand, 5.36 kW
    sol, sc = _constant_solution(fleet, xstar=103.0)
    report = daily_report(sol, sc, M1)
    duty = 3.0 / fleet.pbar_kw
    assert report.gross_mining == pytest.approx(M1.income_usd_day * duty,
                                                rel=1e-9)
    assert report.net_profit == pytest.approx(
        report.gross_mining - report.operating_cost - report.msrp_per_day,
        abs=1e-12)


def test_daily_report_zero_draw_is_flagged():
    fleet = FleetSpec(M1, 1)
    sol, sc = _constant_solution(fleet, xstar=103.0)
    n = sol.x_traj.size
    idle = PmpSolution(
        grid=sol.grid,
        x_traj=sc.load.values[0] * np.ones(n),
        lambda_traj=np.zeros(n), u_traj=np.zeros(n),
        pm_traj=np.zeros(n), pm_clipped=np.zeros(n),
        converged=True, periodic_residual=0.0, stationarity_residual=0.0,
        newton_iters=0, alpha_used=1.0)
    report = daily_report(idle, sc, M1)
    assert report.gross_mining == 0.0
    assert "no-mining" in report.flags
    assert "no-ramping-savings" in report.flags


def test_daily_report_rejects_unconverged():
    fleet = FleetSpec(M1, 1)
    sol, sc = _constant_solution(fleet, xstar=103.0)
    bad = PmpSolution(
        grid=sol.grid, x_traj=sol.x_traj, lambda_traj=sol.lambda_traj,
        u_traj=sol.u_traj, pm_traj=sol.pm_traj, pm_clipped=sol.pm_clipped,
        converged=False, periodic_residual=1.0, stationarity_residual=0.0,
        newton_iters=50, alpha_used=1.0)
    with pytest.raises(ReportOnUnconvergedError):
        daily_report(bad, sc, M1)


def test_reference_fleet_bounds():
    assert FleetSpec(M1, 2853).pbar_kw == pytest.approx(15292.08, abs=1e-9)
    assert FleetSpec(M2, 2175).pbar_kw == pytest.approx(15840.525, abs=1e-9)
    assert FleetSpec(M3, 2924).pbar_kw == pytest.approx(9503.0, abs=1e-9)


def test_daily_report_on_plant_scenario():
    corpus = build_corpus(96)
    sc = corpus["plant_duck"]
    sol = solve(sc)
    report = daily_report(sol, sc, M1)
    assert report.msrp_per_day == pytest.approx(10.14, abs=0.01)
    assert report.gross_mining > 0.0
    assert report.ramping_saved_fleet > 0.0
    assert report.ramping_saved == pytest.approx(
        report.ramping_saved_fleet / sc.fleet.count, rel=1e-12)
    # marginal attribution prices mining energy at twice the average rate
    avg = daily_report(sol, sc, M1, attribution="average")
    assert report.operating_cost == pytest.approx(2.0 * avg.operating_cost,
                                                  rel=1e-12)


def test_report_invariant_enforced():
    with pytest.raises(ValidationError):
        EconReport(machine_name="x", msrp_per_day=1.0, operating_cost=1.0,
                   gross_mining=1.0, net_profit=5.0, ramping_saved=0.0,
                   ramping_saved_fleet=0.0, breakeven_machine_price=0.0)


def test_report_exports():
    report = EconReport(machine_name="m", msrp_per_day=10.0,
                        operating_cost=20.0, gross_mining=35.0,
                        net_profit=5.0, ramping_saved=1.5,
                        ramping_saved_fleet=150.0,
                        breakeven_machine_price=6497.0)
    doc = report_as_dict(report)
    assert doc["net_profit"] == 5.0
    table = format_report_table([report])
    lines = table.splitlines()
    assert "Machine" in lines[0]
    assert "35.00" in lines[2]
