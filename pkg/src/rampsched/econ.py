"""Monetary analysis: profit models, amortization, break-even, projections.

Prices fed to the linear profit model keep whatever unit the ingested
price data carries; the slope coefficient is unit-coupled to that choice.
Reports state their basis explicitly: all figures are per machine and per
day unless a field name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .costmodel import MachineSpec
from .errors import (DegenerateFitError, ReportOnUnconvergedError,
                     ValidationError)
from .pmp import PmpSolution, Scenario, evaluate

DAYS_PER_YEAR = 365.0

# Break-even rule calibration: a machine pays for itself while the daily
# mining profit clears the profit floor by at least the amortization gap,
# i.e. C / 730 - msrp_offset <= V - profit_floor.
BREAKEVEN_PROFIT_FLOOR = 5.0
BREAKEVEN_MSRP_OFFSET = 8.9
BREAKEVEN_AMORT_DAYS = 2.0 * DAYS_PER_YEAR


@dataclass(frozen=True)
class ProfitModel:
    """Daily mining profit, linear in the electricity price."""

    a: float = 14.0   # $/day at zero electricity price
    b: float = 0.1    # $/day per price unit

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValidationError("profit model coefficients must be >= 0")


@dataclass(frozen=True)
class TrendModel:
    """Fitted dependence of market quantities on renewable share (%).

    The price part is an ordinary least-squares line; the ramp part is a
    single through-origin quadratic coefficient.  Each fit carries its
    residual RMS.  share_per_year is the assumed growth of the share.
    """

    price_intercept: float | None = None
    price_slope: float | None = None
    price_rms: float | None = None
    ramp_coeff: float | None = None
    ramp_rms: float | None = None
    share_per_year: float = 0.0

    def merged_with(self, other: "TrendModel") -> "TrendModel":
        """Combine two partial models, preferring this model's set fields."""
        return TrendModel(
            price_intercept=(self.price_intercept if self.price_intercept
                             is not None else other.price_intercept),
            price_slope=(self.price_slope if self.price_slope is not None
                         else other.price_slope),
            price_rms=self.price_rms if self.price_rms is not None else other.price_rms,
            ramp_coeff=self.ramp_coeff if self.ramp_coeff is not None else other.ramp_coeff,
            ramp_rms=self.ramp_rms if self.ramp_rms is not None else other.ramp_rms,
            share_per_year=self.share_per_year or other.share_per_year,
        )


@dataclass(frozen=True)
class EconReport:
    """Daily per-machine economics of one converged schedule."""

    machine_name: str
    msrp_per_day: float
    operating_cost: float
    gross_mining: float
    net_profit: float
    ramping_saved: float          # per machine, $/day
    ramping_saved_fleet: float    # whole fleet, $/day
    breakeven_machine_price: float
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        fields = (self.msrp_per_day, self.operating_cost, self.gross_mining,
                  self.net_profit, self.ramping_saved, self.ramping_saved_fleet,
                  self.breakeven_machine_price)
        if not all(math.isfinite(v) for v in fields):
            raise ValidationError("report fields must be finite")
        composed = self.gross_mining - self.operating_cost - self.msrp_per_day
        if abs(self.net_profit - composed) > 1e-9 * (1.0 + abs(composed)):
            raise ValidationError("net_profit must equal gross - operating - msrp")


@dataclass(frozen=True)
class ProjectionSeries:
    """Year-by-year projection of daily net profit."""

    years: tuple[int, ...]
    net: tuple[float, ...]
    mining: tuple[float, ...]
    ramping_saved: tuple[float, ...]
    first_loss_year: int | None


def profit_vs_price(price: float, pm: ProfitModel) -> float:
    """Daily profit a - b*price; may be negative, callers decide flooring."""
    return pm.a - pm.b * price


def amortized_daily_msrp(price_usd: float, lifespan_years: float) -> float:
    """Purchase price spread linearly over the machine lifespan, $/day."""
    if lifespan_years <= 0:
        raise ValidationError("lifespan_years must be > 0")
    return price_usd / (DAYS_PER_YEAR * lifespan_years)


def breakeven_max_machine_price(v_daily: float,
                                profit_floor: float = BREAKEVEN_PROFIT_FLOOR,
                                msrp_offset: float = BREAKEVEN_MSRP_OFFSET) -> float:
    """Highest machine price for which daily profit V still breaks even."""
    return BREAKEVEN_AMORT_DAYS * (v_daily - profit_floor + msrp_offset)


def fit_price_trend(points) -> TrendModel:
    """OLS line through (share %, price) points.

    Raises DegenerateFitError when fewer than two distinct shares exist.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValidationError("need at least two (share, price) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.unique(x).size < 2:
        raise DegenerateFitError("all shares identical; line fit is degenerate")
    xm, ym = x.mean(), y.mean()
    slope = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    return TrendModel(price_intercept=intercept, price_slope=slope,
                      price_rms=float(np.sqrt(np.mean(resid ** 2))))


def fit_ramp_trend(points) -> TrendModel:
    """Least-squares through-origin quadratic ramp$ = c * share^2."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValidationError("need at least three (share, ramp cost) points")
    x, y = pts[:, 0], pts[:, 1]
    x2 = x * x
    denom = float((x2 * x2).sum())
    if denom == 0.0:
        raise DegenerateFitError("all shares are zero; quadratic fit is degenerate")
    coeff = float((x2 * y).sum() / denom)
    resid = y - coeff * x2
    return TrendModel(ramp_coeff=coeff,
                      ramp_rms=float(np.sqrt(np.mean(resid ** 2))))


@dataclass(frozen=True)
class ScheduleStats:
    """Today's operating point feeding a multi-year projection."""

    share0_pct: float
    ramp_saved_usd_day: float = 0.0
    profit: ProfitModel = ProfitModel()

    def __post_init__(self):
        if not 0.0 <= self.share0_pct <= 100.0:
            raise ValidationError("share0_pct must be within [0, 100]")


def project_net_profit(machine: MachineSpec, trend: TrendModel, years: int,
                       schedule_stats: ScheduleStats) -> ProjectionSeries:
    """Project daily net profit per machine over a horizon of years.

    Per year y (1-based): the renewable share grows linearly and is
    capped at 100%; the electricity price follows the fitted line; the
    mining component follows the linear profit model; ramping savings
    scale with the quadratic ramp trend relative to the starting share;
    the amortized purchase price is subtracted.  No re-solve per year:
    the projection extrapolates trends only.
    """
    if years < 1:
        raise ValidationError("years must be >= 1")
    if trend.price_intercept is None or trend.price_slope is None:
        raise ValidationError("projection needs a fitted price trend")
    stats = schedule_stats
    msrp = amortized_daily_msrp(machine.price_usd, machine.lifespan_years)

    year_list, nets, minings, savings = [], [], [], []
    first_loss = None
    for y in range(1, years + 1):
        share = min(stats.share0_pct + y * trend.share_per_year, 100.0)
        price = trend.price_intercept + trend.price_slope * share
        mining = profit_vs_price(price, stats.profit)
        if trend.ramp_coeff is not None and stats.share0_pct > 0.0:
            saved = stats.ramp_saved_usd_day * (share / stats.share0_pct) ** 2
        else:
            saved = stats.ramp_saved_usd_day
        net = mining + saved - msrp
        year_list.append(y)
        nets.append(net)
        minings.append(mining)
        savings.append(saved)
        if first_loss is None and net < 0.0:
            first_loss = y
    return ProjectionSeries(years=tuple(year_list), net=tuple(nets),
                            mining=tuple(minings), ramping_saved=tuple(savings),
                            first_loss_year=first_loss)


def daily_report(sol: PmpSolution, sc: Scenario, machine: MachineSpec,
                 attribution: str = "marginal") -> EconReport:
    """Assemble the daily per-machine economics of a converged schedule.

    Gross mining revenue is the revenue rate integrated over one
    machine's share of the clipped miner draw (the physical machine
    cannot exceed its rating, so economics always uses the clipped
    trajectory).  Operating cost attributes generation cost to mining
    energy at the scheduled operating point: marginal attribution prices
    it at 2*g*x, average attribution at g*x.
    """
    if not sol.converged:
        raise ReportOnUnconvergedError(
            "refusing to report economics for a non-converged solution")
    if attribution not in ("marginal", "average"):
        raise ValidationError(f"unknown attribution {attribution!r}")

    n_machines = sc.fleet.count
    dt = sc.load.dt
    t = np.arange(sc.load.count + 1) * dt
    cm_t = np.asarray(sc.cost.cm_at(t), dtype=float)
    pm_c = sol.pm_clipped

    def trapz(f):
        return float(dt * (f.sum() - 0.5 * (f[0] + f[-1])))

    gross = trapz(cm_t * pm_c) / n_machines
    price_factor = 2.0 if attribution == "marginal" else 1.0
    operating = trapz(price_factor * sc.cost.g * sol.x_traj * pm_c) / n_machines

    breakdown = evaluate(sol, sc)
    saved_fleet = breakdown.baseline.ramping_usd - breakdown.ramping_usd
    msrp = amortized_daily_msrp(machine.price_usd, machine.lifespan_years)
    net = gross - operating - msrp

    flags = []
    if np.all(pm_c == 0.0):
        flags.append("no-mining")
    if saved_fleet <= 0.0:
        flags.append("no-ramping-savings")

    return EconReport(
        machine_name=machine.name,
        msrp_per_day=msrp,
        operating_cost=operating,
        gross_mining=gross,
        net_profit=net,
        ramping_saved=saved_fleet / n_machines,
        ramping_saved_fleet=saved_fleet,
        breakeven_machine_price=breakeven_max_machine_price(gross - operating),
        flags=tuple(flags),
    )


def report_as_dict(report: EconReport) -> dict:
    return {
        "machine_name": report.machine_name,
        "msrp_per_day": report.msrp_per_day,
        "operating_cost": report.operating_cost,
        "gross_mining": report.gross_mining,
        "net_profit": report.net_profit,
        "ramping_saved": report.ramping_saved,
        "ramping_saved_fleet": report.ramping_saved_fleet,
        "breakeven_machine_price": report.breakeven_machine_price,
        "flags": list(report.flags),
    }


_TABLE_COLUMNS = (
    ("Machine", "machine_name", "{}"),
    ("MSRP [$/day]", "msrp_per_day", "{:.2f}"),
    ("Operating [$/day]", "operating_cost", "{:.2f}"),
    ("Gross [$/day]", "gross_mining", "{:.2f}"),
    ("Net [$/day]", "net_profit", "{:.2f}"),
    ("Ramp saved [$/day]", "ramping_saved", "{:.2f}"),
)


def format_report_table(reports) -> str:
    """Aligned-column text table, one row per machine report."""
    rows = [[fmt.format(getattr(r, attr)) for _, attr, fmt in _TABLE_COLUMNS]
            for r in reports]
    headers = [h for h, _, _ in _TABLE_COLUMNS]
    widths = [max(len(h), *(len(row[j]) for row in rows)) if rows else len(h)
              for j, h in enumerate(headers)]
    def line(cells):
        return "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(row) for row in rows)
    return "\n".join(out) + "\n"


def read_trend_csv(source) -> list[tuple[float, float]]:
    """Read `share_pct,value` rows (header required)."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split(",")[0].strip() != "share_pct":
        raise ValidationError("trend CSV must start with a 'share_pct,value' header")
    points = []
    for no, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != 2:
            raise ValidationError(f"line {no}: expected 2 fields")
        try:
            points.append((float(cells[0]), float(cells[1])))
        except ValueError as exc:
            raise ValidationError(f"line {no}: non-numeric cell") from exc
    return points


def write_trend_csv(dest, points) -> None:
    text = "share_pct,value\n" + "".join(
        f"{repr(float(s))},{repr(float(v))}\n" for s, v in points)
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)
