"""Quadratic cost primitives, the soft box penalty, and machine conversions.

Canonical units everywhere: kW, hours, $.  All unit conversions happen at
type construction (machine demand is given in watts and stored alongside
its kW view).  Generation cost is g*x^2 and ramping cost is d*u^2, both
strictly convex for g, d > 0; the miner bound 0 <= p_m <= Pbar is relaxed
by the penalty
    xi(p_m) = alpha * (min(p_m, 0)^2 + max(p_m - Pbar, 0)^2),
which is zero exactly on [0, Pbar] and C1 everywhere (the derivative at
both kinks is 0 from each side).

Note on the machine "electricity cost" coefficient: vendor tables quote
it with ambiguous units, so it is treated here as a unitless coefficient
feeding the g formula g = k * cost / demand_kw^2; callers that disagree
with that reading can bypass it via an explicit g override.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ConfigError, ValidationError
from .profiles import SampledProfile

HOURS_PER_DAY = 24.0


@dataclass(frozen=True)
class MachineSpec:
    """Per-unit miner parameters as quoted by vendors."""

    name: str
    demand_w: float
    hashrate_ths: float
    income_usd_day: float
    elec_cost_coeff: float
    price_usd: float
    lifespan_years: float
    k_const: float

    def __post_init__(self):
        if self.demand_w <= 0:
            raise ValidationError(f"demand_w must be > 0, got {self.demand_w}")
        if self.income_usd_day < 0:
            raise ValidationError("income_usd_day must be >= 0")
        if self.price_usd < 0:
            raise ValidationError("price_usd must be >= 0")
        if self.lifespan_years <= 0:
            raise ValidationError("lifespan_years must be > 0")
        if self.k_const <= 0:
            raise ValidationError("k_const must be > 0")

    @property
    def demand_kw(self) -> float:
        return self.demand_w / 1000.0


@dataclass(frozen=True)
class FleetSpec:
    """A count of identical machines; the aggregate bound is count * demand."""

    machine: MachineSpec
    count: int

    def __post_init__(self):
        if self.count < 1 or self.count != int(self.count):
            raise ValidationError(f"count must be a positive integer, got {self.count}")

    @property
    def pbar_kw(self) -> float:
        return self.count * self.machine.demand_kw


@dataclass(frozen=True)
class CostModel:
    """Coefficients of the dispatch objective.

    g: $/(kW^2 h) generation coefficient, > 0.
    d: $/((kW/h)^2 h) ramping coefficient, > 0 (default 1, the standard
       unit-coefficient quadratic ramp cost).
    alpha: penalty weight, >= 0.
    pbar_kw: aggregate miner bound, > 0.
    cm: miner revenue rate in $/kWh, a constant or a profile.
    """

    g: float
    pbar_kw: float
    cm: Union[float, SampledProfile]
    d: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.g <= 0:
            raise ValidationError(f"g must be > 0, got {self.g}")
        if self.d <= 0:
            raise ValidationError(f"d must be > 0, got {self.d}")
        if self.alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if self.pbar_kw <= 0:
            raise ValidationError(f"pbar_kw must be > 0, got {self.pbar_kw}")
        if isinstance(self.cm, SampledProfile):
            return  # profile construction already guarantees non-negativity
        if self.cm < 0:
            raise ValidationError(f"cm must be >= 0, got {self.cm}")

    @property
    def cm_is_constant(self) -> bool:
        return not isinstance(self.cm, SampledProfile)

    def cm_at(self, t):
        """Revenue rate at time t hours (scalar or array)."""
        if isinstance(self.cm, SampledProfile):
            return self.cm.value_at(t)
        if np.ndim(t) == 0:
            return float(self.cm)
        return np.full(np.shape(t), float(self.cm))


def gen_cost(x, m: CostModel):
    """Generation cost g*x^2 in $/h."""
    return m.g * np.square(x)


def gen_cost_prime(x, m: CostModel):
    """Marginal generation cost 2*g*x in $/kWh."""
    return 2.0 * m.g * np.asarray(x, dtype=float) if np.ndim(x) else 2.0 * m.g * x


def ramp_cost(u, m: CostModel):
    """Ramping cost d*u^2 in $/h."""
    return m.d * np.square(u)


def ramp_cost_prime(u, m: CostModel):
    return 2.0 * m.d * np.asarray(u, dtype=float) if np.ndim(u) else 2.0 * m.d * u


def penalty_xi(pm, m: CostModel):
    """Soft box penalty: 0 on [0, Pbar], quadratic outside."""
    below = np.minimum(pm, 0.0)
    above = np.maximum(np.subtract(pm, m.pbar_kw), 0.0)
    out = m.alpha * (below * below + above * above)
    return out if isinstance(out, np.ndarray) else float(out)


def penalty_xi_prime(pm, m: CostModel):
    """Derivative of the penalty; 0 on the closed band including both kinks."""
    below = np.minimum(pm, 0.0)
    above = np.maximum(np.subtract(pm, m.pbar_kw), 0.0)
    out = 2.0 * m.alpha * (below + above)
    return out if isinstance(out, np.ndarray) else float(out)


def instantaneous_cost(pg, dpg_dt, pm, t, m: CostModel):
    """Running cost: generation + ramping - mining revenue + penalty, $/h."""
    return (gen_cost(pg, m) + ramp_cost(dpg_dt, m)
            - m.cm_at(t) * np.asarray(pm, dtype=float) + penalty_xi(pm, m))


def control_from_costate(lam, m: CostModel):
    """Ramp rate minimizing the pointwise cost for a given costate.

    The minimizer of d*u^2 + lam*u over all u; for the quadratic ramp
    cost the inverse of its derivative is available in closed form.
    """
    return -np.asarray(lam, dtype=float) / (2.0 * m.d) if np.ndim(lam) \
        else -lam / (2.0 * m.d)


def compute_g(machine: MachineSpec) -> float:
    """Generation coefficient from machine data: k * cost / demand_kw^2."""
    return machine.k_const * machine.elec_cost_coeff / machine.demand_kw ** 2


def compute_cm(machine: MachineSpec) -> float:
    """Revenue per kWh: daily income over daily energy (demand_kw * 24)."""
    return machine.income_usd_day / (machine.demand_kw * HOURS_PER_DAY)


# Vendor machine presets; counts are the reference fleet sizes used in the
# bundled plant-scale scenario.
MACHINE_PRESETS = {
    "1": MachineSpec(name="antminer-s21", demand_w=5360.0, hashrate_ths=335.0,
                     income_usd_day=15.0, elec_cost_coeff=0.1, price_usd=7400.0,
                     lifespan_years=2.0, k_const=0.0014),
    "2": MachineSpec(name="whatsminer-m63", demand_w=7283.0, hashrate_ths=334.0,
                     income_usd_day=14.49, elec_cost_coeff=0.1, price_usd=5200.0,
                     lifespan_years=2.0, k_const=0.0012),
    "3": MachineSpec(name="antminer-s19", demand_w=3250.0, hashrate_ths=110.0,
                     income_usd_day=5.05, elec_cost_coeff=0.06, price_usd=6500.0,
                     lifespan_years=2.0, k_const=0.0014),
}
DEFAULT_FLEET_COUNTS = {"1": 2853, "2": 2175, "3": 2924}

_CONFIG_KEYS = {
    "name", "demand_w", "hashrate_ths", "income_usd_day", "elec_cost",
    "price_usd", "lifespan_years", "k", "count", "g_override", "d", "alpha",
}
_REQUIRED_MACHINE_KEYS = ("demand_w", "income_usd_day", "elec_cost", "k")


def load_config(source) -> dict:
    """Parse a flat ``key = value`` config file (UTF-8, '#' comments)."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = source.read()
    cfg: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key == "name":
            cfg[key] = value
        elif key == "count":
            try:
                cfg[key] = int(value)
            except ValueError as exc:
                raise ConfigError(f"line {line_no}: count must be an integer") from exc
        else:
            try:
                cfg[key] = float(value)
            except ValueError as exc:
                raise ConfigError(
                    f"line {line_no}: value {value!r} for {key!r} is not numeric"
                ) from exc
    return cfg


def machine_from_config(cfg: dict) -> MachineSpec:
    missing = [k for k in _REQUIRED_MACHINE_KEYS if k not in cfg]
    if missing:
        raise ConfigError(f"machine config missing keys: {missing}")
    return MachineSpec(
        name=str(cfg.get("name", "custom")),
        demand_w=cfg["demand_w"],
        hashrate_ths=cfg.get("hashrate_ths", 0.0),
        income_usd_day=cfg["income_usd_day"],
        elec_cost_coeff=cfg["elec_cost"],
        price_usd=cfg.get("price_usd", 0.0),
        lifespan_years=cfg.get("lifespan_years", 2.0),
        k_const=cfg["k"],
    )


def fleet_from_config(cfg: dict, count_override: int | None = None) -> FleetSpec:
    machine = machine_from_config(cfg)
    count = count_override if count_override is not None else cfg.get("count", 1)
    return FleetSpec(machine=machine, count=int(count))


def costmodel_from_config(cfg: dict, fleet: FleetSpec,
                          cm: Union[float, SampledProfile, None] = None,
                          alpha: float | None = None) -> CostModel:
    """Assemble a cost model from config values plus a fleet bound."""
    machine = fleet.machine
    g = cfg.get("g_override")
    if g is None:
        g = compute_g(machine)
    if cm is None:
        cm = compute_cm(machine)
    if alpha is None:
        alpha = cfg.get("alpha", 1.0)
    return CostModel(g=g, d=cfg.get("d", 1.0), alpha=alpha,
                     pbar_kw=fleet.pbar_kw, cm=cm)
