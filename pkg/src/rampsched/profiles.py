"""Uniformly sampled periodic profiles (load, PV, price) and their CSV I/O.

A profile stores one period of a uniformly sampled series together with
the sample spacing and is treated as periodic everywhere: index
arithmetic wraps modulo the sample count.  Power values are kW, prices
are $/kWh, time is in hours.  All values are validated non-negative at
construction, which is the domain contract for every series the
scheduler consumes.

Resampling uses periodic linear interpolation followed by a centered
moving average rather than splines: the solver only needs continuous
data of bounded variation, and linear interpolation is cheap and never
overshoots.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import IO, Mapping

import numpy as np

from .errors import GridError, ShortSeriesError, SpacingError, ValidationError

DEFAULT_DT_HOURS = 0.25  # 96 samples per day, typical operator telemetry

# Synthetic duck-curve shape parameters.
EVENING_PEAK_HOUR = 19.0
EVENING_PEAK_SIGMA_H = 2.0
PV_SUNRISE_HOUR = 6.0
PV_DAYLIGHT_HOURS = 12.0

# Canonical CSV schema: header column -> profile role.
CSV_COLUMN_ROLES = {
    "timestamp": "timestamp",
    "load_kw": "load",
    "pv_kw": "pv",
    "price_usd_kwh": "price",
}
_ROLE_COLUMNS = {"load": "load_kw", "pv": "pv_kw", "price": "price_usd_kwh"}

_SPACING_JITTER = 0.01     # max fractional deviation of a gap from the median
_DIVISOR_TOL = 1e-6        # "new_dt divides period_T" tolerance, fractional
_CSV_EPOCH = datetime(2000, 1, 1)
_MIN_SAMPLES = 4


@dataclass(frozen=True, eq=False)
class SampledProfile:
    """One period of a uniformly sampled, periodic, non-negative series.

    Attributes:
        dt: hours per sample (> 0).
        values: read-only float array, length >= 4, all entries >= 0.
    """

    dt: float
    values: np.ndarray

    def __post_init__(self):
        dt = float(self.dt)
        if not math.isfinite(dt) or dt <= 0.0:
            raise ValidationError(f"sample spacing must be positive, got {dt}")
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValidationError("profile values must be a one-dimensional sequence")
        if vals.size < _MIN_SAMPLES:
            raise ValidationError(
                f"profile needs at least {_MIN_SAMPLES} samples, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("profile values must be finite")
        if np.any(vals < 0.0):
            raise ValidationError(
                f"profile values must be non-negative, min is {vals.min()}")
        vals.setflags(write=False)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "values", vals)

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def period_T(self) -> float:
        """Period in hours; exactly dt * count by construction."""
        return self.dt * self.values.size

    def times(self) -> np.ndarray:
        """Sample times in hours, 0, dt, ..., (count-1)*dt."""
        return np.arange(self.values.size) * self.dt

    def sample(self, i: int) -> float:
        """Value at sample index ``i`` with periodic wraparound."""
        return float(self.values[i % self.values.size])

    def value_at(self, t):
        """Periodic linear interpolation at time ``t`` hours (scalar or array)."""
        pos = np.asarray(t, dtype=float) / self.dt
        n = self.values.size
        i0 = np.floor(pos).astype(int)
        frac = pos - i0
        lo = self.values[i0 % n]
        hi = self.values[(i0 + 1) % n]
        out = lo * (1.0 - frac) + hi * frac
        if np.isscalar(t) or np.ndim(t) == 0:
            return float(out)
        return out

    def mean(self) -> float:
        return float(self.values.mean())

    def same_grid(self, other: "SampledProfile") -> bool:
        return (self.values.size == other.values.size
                and abs(self.dt - other.dt) <= 1e-12 * self.dt)

    def with_values(self, values) -> "SampledProfile":
        return SampledProfile(self.dt, values)


def _parse_timestamp(cell: str, line_no: int) -> float:
    """Parse an ISO-8601 or epoch-seconds timestamp cell into seconds."""
    text = cell.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ValidationError(
            f"line {line_no}: unparseable timestamp {text!r}") from exc
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(timezone.utc).replace(tzinfo=None)
    return (stamp - _CSV_EPOCH).total_seconds()


def _open_source(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    # binary stream
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def load_csv(source, column_map: Mapping[str, str] | None = None,
             scale: float = 1.0) -> dict[str, SampledProfile]:
    """Read uniformly spaced profiles from a CSV file, stream, or bytes.

    The file must have a header row, one timestamp column (ISO-8601 or
    epoch seconds) and at least one numeric column.  Timestamps must be
    strictly increasing with uniform spacing within 1% jitter of the
    median gap; the sample spacing is inferred from the median gap.

    Args:
        source: path, bytes, or open text/binary stream.
        column_map: CSV column name -> role ("timestamp", "load", "pv",
            "price", ...).  Defaults to the canonical header schema
            ``timestamp,load_kw[,pv_kw][,price_usd_kwh]``.
        scale: multiplier applied to every power column (every role
            except "price").  Operator telemetry is normalized to the
            plant under study by this explicit factor; no normalization
            is ever guessed.

    Returns:
        One profile per mapped numeric column, keyed by role.

    Raises:
        SpacingError: non-uniform or non-increasing timestamps.
        ShortSeriesError: fewer than 4 data rows.
        ValidationError: malformed cells or negative values.
    """
    if scale <= 0.0 or not math.isfinite(scale):
        raise ValidationError(f"scale must be finite and > 0, got {scale}")
    stream = _open_source(source)
    header_line = stream.readline()
    if not header_line:
        raise ValidationError("line 1: empty file, expected a header row")
    header = [h.strip() for h in header_line.rstrip("\r\n").split(",")]

    if column_map is None:
        column_map = {name: CSV_COLUMN_ROLES[name]
                      for name in header if name in CSV_COLUMN_ROLES}
    missing = [name for name in column_map if name not in header]
    if missing:
        raise ValidationError(f"line 1: mapped columns absent from header: {missing}")
    ts_names = [n for n, role in column_map.items() if role == "timestamp"]
    if len(ts_names) != 1:
        raise ValidationError(
            f"line 1: need exactly one timestamp column, found {len(ts_names)}")
    value_roles = [(header.index(n), role)
                   for n, role in column_map.items() if role != "timestamp"]
    if not value_roles:
        raise ValidationError("line 1: no numeric columns mapped")
    ts_idx = header.index(ts_names[0])

    times: list[float] = []
    columns: dict[str, list[float]] = {role: [] for _, role in value_roles}
    line_no = 1
    for raw in stream:
        line_no += 1
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValidationError(
                f"line {line_no}: expected {len(header)} fields, got {len(cells)}")
        times.append(_parse_timestamp(cells[ts_idx], line_no))
        for col, role in value_roles:
            cell = cells[col].strip()
            if not cell:
                raise ValidationError(f"line {line_no}: missing value in {role!r}")
            try:
                value = float(cell)
            except ValueError as exc:
                raise ValidationError(
                    f"line {line_no}: non-numeric value {cell!r} in {role!r}") from exc
            if not math.isfinite(value):
                raise ValidationError(f"line {line_no}: non-finite value in {role!r}")
            if value < 0.0:
                raise ValidationError(
                    f"line {line_no}: negative value {value} in {role!r}")
            columns[role].append(value)

    if len(times) < _MIN_SAMPLES:
        raise ShortSeriesError(
            f"need at least {_MIN_SAMPLES} data rows, got {len(times)}")

    ts = np.asarray(times)
    gaps = np.diff(ts)
    if np.any(gaps <= 0.0):
        bad = int(np.argmax(gaps <= 0.0))
        raise SpacingError(
            f"line {bad + 3}: timestamps not strictly increasing")
    median_gap = float(np.median(gaps))
    off = np.abs(gaps - median_gap) > _SPACING_JITTER * median_gap
    if np.any(off):
        bad = int(np.argmax(off))
        raise SpacingError(
            f"line {bad + 3}: gap {gaps[bad]:.6g}s deviates more than "
            f"{_SPACING_JITTER:.0%} from median {median_gap:.6g}s")

    dt_hours = median_gap / 3600.0
    return {role: SampledProfile(
        dt_hours, np.asarray(vals) * (1.0 if role == "price" else scale))
        for role, vals in columns.items()}


def write_csv(dest, load: SampledProfile | None = None,
              pv: SampledProfile | None = None,
              price: SampledProfile | None = None) -> None:
    """Write profiles to CSV in the canonical column schema.

    All given profiles must share one grid.  Timestamps are ISO-8601
    starting 2000-01-01 when the spacing is a whole number of seconds,
    epoch seconds otherwise.  Values are written with ``repr`` so a
    read-back reproduces them exactly.
    """
    present = [(role, p) for role, p in
               (("load", load), ("pv", pv), ("price", price)) if p is not None]
    if not present:
        raise ValidationError("write_csv needs at least one profile")
    base = present[0][1]
    for _, p in present[1:]:
        if not base.same_grid(p):
            raise GridError("profiles written together must share one grid")

    step_s = base.dt * 3600.0
    iso = abs(step_s - round(step_s)) < 1e-9
    lines = ["timestamp," + ",".join(_ROLE_COLUMNS[r] for r, _ in present)]
    for i in range(base.count):
        if iso:
            stamp = _CSV_EPOCH + timedelta(seconds=round(i * step_s))
            ts = stamp.isoformat()
        else:
            ts = repr(i * step_s)
        lines.append(ts + "," + ",".join(repr(float(p.values[i])) for _, p in present))
    text = "\n".join(lines) + "\n"

    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        dest.write(text)


def resample_periodic(p: SampledProfile, new_dt: float,
                      smooth_window: int = 1) -> SampledProfile:
    """Resample onto a new uniform grid, optionally smoothing.

    Periodic linear interpolation onto the new grid, then a centered
    moving average of width ``smooth_window`` with wraparound.  The mean
    of the input is restored exactly afterwards (a uniform shift), so
    resampling never drifts the energy content of a profile.

    Args:
        p: input profile.
        new_dt: target spacing in hours; must divide the period to
            within one part in 1e6.
        smooth_window: odd window width in samples, >= 1 (1 = no
            smoothing).

    Raises:
        GridError: ``new_dt`` is not a divisor of the period.
        ValidationError: even or non-positive ``smooth_window``.
    """
    if smooth_window < 1 or smooth_window % 2 == 0:
        raise ValidationError(
            f"smooth_window must be odd and >= 1, got {smooth_window}")
    if new_dt <= 0.0:
        raise GridError(f"new_dt must be positive, got {new_dt}")
    ratio = p.period_T / new_dt
    n_new = int(round(ratio))
    if n_new < 1 or abs(ratio - n_new) > _DIVISOR_TOL * max(1.0, ratio):
        raise GridError(
            f"new_dt={new_dt} does not divide period {p.period_T} "
            f"(period/new_dt = {ratio:.9g})")
    dt_used = p.period_T / n_new  # snap so period_T stays exact

    grid_old = np.arange(p.count + 1) * p.dt
    ext = np.concatenate([p.values, p.values[:1]])
    t_new = np.arange(n_new) * dt_used
    out = np.interp(t_new, grid_old, ext)

    if smooth_window > 1:
        half = smooth_window // 2
        idx = np.arange(-half, n_new + half) % n_new
        kernel = np.full(smooth_window, 1.0 / smooth_window)
        out = np.convolve(out[idx], kernel, mode="valid")

    target = p.values.mean()
    out += target - out.mean()
    if out.min() < 0.0:
        # The zero floor would eat mean mass; mean(max(out+s, 0)) is
        # continuous and nondecreasing in s, so bisect the extra shift
        # until the floored profile lands exactly on the original mean.
        lo, hi = -float(out.max()), 0.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if np.maximum(out + mid, 0.0).mean() >= target:
                hi = mid
            else:
                lo = mid
        out += hi
    np.maximum(out, 0.0, out=out)
    return SampledProfile(dt_used, out)


def synth_duck_curve(base_kw: float, evening_peak_kw: float, pv_peak_kw: float,
                     dt: float = DEFAULT_DT_HOURS,
                     ) -> tuple[SampledProfile, SampledProfile, SampledProfile]:
    """Generate one day of synthetic load, PV, and net-load profiles.

    Load is a base level plus a Gaussian evening bump (center 19:00,
    sigma 2 h, periodically wrapped); PV is a half-sine arc between
    06:00 and 18:00; net load is load minus PV floored at zero.

    Returns:
        (load, pv, net) profiles over 24 h.
    """
    for name, v in (("base_kw", base_kw), ("evening_peak_kw", evening_peak_kw),
                    ("pv_peak_kw", pv_peak_kw)):
        if v < 0.0 or not math.isfinite(v):
            raise ValidationError(f"{name} must be finite and >= 0, got {v}")
    ratio = 24.0 / dt
    n = int(round(ratio))
    if n < _MIN_SAMPLES or abs(ratio - n) > _DIVISOR_TOL * max(1.0, ratio):
        raise GridError(f"dt={dt} must divide 24 h into >= {_MIN_SAMPLES} samples")
    dt_used = 24.0 / n
    t = np.arange(n) * dt_used

    two_sigma_sq = 2.0 * EVENING_PEAK_SIGMA_H ** 2
    bump = np.zeros(n)
    for wrap in (-24.0, 0.0, 24.0):  # keep the bump C0-periodic at midnight
        bump += np.exp(-((t - EVENING_PEAK_HOUR + wrap) ** 2) / two_sigma_sq)
    load = base_kw + evening_peak_kw * bump

    arc = np.sin(np.pi * (t - PV_SUNRISE_HOUR) / PV_DAYLIGHT_HOURS)
    daylight = (t >= PV_SUNRISE_HOUR) & (t <= PV_SUNRISE_HOUR + PV_DAYLIGHT_HOURS)
    pv = pv_peak_kw * np.where(daylight, np.maximum(arc, 0.0), 0.0)

    net = np.maximum(load - pv, 0.0)
    return (SampledProfile(dt_used, load), SampledProfile(dt_used, pv),
            SampledProfile(dt_used, net))
