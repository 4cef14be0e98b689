"""Minute-resolution flexibility derivation and portfolio aggregation.

Flexibility of one EV at one minute is the triple (upward power, downward
power, 20-minute energy expressed as sustainable power). Upward flexibility is
a decrease of consumption, downward an increase; EVs cannot discharge to the
grid, so upward flexibility never exceeds the baseline. All functions here are
pure over immutable arrays; per-EV derivation and per-bundle aggregation are
independently parallelizable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DayMismatch, TooManyBundles
from .market_data import (
    MINUTES_PER_DAY,
    ChargingSession,
    day_minute_grid,
    interpolate_baseline,
)

#: Delivery window of the 20-minute energy requirement.
ENERGY_WINDOW_MINUTES = 20

#: kWh sustained over 20 minutes converts to kW by dividing by(1/3) hour.
KWH_TO_KW_OVER_WINDOW = 60.0 / ENERGY_WINDOW_MINUTES

#: Share of the session's charged energy assumed left on the battery.
HEADROOM_FRACTION = 0.10

_TOL = 1e-9


@dataclass(frozen=True)
class FlexTriple:
    """Available flexibility of a portfolio (or one EV) at one minute, in kW."""

    f_up: float
    f_down: float
    f_energy: float

    def __post_init__(self):
        for name, value in (("f_up", self.f_up), ("f_down", self.f_down),
                            ("f_energy", self.f_energy)):
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if self.f_energy > self.f_down + _TOL:
            raise ValueError(
                f"f_energy {self.f_energy} exceeds f_down {self.f_down}"
            )


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FlexSeries:
    """One day (1440 minutes) of flexibility triples."""

    day: date
    f_up: np.ndarray
    f_down: np.ndarray
    f_energy: np.ndarray

    def __post_init__(self):
        for name in ("f_up", "f_down", "f_energy"):
            arr = _readonly(getattr(self, name))
            object.__setattr__(self, name, arr)
            if arr.shape != (MINUTES_PER_DAY,):
                raise ValueError(f"{name} must have {MINUTES_PER_DAY} entries")
            if not np.all(np.isfinite(arr)) or (arr < 0).any():
                raise ValueError(f"{name} must be finite and >= 0")
        if (self.f_energy > self.f_down + _TOL).any():
            raise ValueError("f_energy must not exceed f_down")

    def triple(self, minute: int) -> FlexTriple:
        return FlexTriple(
            float(self.f_up[minute]),
            float(self.f_down[minute]),
            float(self.f_energy[minute]),
        )

    def hour_slice(self, hour: int) -> "FlexSlice":
        if not 0 <= hour < 24:
            raise ValueError(f"hour {hour} outside [0, 24)")
        sel = slice(60 * hour, 60 * hour + 60)
        return FlexSlice(hour, self.f_up[sel], self.f_down[sel], self.f_energy[sel])


@dataclass(frozen=True)
class FlexSlice:
    """The 60-minute slice of a flexibility series for one hour."""

    hour: int
    f_up: np.ndarray
    f_down: np.ndarray
    f_energy: np.ndarray

    def __post_init__(self):
        for name in ("f_up", "f_down", "f_energy"):
            arr = _readonly(getattr(self, name))
            object.__setattr__(self, name, arr)
            if arr.shape != (60,):
                raise ValueError(f"{name} must have 60 entries")


@dataclass(frozen=True)
class BundleConfig:
    """Partition of the fleet into equal-size bundles, bid independently."""

    bundle_count: int
    assignment: Mapping[str, int]

    def __post_init__(self):
        if self.bundle_count < 1:
            raise ValueError("bundle_count must be >= 1")
        indices = list(self.assignment.values())
        if any(not 0 <= b < self.bundle_count for b in indices):
            raise ValueError("bundle index out of range")
        sizes = np.bincount(indices, minlength=self.bundle_count)
        if sizes.max() - sizes.min() > 1:
            raise ValueError("bundle sizes must differ by at most 1")

    def members(self, bundle: int) -> list[str]:
        return sorted(ev for ev, b in self.assignment.items() if b == bundle)


# ---------------------------------------------------------------------------
# Per-EV derivation


def session_headroom(session: ChargingSession) -> float:
    """SoC headroom budget of a session in kWh: 10% of the charged energy.

    The budget is fixed at bid time; bidding uses the full budget every minute
    because activation is rare enough not to deplete it meaningfully.
    """
    return HEADROOM_FRACTION * session.session_energy


def flexibility_triples(
    baseline: np.ndarray,
    connected: np.ndarray,
    rated_power: float,
    headroom_kwh: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Derive (f_up, f_down, f_energy) arrays over an arbitrary horizon.

    Disconnected minutes contribute nothing. The energy component is the
    constant power sustainable for the next 20 minutes: the minimum of
    downward flexibility over the forward window, capped by three times the
    remaining headroom energy. If the EV disconnects anywhere inside the
    window (or the window runs past the horizon), a 20-minute delivery cannot
    be guaranteed and the component is zero.
    """
    baseline = np.asarray(baseline, dtype=float)
    connected = np.asarray(connected, dtype=bool)
    headroom_kwh = np.asarray(headroom_kwh, dtype=float)
    if baseline.shape != connected.shape or baseline.shape != headroom_kwh.shape:
        raise ValueError("baseline, connected, and headroom must share a shape")
    if (headroom_kwh < 0).any():
        raise ValueError("headroom must be >= 0")
    if ((baseline < -_TOL) | (baseline > rated_power + _TOL)).any():
        raise ValueError("baseline must lie within [0, rated_power]")
    baseline = np.clip(baseline, 0.0, rated_power)

    f_up = np.where(connected, baseline, 0.0)
    f_down = np.where(connected, rated_power - baseline, 0.0)

    w = ENERGY_WINDOW_MINUTES
    down_pad = np.concatenate([f_down, np.zeros(w - 1)])
    conn_pad = np.concatenate([connected, np.zeros(w - 1, dtype=bool)])
    window_min = np.lib.stride_tricks.sliding_window_view(down_pad, w).min(axis=1)
    window_connected = np.lib.stride_tricks.sliding_window_view(conn_pad, w).all(axis=1)
    f_energy = np.where(
        window_connected,
        np.minimum(window_min, KWH_TO_KW_OVER_WINDOW * headroom_kwh),
        0.0,
    )
    return f_up, f_down, f_energy


def ev_flexibility(
    baseline: np.ndarray,
    rated_power: float,
    headroom_energy: np.ndarray,
    connected: np.ndarray,
    day: date,
) -> FlexSeries:
    """One day of flexibility for one EV (wrapper over `flexibility_triples`)."""
    f_up, f_down, f_energy = flexibility_triples(
        baseline, connected, rated_power, headroom_energy
    )
    return FlexSeries(day, f_up, f_down, f_energy)


def ev_horizon_flexibility(
    sessions: Sequence[ChargingSession],
    epoch_day: date,
    n_days: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flexibility arrays over a multi-day horizon for the sessions of one EV.

    Sessions must belong to one EV and must not overlap. Minutes are indexed
    from midnight of ``epoch_day``; sessions outside the horizon are clipped
    out entirely.
    """
    n_minutes = n_days * MINUTES_PER_DAY
    grid = day_minute_grid(epoch_day, n_days)
    grid_start = datetime.combine(epoch_day, datetime.min.time())
    baseline = np.zeros(n_minutes)
    connected = np.zeros(n_minutes, dtype=bool)
    headroom = np.zeros(n_minutes)
    rated = max((s.rated_power for s in sessions), default=1.0)
    for session in sessions:
        lo = int((session.start - grid_start) / timedelta(minutes=1))
        hi = int((session.end - grid_start) / timedelta(minutes=1))
        lo_c = max(lo, 0)
        hi_c = min(hi, n_minutes)
        if lo_c >= hi_c:
            continue
        baseline[lo_c:hi_c] += interpolate_baseline(session, grid[lo_c:hi_c])
        connected[lo_c:hi_c] = True
        headroom[lo_c:hi_c] = session_headroom(session)
    baseline = np.clip(baseline, 0.0, rated)
    return flexibility_triples(baseline, connected, rated, headroom)


# ---------------------------------------------------------------------------
# Aggregation and bundling


def aggregate(series: Sequence[FlexSeries]) -> FlexSeries:
    """Element-wise sum of flexibility series that share a day."""
    if not series:
        raise ValueError("cannot aggregate an empty list of series")
    day = series[0].day
    for s in series[1:]:
        if s.day != day:
            raise DayMismatch(f"cannot aggregate day {s.day} with {day}")
    f_up = np.sum([s.f_up for s in series], axis=0)
    f_down = np.sum([s.f_down for s in series], axis=0)
    f_energy = np.sum([s.f_energy for s in series], axis=0)
    return FlexSeries(day, f_up, f_down, f_energy)


def partition_bundles(
    ev_ids: Sequence[str], bundle_count: int, rng_seed: int
) -> BundleConfig:
    """Random equal-size partition of the fleet, deterministic given the seed."""
    n = len(ev_ids)
    if bundle_count > n:
        raise TooManyBundles(f"{bundle_count} bundles for {n} EVs")
    if bundle_count < 1:
        raise ValueError("bundle_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(n)
    base, extra = divmod(n, bundle_count)
    assignment: dict[str, int] = {}
    pos = 0
    for b in range(bundle_count):
        size = base + (1 if b < extra else 0)
        for i in order[pos : pos + size]:
            assignment[ev_ids[i]] = b
        pos += size
    return BundleConfig(bundle_count, assignment)


def write_flexibility_csv(
    path: str | Path,
    bundle_series: Mapping[int, Iterable[FlexSeries]],
) -> None:
    """Optional export: one row per (day, minute, bundle)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "minute", "bundle", "f_up_kw", "f_down_kw", "f_energy_kw"])
        for bundle in sorted(bundle_series):
            for series in bundle_series[bundle]:
                for m in range(MINUTES_PER_DAY):
                    writer.writerow(
                        [series.day.isoformat(), m, bundle,
                         repr(float(series.f_up[m])), repr(float(series.f_down[m])),
                         repr(float(series.f_energy[m]))]
                    )
