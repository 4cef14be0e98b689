"""Ingestion, validation, and synthesis of charging, price, and frequency data.

All operations are pure and all record types are immutable after construction,
so they can be shared freely across threads and worker processes.

CSV conventions (UTF-8, comma separated, ``.`` decimal separator):

* ``sessions.csv``   -- ``ev_id,start,end,rated_power_kw,session_energy_kwh``
* ``readings.csv``   -- ``ev_id,timestamp,power_kw``
* ``prices.csv``     -- ``hour,lambda_up_dkk_mw,lambda_down_dkk_mw``
* ``frequency.csv``  -- ``minute,f_min_hz,f_max_hz,carried_forward``

Timestamps are timezone-naive ISO-8601 at minute precision, pre-normalized to
a single zone per dataset (no DST arithmetic is performed here).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import (
    EmptyInput,
    MalformedRow,
    NonMonotoneTimestamps,
    OverlappingSessions,
)

MINUTES_PER_DAY = 1440

SESSIONS_HEADER = ["ev_id", "start", "end", "rated_power_kw", "session_energy_kwh"]
READINGS_HEADER = ["ev_id", "timestamp", "power_kw"]
PRICES_HEADER = ["hour", "lambda_up_dkk_mw", "lambda_down_dkk_mw"]
FREQUENCY_HEADER = ["minute", "f_min_hz", "f_max_hz", "carried_forward"]

# Power readings may exceed the rated power by a hair after float round trips.
_POWER_TOL = 1e-9


def _check_minute(ts: datetime, what: str, ev_id: str = "") -> datetime:
    if ts.second != 0 or ts.microsecond != 0:
        raise ValueError(f"{what} must have minute precision, got {ts!r}")
    return ts


@dataclass(frozen=True)
class ChargingSession:
    """One uninterrupted plug-in of one EV at its charge box.

    ``readings`` are (timestamp, instantaneous power kW) pairs recorded at an
    irregular cadence inside ``[start, end]``. ``session_energy`` is the total
    energy charged during the session in kWh; it feeds the state-of-charge
    headroom rule used by the flexibility derivation.
    """

    ev_id: str
    start: datetime
    end: datetime
    rated_power: float
    readings: tuple[tuple[datetime, float], ...]
    session_energy: float

    def __post_init__(self):
        _check_minute(self.start, "session start", self.ev_id)
        _check_minute(self.end, "session end", self.ev_id)
        if not self.start < self.end:
            raise NonMonotoneTimestamps(self.ev_id, "session end before start")
        if not (math.isfinite(self.rated_power) and self.rated_power > 0):
            raise ValueError(f"rated_power must be positive, got {self.rated_power}")
        if not (math.isfinite(self.session_energy) and self.session_energy >= 0):
            raise ValueError(f"session_energy must be >= 0, got {self.session_energy}")
        prev = None
        for ts, power in self.readings:
            _check_minute(ts, "reading timestamp", self.ev_id)
            if not self.start <= ts <= self.end:
                raise ValueError(
                    f"reading at {ts} outside session [{self.start}, {self.end}]"
                )
            if prev is not None and ts < prev:
                raise NonMonotoneTimestamps(self.ev_id, "readings out of order")
            if not -_POWER_TOL <= power <= self.rated_power + _POWER_TOL:
                raise ValueError(
                    f"reading power {power} kW outside [0, {self.rated_power}]"
                )
            prev = ts

    @property
    def duration_minutes(self) -> int:
        return int((self.end - self.start) / timedelta(minutes=1))


@dataclass(frozen=True)
class PriceRecord:
    """Hourly FCR-D reservation prices in DKK per MW per hour."""

    hour: datetime
    lambda_up: float
    lambda_down: float

    def __post_init__(self):
        _check_minute(self.hour, "price hour")
        if self.hour.minute != 0:
            raise ValueError(f"price timestamp must be on the hour, got {self.hour}")
        if self.lambda_up < 0 or self.lambda_down < 0:
            raise ValueError("negative reservation prices are rejected at ingestion")


@dataclass(frozen=True)
class FrequencyMinute:
    """Per-minute grid frequency envelope (min/max of the raw signal)."""

    minute: datetime
    f_min: float
    f_max: float
    carried_forward: bool = False

    def __post_init__(self):
        _check_minute(self.minute, "frequency minute")
        if not 45.0 <= self.f_min <= self.f_max <= 55.0:
            raise ValueError(
                f"frequency envelope out of range: [{self.f_min}, {self.f_max}]"
            )


@dataclass(frozen=True)
class FleetSynthesisConfig:
    """Parameters for the synthetic residential charging fleet.

    Session start times follow a two-component mixture peaked at
    ``evening_peak_hour`` and ``night_peak_hour`` (hours of day), mirroring the
    bimodal shape of residential home charging.
    """

    n_ev: int
    n_days: int
    rng_seed: int = 0
    start_day: date = date(2022, 3, 24)
    evening_peak_hour: float = 18.0
    night_peak_hour: float = 1.0
    evening_spread_hours: float = 1.6
    night_spread_hours: float = 1.1
    evening_session_prob: float = 0.55
    night_session_prob: float = 0.35
    mean_session_energy: float = 12.0
    rated_power_choices: tuple[float, ...] = (3.7, 7.4, 11.0)

    def __post_init__(self):
        if self.n_ev < 1 or self.n_days < 1:
            raise ValueError("n_ev and n_days must be >= 1")
        for peak in (self.evening_peak_hour, self.night_peak_hour):
            if not 0 <= peak < 24:
                raise ValueError(f"peak hour {peak} outside [0, 24)")
        if self.mean_session_energy <= 0:
            raise ValueError("mean_session_energy must be positive")
        if not self.rated_power_choices or min(self.rated_power_choices) <= 0:
            raise ValueError("rated_power_choices must be positive")


# ---------------------------------------------------------------------------
# Minute grids


def day_minute_grid(day: date, n_days: int = 1) -> np.ndarray:
    """Return the ``datetime64[m]`` grid covering ``n_days`` days from ``day``."""
    start = np.datetime64(datetime(day.year, day.month, day.day), "m")
    return start + np.arange(n_days * MINUTES_PER_DAY, dtype="timedelta64[m]")


def _to_epoch_minutes(ts: datetime) -> int:
    return int(np.datetime64(ts, "m").astype("int64"))


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_rows(path: Path, header: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise MalformedRow(1, f"missing header, expected {','.join(header)}")
        if got != header:
            raise MalformedRow(1, f"bad header {got!r}, expected {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRow(line_no, f"expected {len(header)} fields, got {len(row)}")
            yield line_no, row


def _parse_ts(text: str, line_no: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise MalformedRow(line_no, f"bad timestamp {text!r}")
    if ts.tzinfo is not None:
        raise MalformedRow(line_no, f"timestamps must be timezone-naive, got {text!r}")
    if ts.second != 0 or ts.microsecond != 0:
        raise MalformedRow(line_no, f"timestamp {text!r} is not minute precision")
    return ts


def _parse_float(text: str, line_no: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(line_no, f"bad {what} {text!r}")
    if not math.isfinite(value):
        raise MalformedRow(line_no, f"non-finite {what} {text!r}")
    return value


def ingest_sessions(
    sessions_csv: str | Path,
    readings_csv: str | Path | None = None,
) -> list[ChargingSession]:
    """Read and validate charging sessions plus their companion readings.

    Returns sessions sorted by ``(ev_id, start)``. Sessions of one EV may
    touch (one ends exactly when the next starts) but must not overlap.
    ``session_energy`` left blank in the CSV is computed as the integral of the
    interpolated baseline so the headroom rule applies to every session.
    """
    sessions_csv = Path(sessions_csv)
    if readings_csv is None:
        readings_csv = sessions_csv.parent / "readings.csv"

    raw_sessions = []
    for line_no, row in _read_rows(sessions_csv, SESSIONS_HEADER):
        ev_id = row[0]
        if not ev_id:
            raise MalformedRow(line_no, "empty ev_id")
        start = _parse_ts(row[1], line_no)
        end = _parse_ts(row[2], line_no)
        rated = _parse_float(row[3], line_no, "rated power")
        if rated <= 0:
            raise MalformedRow(line_no, f"rated power must be positive, got {rated}")
        energy = None
        if row[4] != "":
            energy = _parse_float(row[4], line_no, "session energy")
            if energy < 0:
                raise MalformedRow(line_no, f"session energy must be >= 0, got {energy}")
        raw_sessions.append((line_no, ev_id, start, end, rated, energy))

    readings_by_ev: dict[str, list[tuple[datetime, float]]] = {}
    if Path(readings_csv).exists():
        for line_no, row in _read_rows(Path(readings_csv), READINGS_HEADER):
            ts = _parse_ts(row[1], line_no)
            power = _parse_float(row[2], line_no, "power")
            if power < 0:
                raise MalformedRow(line_no, f"negative power reading {power}")
            readings_by_ev.setdefault(row[0], []).append((ts, power))

    sessions = []
    for line_no, ev_id, start, end, rated, energy in raw_sessions:
        if not start < end:
            raise NonMonotoneTimestamps(ev_id, "session end before start")
        mine = [
            r for r in readings_by_ev.get(ev_id, []) if start <= r[0] <= end
        ]
        mine.sort(key=lambda r: r[0])
        for _, power in mine:
            if power > rated + _POWER_TOL:
                raise MalformedRow(line_no, f"reading {power} kW exceeds rated {rated} kW")
        if energy is None:
            energy = _baseline_energy_kwh(start, end, rated, mine)
        sessions.append(
            ChargingSession(ev_id, start, end, rated, tuple(mine), energy)
        )

    sessions.sort(key=lambda s: (s.ev_id, s.start))
    for prev, cur in zip(sessions, sessions[1:]):
        if prev.ev_id == cur.ev_id and cur.start < prev.end:
            raise OverlappingSessions(cur.ev_id)
    return sessions


def write_sessions(
    sessions: list[ChargingSession],
    sessions_csv: str | Path,
    readings_csv: str | Path | None = None,
) -> None:
    """Write sessions in canonical form (sorted, shortest round-trip floats).

    ``write_sessions`` then ``ingest_sessions`` reproduces the session list
    exactly, and writing the same list twice produces identical bytes.
    """
    sessions_csv = Path(sessions_csv)
    if readings_csv is None:
        readings_csv = sessions_csv.parent / "readings.csv"
    ordered = sorted(sessions, key=lambda s: (s.ev_id, s.start))
    with open(sessions_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SESSIONS_HEADER)
        for s in ordered:
            writer.writerow(
                [s.ev_id, s.start.isoformat(timespec="minutes"),
                 s.end.isoformat(timespec="minutes"),
                 repr(s.rated_power), repr(s.session_energy)]
            )
    with open(readings_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(READINGS_HEADER)
        for s in ordered:
            for ts, power in s.readings:
                writer.writerow([s.ev_id, ts.isoformat(timespec="minutes"), repr(power)])


def ingest_prices(prices_csv: str | Path) -> list[PriceRecord]:
    """Read hourly reservation prices; negative prices are rejected."""
    records = []
    for line_no, row in _read_rows(Path(prices_csv), PRICES_HEADER):
        hour = _parse_ts(row[0], line_no)
        lam_up = _parse_float(row[1], line_no, "price")
        lam_down = _parse_float(row[2], line_no, "price")
        if lam_up < 0 or lam_down < 0:
            raise MalformedRow(line_no, "negative reservation price")
        if hour.minute != 0:
            raise MalformedRow(line_no, f"price timestamp {row[0]!r} not on the hour")
        records.append(PriceRecord(hour, lam_up, lam_down))
    records.sort(key=lambda r: r.hour)
    return records


def write_prices(records: list[PriceRecord], prices_csv: str | Path) -> None:
    with open(prices_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PRICES_HEADER)
        for r in sorted(records, key=lambda r: r.hour):
            writer.writerow(
                [r.hour.isoformat(timespec="minutes"), repr(r.lambda_up), repr(r.lambda_down)]
            )


def ingest_frequency(frequency_csv: str | Path) -> list[FrequencyMinute]:
    records = []
    for line_no, row in _read_rows(Path(frequency_csv), FREQUENCY_HEADER):
        minute = _parse_ts(row[0], line_no)
        f_min = _parse_float(row[1], line_no, "frequency")
        f_max = _parse_float(row[2], line_no, "frequency")
        if row[3] not in ("0", "1"):
            raise MalformedRow(line_no, f"carried_forward must be 0 or 1, got {row[3]!r}")
        try:
            records.append(FrequencyMinute(minute, f_min, f_max, row[3] == "1"))
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc))
    records.sort(key=lambda r: r.minute)
    return records


def write_frequency(records: list[FrequencyMinute], frequency_csv: str | Path) -> None:
    with open(frequency_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FREQUENCY_HEADER)
        for r in sorted(records, key=lambda r: r.minute):
            writer.writerow(
                [r.minute.isoformat(timespec="minutes"), repr(r.f_min), repr(r.f_max),
                 "1" if r.carried_forward else "0"]
            )


# ---------------------------------------------------------------------------
# Frequency downsampling


def downsample_frequency(
    raw_readings: list[tuple[datetime, float]],
) -> list[FrequencyMinute]:
    """Collapse a raw frequency signal to per-minute (min, max) envelopes.

    One record is emitted for every minute between the first and last reading.
    Minutes without readings carry the previous minute's envelope forward and
    are flagged ``carried_forward`` so reports can quantify data quality.
    """
    if not raw_readings:
        raise EmptyInput("no frequency readings")
    prev_ts = None
    for ts, _ in raw_readings:
        if prev_ts is not None and ts < prev_ts:
            raise ValueError("frequency readings must be time-sorted")
        prev_ts = ts

    by_minute: dict[datetime, tuple[float, float]] = {}
    for ts, hz in raw_readings:
        minute = ts.replace(second=0, microsecond=0)
        lo, hi = by_minute.get(minute, (hz, hz))
        by_minute[minute] = (min(lo, hz), max(hi, hz))

    first = min(by_minute)
    last = max(by_minute)
    records = []
    minute = first
    prev = by_minute[first]
    while minute <= last:
        if minute in by_minute:
            prev = by_minute[minute]
            records.append(FrequencyMinute(minute, prev[0], prev[1], False))
        else:
            records.append(FrequencyMinute(minute, prev[0], prev[1], True))
        minute += timedelta(minutes=1)
    return records


# ---------------------------------------------------------------------------
# Baseline interpolation


def interpolate_baseline(session: ChargingSession, minute_grid: np.ndarray) -> np.ndarray:
    """Piecewise-linear per-minute consumption baseline of one session, in kW.

    Values are clamped to ``[0, rated_power]`` and are zero at grid minutes
    outside ``[start, end)``. A single-reading session is constant at that
    reading; a session without readings has a zero baseline.
    """
    grid = np.asarray(minute_grid, dtype="datetime64[m]").astype("int64")
    out = np.zeros(grid.shape, dtype=float)
    inside = (grid >= _to_epoch_minutes(session.start)) & (
        grid < _to_epoch_minutes(session.end)
    )
    if not session.readings or not inside.any():
        return out
    times = np.array([_to_epoch_minutes(ts) for ts, _ in session.readings], dtype="int64")
    powers = np.array([p for _, p in session.readings], dtype=float)
    values = np.interp(grid[inside].astype(float), times.astype(float), powers)
    out[inside] = np.clip(values, 0.0, session.rated_power)
    return out


def _baseline_energy_kwh(
    start: datetime,
    end: datetime,
    rated: float,
    readings: list[tuple[datetime, float]],
) -> float:
    """Energy implied by the minute-resolution interpolated baseline, in kWh."""
    if not readings:
        return 0.0
    n_minutes = int((end - start) / timedelta(minutes=1))
    grid = np.datetime64(start, "m") + np.arange(n_minutes, dtype="timedelta64[m]")
    times = np.array([_to_epoch_minutes(ts) for ts, _ in readings], dtype=float)
    powers = np.array([p for _, p in readings], dtype=float)
    values = np.clip(np.interp(grid.astype("int64").astype(float), times, powers), 0.0, rated)
    return float(values.sum() / 60.0)


# ---------------------------------------------------------------------------
# Synthetic data


def synthesize_fleet(config: FleetSynthesisConfig) -> list[ChargingSession]:
    """Generate a deterministic synthetic fleet of residential charging sessions.

    Each EV gets an independent child RNG stream derived from ``rng_seed``, so
    the output is identical for identical configs regardless of scheduling.
    Sessions never overlap per EV and sessions that would run past the horizon
    are dropped.
    """
    children = np.random.SeedSequence(config.rng_seed).spawn(config.n_ev)
    horizon_end = datetime.combine(config.start_day, datetime.min.time()) + timedelta(
        days=config.n_days
    )
    sessions: list[ChargingSession] = []
    for idx, child in enumerate(children):
        rng = np.random.default_rng(child)
        ev_id = f"ev{idx:05d}"
        rated = float(rng.choice(config.rated_power_choices))
        candidates: list[ChargingSession] = []
        for day_offset in range(config.n_days):
            day_start = datetime.combine(config.start_day, datetime.min.time()) + timedelta(
                days=day_offset
            )
            peaks = []
            if rng.random() < config.evening_session_prob:
                peaks.append((config.evening_peak_hour, config.evening_spread_hours))
            if rng.random() < config.night_session_prob:
                peaks.append((config.night_peak_hour, config.night_spread_hours))
            for peak, spread in peaks:
                start_minute = rng.normal(peak * 60.0, spread * 60.0) % MINUTES_PER_DAY
                start = day_start + timedelta(minutes=int(round(start_minute)))
                energy = rng.gamma(2.2, config.mean_session_energy / 2.2)
                energy = float(np.clip(energy, 0.5, rated * 10.0))
                session = _synth_session(rng, ev_id, start, rated, energy)
                if session is not None and session.end <= horizon_end:
                    candidates.append(session)
        # Night draws wrap around midnight, so candidates are not generated in
        # chronological order; sort before the non-overlap pass.
        candidates.sort(key=lambda s: s.start)
        last_end: datetime | None = None
        for session in candidates:
            if last_end is not None and session.start < last_end:
                continue
            sessions.append(session)
            last_end = session.end
    sessions.sort(key=lambda s: (s.ev_id, s.start))
    return sessions


def _synth_session(
    rng: np.random.Generator,
    ev_id: str,
    start: datetime,
    rated: float,
    target_energy: float,
) -> ChargingSession | None:
    plateau = rated * rng.uniform(0.75, 0.97)
    duration = int(np.ceil(target_energy / plateau * 60.0)) + 8
    if duration < 12:
        duration = 12
    end = start + timedelta(minutes=duration)

    # Irregular measurement cadence around the ~2.8 minute mark.
    gaps = rng.uniform(2.0, 4.0, size=max(4, duration // 2))
    offsets = np.concatenate([[0.0], np.cumsum(gaps)])
    offsets = offsets[offsets <= duration]
    ramp_up = 4.0
    taper_start = duration - 6.0
    readings = []
    for off in offsets:
        if off < ramp_up:
            level = plateau * (off / ramp_up)
        elif off > taper_start:
            level = plateau * max(0.0, (duration - off) / (duration - taper_start))
        else:
            level = plateau
        level *= 1.0 + rng.normal(0.0, 0.02)
        ts = start + timedelta(minutes=int(round(off)))
        if ts > end:
            ts = end
        readings.append((ts, float(np.clip(level, 0.0, rated))))
    dedup: dict[datetime, float] = {}
    for ts, power in readings:
        dedup[ts] = power
    cleaned = sorted(dedup.items())
    if len(cleaned) < 2:
        return None
    energy = _baseline_energy_kwh(start, end, rated, cleaned)
    return ChargingSession(ev_id, start, end, rated, tuple(cleaned), energy)


def synthesize_prices(
    n_days: int, start_day: date, rng_seed: int
) -> list[PriceRecord]:
    """Deterministic positive hourly price series for self-contained runs.

    Lognormal around typical FCR-D levels with a mild diurnal shape; purely
    artifact plumbing, prices remain exogenous inputs.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=rng_seed, spawn_key=(101,)))
    records = []
    base = datetime.combine(start_day, datetime.min.time())
    for day in range(n_days):
        for hour in range(24):
            shape = 1.0 + 0.35 * math.sin(2 * math.pi * (hour - 6) / 24.0)
            lam_up = float(rng.lognormal(math.log(18.0 * shape), 0.45))
            lam_down = float(rng.lognormal(math.log(25.0 * shape), 0.5))
            records.append(
                PriceRecord(base + timedelta(days=day, hours=hour), lam_up, lam_down)
            )
    return records


def synthesize_frequency(
    n_days: int, start_day: date, rng_seed: int
) -> list[FrequencyMinute]:
    """Deterministic per-minute frequency envelopes for self-contained runs.

    The grid sits in the dead band almost all the time with rare short
    excursions into the disturbance bands, which keeps activation rare.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=rng_seed, spawn_key=(102,)))
    base = datetime.combine(start_day, datetime.min.time())
    n = n_days * MINUTES_PER_DAY
    center = 50.0 + rng.normal(0.0, 0.02, size=n)
    half_width = np.abs(rng.normal(0.01, 0.01, size=n))
    # Rare disturbances: ~0.2% of minutes see a large deviation.
    burst = rng.random(n) < 0.002
    direction = rng.random(n) < 0.5
    magnitude = rng.uniform(0.15, 0.55, size=n)
    records = []
    for i in range(n):
        lo = center[i] - half_width[i]
        hi = center[i] + half_width[i]
        if burst[i]:
            if direction[i]:
                lo = 50.0 - magnitude[i]
            else:
                hi = 50.0 + magnitude[i]
        lo = float(np.clip(lo, 49.0, 51.0))
        hi = float(np.clip(hi, lo, 51.0))
        records.append(
            FrequencyMinute(base + timedelta(minutes=i), lo, hi, False)
        )
    return records
