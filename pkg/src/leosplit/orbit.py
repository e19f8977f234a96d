"""Contact-window model for a single ground station.

Every pass is treated as a direct overhead pass of a circular orbit, which
gives the longest possible window for a given elevation mask.
"""

from __future__ import annotations

import bisect
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

EARTH_RADIUS_KM = 6371.0
MU_EARTH_KM3_S2 = 398600.4418
LEO_MIN_KM, LEO_MAX_KM = 160.0, 2000.0

log = logging.getLogger(__name__)


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class OrbitConfig:
    altitude_km: float = 547.0
    min_elevation_deg: float = 25.0
    phase_offset_s: float = 0.0

    def __post_init__(self):
        if self.altitude_km <= 0:
            raise ValueError("altitude must be positive")
        if not 0.0 <= self.min_elevation_deg < 90.0:
            raise ValueError("elevation mask must lie in [0, 90)")
        if not LEO_MIN_KM <= self.altitude_km <= LEO_MAX_KM:
            log.warning("altitude %.1f km is outside the LEO band", self.altitude_km)


@dataclass(frozen=True)
class ContactWindow:
    start_s: float
    end_s: float
    downlink_bps: float
    uplink_bps: float

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError("window must have positive length")
        if self.downlink_bps <= 0 or self.uplink_bps <= 0:
            raise ValueError("link rates must be positive")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class RateTrace:
    """Measured ``(t_s, downlink_bps, uplink_bps)`` samples, read as a step function."""

    samples: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(tuple(map(float, s)) for s in self.samples))
        if not self.samples:
            raise TraceFormatError("rate trace is empty")
        ts = [s[0] for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise TraceFormatError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def span_s(self) -> float:
        """Length of one replay cycle: first to last sample plus the last interval."""
        ts = [s[0] for s in self.samples]
        if len(ts) == 1:
            return math.inf
        return ts[-1] - ts[0] + (ts[-1] - ts[-2])

    def rate_at(self, t_s: float) -> tuple[float, float]:
        """Previous-sample hold; times past the end wrap around cyclically."""
        ts = [s[0] for s in self.samples]
        t0 = ts[0]
        span = self.span_s
        t = t_s
        if math.isfinite(span) and t >= t0 + span:
            t = t0 + math.fmod(t - t0, span)
        i = max(bisect.bisect_right(ts, t) - 1, 0)
        return self.samples[i][1], self.samples[i][2]


def orbital_period(altitude_km: float) -> float:
    if altitude_km < 0:
        raise ValueError("altitude must be nonnegative")
    a = EARTH_RADIUS_KM + altitude_km
    return 2.0 * math.pi * math.sqrt(a**3 / MU_EARTH_KM3_S2)


def coverage_half_angle(altitude_km: float, min_elevation_deg: float) -> float:
    """Earth-central half angle (radians) of the visibility cone above the mask."""
    eps = math.radians(min_elevation_deg)
    return math.acos(EARTH_RADIUS_KM * math.cos(eps) / (EARTH_RADIUS_KM + altitude_km)) - eps


def contact_fraction(altitude_km: float, min_elevation_deg: float) -> float:
    if altitude_km <= 0:
        raise ValueError("altitude must be positive")
    lam = coverage_half_angle(altitude_km, min_elevation_deg)
    if lam <= 0:
        raise ValueError("elevation mask leaves no visible arc: zero-length window")
    return lam / math.pi


def contact_seconds(altitude_km: float, min_elevation_deg: float) -> float:
    return contact_fraction(altitude_km, min_elevation_deg) * orbital_period(altitude_km)


def contact_windows(
    config: OrbitConfig,
    horizon_s: float,
    rates: tuple[float, float] | RateTrace,
) -> list[ContactWindow]:
    """One window per orbit starting at ``phase_offset_s`` (mod the period).

    Windows running past ``horizon_s`` are truncated to it. With a trace, the
    rates sampled at each window start hold for the whole window.
    """
    if horizon_s <= 0:
        raise ValueError("horizon must be positive")
    period = orbital_period(config.altitude_km)
    length = contact_fraction(config.altitude_km, config.min_elevation_deg) * period
    start = math.fmod(config.phase_offset_s, period)
    if start < 0:
        start += period
    windows = []
    k = 0
    while True:
        s = start + k * period
        if s >= horizon_s:
            break
        e = min(s + length, horizon_s)
        if isinstance(rates, RateTrace):
            down, up = rates.rate_at(s)
        else:
            down, up = rates
        windows.append(ContactWindow(s, e, down, up))
        k += 1
    return windows


def load_rate_trace(path: str | Path) -> RateTrace:
    """Read a ``t_s,downlink_bps,uplink_bps`` CSV file."""
    path = Path(path)
    samples: list[tuple[float, float, float]] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceFormatError(f"{path}: empty file")
        if [h.strip() for h in header] != ["t_s", "downlink_bps", "uplink_bps"]:
            raise TraceFormatError(f"{path}:1: expected header t_s,downlink_bps,uplink_bps")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TraceFormatError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            try:
                t, down, up = (float(c) for c in row)
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{line}: {exc}") from None
            if not all(map(math.isfinite, (t, down, up))) or down <= 0 or up <= 0:
                raise TraceFormatError(f"{path}:{line}: rates must be positive and finite")
            if samples and t <= samples[-1][0]:
                raise TraceFormatError(f"{path}:{line}: timestamp {t} is not increasing")
            samples.append((t, down, up))
    if not samples:
        raise TraceFormatError(f"{path}: no samples")
    return RateTrace(tuple(samples))


def write_rate_trace(path: str | Path, samples: Sequence[tuple[float, float, float]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "downlink_bps", "uplink_bps"])
        for t, d, u in samples:
            w.writerow([repr(float(t)), repr(float(d)), repr(float(u))])
