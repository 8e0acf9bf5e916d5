"""Track ingestion, segmentation, kinematics, fix detection, classification.

A track is a time-ordered sequence of position reports from one voyage.
Internally reports are stored as parallel numpy arrays (epoch seconds,
lon/lat in radians); the per-report TrackReport view exists for
construction and inspection. All displacement arithmetic happens in the
local flat-earth frame of :mod:`shipnav.geo`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import geo
from .errors import DataError, ParseError

CSV_HEADER = ["id", "timestamp_iso8601", "lon_deg", "lat_deg"]

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class TrackReport:
    """One timestamped position report."""

    time: int  # UTC epoch seconds, strictly positive
    pos: geo.GeoPoint
    source_id: str

    def __post_init__(self):
        if self.time <= 0:
            raise DataError(f"timestamp {self.time} not strictly positive")


@dataclass
class Track:
    """Time-ordered reports of one voyage segment."""

    id: str
    times: np.ndarray  # int64 epoch seconds
    lon: np.ndarray  # radians
    lat: np.ndarray  # radians

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.lon = np.asarray(self.lon, dtype=np.float64)
        self.lat = np.asarray(self.lat, dtype=np.float64)
        if not (len(self.times) == len(self.lon) == len(self.lat)):
            raise DataError(f"track {self.id}: ragged report arrays")
        if len(self.times) < 3:
            raise DataError(f"track {self.id}: needs at least 3 reports")
        if self.times[0] <= 0:
            raise DataError(f"track {self.id}: timestamps must be strictly positive")
        if np.any(np.diff(self.times) <= 0):
            raise DataError(f"track {self.id}: timestamps must strictly increase")

    @classmethod
    def from_reports(cls, track_id: str, reports: Sequence[TrackReport]) -> "Track":
        return cls(
            track_id,
            np.array([r.time for r in reports], dtype=np.int64),
            np.array([r.pos.lon for r in reports]),
            np.array([r.pos.lat for r in reports]),
        )

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def cadence_hours(self) -> float:
        return float(np.median(np.diff(self.times)) / 3600.0)

    @property
    def reports(self) -> list[TrackReport]:
        return [
            TrackReport(int(t), geo.GeoPoint(lo, la), self.id)
            for t, lo, la in zip(self.times, self.lon, self.lat)
        ]

    def point(self, i: int) -> geo.GeoPoint:
        return geo.GeoPoint(float(self.lon[i]), float(self.lat[i]))

    def mean_lon_deg(self) -> float:
        # circular mean keeps antimeridian tracks sane
        s = float(np.mean(np.sin(self.lon)))
        c = float(np.mean(np.cos(self.lon)))
        return math.degrees(math.atan2(s, c))

    def local_day_numbers(self) -> np.ndarray:
        """Calendar-day index of each report in track-local civil time."""
        offset = self.mean_lon_deg() / 15.0 * 3600.0
        return np.floor((self.times + offset) / SECONDS_PER_DAY).astype(np.int64)

    def duration_days(self) -> float:
        return float((self.times[-1] - self.times[0]) / SECONDS_PER_DAY)


@dataclass
class Kinematics:
    """Empirical per-step speed and heading of a track.

    speed[t-1] and heading[t-1] describe the step ending at report t;
    heading uses the mathematical convention (east = 0, counterclockwise),
    with a stationary step assigned heading 0.
    """

    speed: np.ndarray  # km/hr, >= 0
    heading: np.ndarray  # radians in (-pi, pi]
    dt_hours: np.ndarray
    dx: np.ndarray  # km per step
    dy: np.ndarray


@dataclass
class FixSchedule:
    """Report indices flagged as celestial position corrections."""

    fix_indices: np.ndarray  # sorted int64 report indices
    jumps: np.ndarray  # (m, 2) reported-minus-predicted (J^x, J^y) km

    def __post_init__(self):
        self.fix_indices = np.asarray(self.fix_indices, dtype=np.int64)
        self.jumps = np.asarray(self.jumps, dtype=np.float64).reshape(-1, 2)
        if len(self.fix_indices) != len(self.jumps):
            raise DataError("fix indices and jumps must align")
        if np.any(np.diff(self.fix_indices) <= 0):
            raise DataError("fix indices must be sorted and unique")
        if not np.all(np.isfinite(self.jumps)):
            raise DataError("jump components must be finite")

    @property
    def m(self) -> int:
        return len(self.fix_indices)


class TrackLabel(str, Enum):
    HQ2 = "HQ2"
    LQ4 = "LQ4"
    STATIC_JUMP = "STATIC_JUMP"
    OTHER = "OTHER"


@dataclass
class TrackClass:
    label: TrackLabel
    evidence: dict = field(default_factory=dict)


def _parse_timestamp(text: str, line: int) -> int:
    try:
        dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError as e:
        raise ParseError(f"bad timestamp {text!r}: {e}", line=line) from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_tracks(stream) -> list[Track]:
    """Parse the track CSV (header ``id,timestamp_iso8601,lon_deg,lat_deg``).

    Reports are grouped by id and time-sorted. Exact duplicate rows are
    dropped; two rows with the same id and timestamp but different
    positions are a data error. Ids with fewer than 3 reports cannot form
    a valid Track and are skipped.

    Args:
        stream: CSV text or a text file object.

    Returns:
        Tracks in order of first appearance of their id.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file, header required", line=1) from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise ParseError(f"expected header {','.join(CSV_HEADER)}", line=1)

    groups: dict[str, list[tuple[int, float, float]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno)
        tid = row[0].strip()
        if not tid:
            raise ParseError("empty id", line=lineno)
        t = _parse_timestamp(row[1], lineno)
        try:
            lon_deg = float(row[2])
            lat_deg = float(row[3])
        except ValueError:
            raise ParseError(f"bad coordinate in {row[2]!r},{row[3]!r}", line=lineno) from None
        if not (-180.0 < lon_deg <= 180.0) or not (-90.0 < lat_deg < 90.0):
            raise ParseError(f"coordinate ({lon_deg}, {lat_deg}) out of range", line=lineno)
        if t <= 0:
            raise DataError(f"line {lineno}: timestamp not strictly positive")
        groups.setdefault(tid, []).append((t, math.radians(lon_deg), math.radians(lat_deg)))

    tracks = []
    for tid, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        dedup: list[tuple[int, float, float]] = []
        for r in rows:
            if dedup and r[0] == dedup[-1][0]:
                if r[1] == dedup[-1][1] and r[2] == dedup[-1][2]:
                    continue  # exact duplicate report
                raise DataError(f"track {tid}: conflicting reports at timestamp {r[0]}")
            dedup.append(r)
        if len(dedup) < 3:
            continue
        arr = np.array(dedup, dtype=np.float64)
        tracks.append(Track(tid, arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2]))
    return tracks


def write_tracks(tracks: Iterable[Track]) -> str:
    """Serialize tracks back to the CSV schema (full float precision)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for t in tracks:
        for i in range(t.n):
            stamp = datetime.fromtimestamp(int(t.times[i]), tz=timezone.utc)
            w.writerow(
                [
                    t.id,
                    stamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
                    repr(math.degrees(t.lon[i])),
                    repr(math.degrees(t.lat[i])),
                ]
            )
    return buf.getvalue()


def segment_track(t: Track, max_gap_hours: float = 12.0, min_reports: int = 10) -> list[Track]:
    """Split a track wherever the inter-report gap exceeds max_gap_hours.

    Splitting is strict (a gap exactly at the threshold does not split);
    segments shorter than ``min_reports`` are dropped. Segment ids get a
    ``#k`` suffix when a track actually splits.
    """
    gaps_h = np.diff(t.times) / 3600.0
    cuts = np.nonzero(gaps_h > max_gap_hours)[0] + 1
    if len(cuts) == 0:
        return [t] if t.n >= min_reports else []
    out = []
    for k, idx in enumerate(np.split(np.arange(t.n), cuts)):
        if len(idx) < min_reports:
            continue
        out.append(Track(f"{t.id}#{k}", t.times[idx], t.lon[idx], t.lat[idx]))
    return out


def empirical_kinematics(t: Track, earth: geo.EarthModel = geo.DEFAULT_EARTH) -> Kinematics:
    """Per-step empirical speed (km/hr) and heading from the report chain."""
    if t.n < 2:
        raise DataError(f"track {t.id}: kinematics needs at least 2 reports")
    dt_h = np.diff(t.times) / 3600.0
    if np.any(dt_h <= 0.0):
        raise DataError(f"track {t.id}: zero or negative time step")
    dx, dy = geo.step_displacements_xy(t.lon, t.lat, earth)
    speed = np.hypot(dx, dy) / dt_h
    heading = np.arctan2(dy, dx)  # atan2(0, 0) = 0, the stationary convention
    return Kinematics(speed, heading, dt_h, dx, dy)


def _prediction_jumps(t: Track, k: Kinematics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reported-minus-predicted displacement at reports 2..n-1.

    The predictor advances report i-1 by the speed and heading of the
    immediately preceding step, scaled to the step's own duration.
    """
    n = t.n
    idx = np.arange(2, n)
    pred_dx = k.dt_hours[1:] * k.speed[:-1] * np.cos(k.heading[:-1])
    pred_dy = k.dt_hours[1:] * k.speed[:-1] * np.sin(k.heading[:-1])
    jx = k.dx[1:] - pred_dx
    jy = k.dy[1:] - pred_dy
    return idx, jx, jy


def detect_fixes(
    t: Track,
    k: Kinematics,
    earth: geo.EarthModel = geo.DEFAULT_EARTH,
    threshold_km: float = 7.0,
) -> FixSchedule:
    """Flag celestial-correction jumps in a dead-reckoned track.

    A report is a candidate when the reported position differs from the
    one-step prediction by at least ``threshold_km`` in either component;
    within each track-local calendar day only the largest Euclidean jump
    survives.

    Args:
        t: Track (HQ2 cadence expected).
        k: Its empirical kinematics.
        earth: Earth model (kept for interface symmetry).
        threshold_km: Component threshold, default 7 km.

    Returns:
        FixSchedule with at most one index per local calendar day.
    """
    if t.n < 3:
        raise DataError(f"track {t.id}: fix detection needs at least 3 reports")
    idx, jx, jy = _prediction_jumps(t, k)
    cand = (np.abs(jx) >= threshold_km) | (np.abs(jy) >= threshold_km)
    if not np.any(cand):
        return FixSchedule(np.empty(0, dtype=np.int64), np.empty((0, 2)))
    idx, jx, jy = idx[cand], jx[cand], jy[cand]
    days = t.local_day_numbers()[idx]
    size = np.hypot(jx, jy)
    keep: dict[int, int] = {}
    for i in range(len(idx)):
        d = int(days[i])
        if d not in keep or size[i] > size[keep[d]] * (1.0 + 1e-9) + 1e-12:
            keep[d] = i
    # A correction at report r leaves a mirror-image residual at r+1: the
    # extrapolation there inherits the jump, so the day's largest candidate
    # is as likely to be the aftershock as the event.  When the winner's
    # immediate predecessor is an opposing candidate of comparable size,
    # the earlier report is the correction itself.
    for d, b in keep.items():
        if b == 0 or idx[b - 1] != idx[b] - 1 or days[b - 1] != days[b]:
            continue
        if (jx[b - 1] * jx[b] + jy[b - 1] * jy[b]) < 0.0 and (
            min(size[b - 1], size[b]) >= 0.6 * max(size[b - 1], size[b])
        ):
            keep[d] = b - 1
    sel = sorted(keep.values())
    # The same mirror logic applies when event and aftershock straddle a
    # local-midnight boundary and each wins its own day: consecutive-report
    # winners with opposing, comparable jumps are one correction, not two.
    drop: set[int] = set()
    for a, b in zip(sel[:-1], sel[1:]):
        if a in drop:
            continue
        if idx[b] == idx[a] + 1 and (jx[a] * jx[b] + jy[a] * jy[b]) < 0.0 and (
            min(size[a], size[b]) >= 0.6 * max(size[a], size[b])
        ):
            drop.add(b)
    sel = np.array([i for i in sel if i not in drop], dtype=np.intp)
    return FixSchedule(idx[sel], np.column_stack([jx[sel], jy[sel]]))


def threshold_from_quantile(tracks: Sequence[Track], q: float = 0.8) -> float:
    """Nearest-rank quantile of |predicted - reported| latitudinal distance.

    Pools every interior report of every track; this is how the default
    7 km detection threshold was originally chosen.
    """
    pool = []
    for t in tracks:
        if t.n < 3:
            continue
        k = empirical_kinematics(t)
        _, _, jy = _prediction_jumps(t, k)
        pool.append(np.abs(jy))
    if not pool:
        raise DataError("no interior reports to pool")
    vals = np.sort(np.concatenate(pool))
    if not (0.0 <= q <= 1.0):
        raise DataError(f"quantile {q} outside [0, 1]")
    rank = max(1, math.ceil(q * len(vals)))
    return float(vals[rank - 1])


def classify_track(
    t: Track,
    k: Kinematics,
    fs: FixSchedule,
    static_speed_kmh: float = 0.5,
    static_jump_km: float = 40.0,
    hq2_max_cadence_hours: float = 2.5,
    hq2_fix_rate_per_day: tuple[float, float] = (0.3, 1.5),
    lq4_max_cadence_hours: float = 5.0,
    lq4_max_fix_rate_per_day: float = 0.1,
) -> TrackClass:
    """Assign one of {HQ2, LQ4, STATIC_JUMP, OTHER}.

    STATIC_JUMP: mostly stationary reports punctuated by large relocations.
    HQ2: ~2-hourly dead reckoning with roughly daily celestial fixes.
    LQ4: ~4-hourly smooth (interpolated-looking) tracks with almost no
    detectable fixes.
    """
    step_km = np.hypot(k.dx, k.dy)
    static = k.speed < static_speed_kmh
    frac_static = float(np.mean(static))
    moving = step_km[~static]
    median_moving_km = float(np.median(moving)) if len(moving) else 0.0
    cadence = t.cadence_hours
    duration = max(t.duration_days(), 1e-9)
    fix_rate = fs.m / duration
    evidence = {
        "median_speed_kmh": float(np.median(k.speed)),
        "median_jump_km": float(np.median(np.hypot(fs.jumps[:, 0], fs.jumps[:, 1]))) if fs.m else 0.0,
        "frac_static": frac_static,
        "median_moving_step_km": median_moving_km,
        "cadence_hours": cadence,
        "fix_rate_per_day": float(fix_rate),
    }
    if frac_static >= 0.5 and median_moving_km > static_jump_km:
        return TrackClass(TrackLabel.STATIC_JUMP, evidence)
    if cadence <= hq2_max_cadence_hours and hq2_fix_rate_per_day[0] <= fix_rate <= hq2_fix_rate_per_day[1]:
        return TrackClass(TrackLabel.HQ2, evidence)
    if hq2_max_cadence_hours < cadence <= lq4_max_cadence_hours and fix_rate < lq4_max_fix_rate_per_day:
        return TrackClass(TrackLabel.LQ4, evidence)
    return TrackClass(TrackLabel.OTHER, evidence)


def fix_schedules_to_json(schedules: dict[str, FixSchedule]) -> list[dict]:
    """Flatten fix schedules to the portable JSON array form."""
    out = []
    for tid in sorted(schedules):
        fs = schedules[tid]
        for i in range(fs.m):
            out.append(
                {
                    "track_id": tid,
                    "report_index": int(fs.fix_indices[i]),
                    "jx_km": float(fs.jumps[i, 0]),
                    "jy_km": float(fs.jumps[i, 1]),
                }
            )
    return out


def fix_schedules_from_json(items: list[dict]) -> dict[str, FixSchedule]:
    by_track: dict[str, list[tuple[int, float, float]]] = {}
    for it in items:
        try:
            by_track.setdefault(str(it["track_id"]), []).append(
                (int(it["report_index"]), float(it["jx_km"]), float(it["jy_km"]))
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"bad fix schedule entry {it!r}: {e}") from None
    out = {}
    for tid, rows in by_track.items():
        rows.sort()
        arr = np.array(rows, dtype=np.float64)
        out[tid] = FixSchedule(arr[:, 0].astype(np.int64), arr[:, 1:])
    return out


def midnight_report_indices(t: Track) -> np.ndarray:
    """Report index nearest each interior track-local midnight.

    Used for scheduling nightly celestial corrections: one index per local
    day boundary strictly inside the track's time span.
    """
    offset = t.mean_lon_deg() / 15.0 * 3600.0
    local = t.times + offset
    first_mid = math.floor(local[0] / SECONDS_PER_DAY) + 1
    last_mid = math.ceil(local[-1] / SECONDS_PER_DAY) - 1
    out = []
    for day in range(int(first_mid), int(last_mid) + 1):
        target = day * SECONDS_PER_DAY
        i = int(np.argmin(np.abs(local - target)))
        if 0 < i < t.n:
            out.append(i)
    return np.unique(np.array(out, dtype=np.int64))
