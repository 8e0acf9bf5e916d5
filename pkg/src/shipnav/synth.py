"""Generative track synthesis for calibration and testing.

Produces dead-reckoned voyages from the same process the inference
assumes: AR(1) speeds with truncated-normal innovations, random-walk
headings, deterministic displacement accumulation, noisy speed/heading
reports between nightly celestial corrections, and fresh position noise
at the corrections themselves. The returned truth records keep every
latent quantity so recovery can be scored exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr, ndtri

from . import geo, tracks
from .errors import DataError, OutOfDomainError


@dataclass(frozen=True)
class TruthParams:
    """Generative parameters of one synthetic track."""

    mu_s: float = 10.4  # mean speed, km/hr
    alpha_s: float = 0.8  # AR(1) coefficient of speed
    sigma_s: float = 1.0  # speed innovation sd, km/hr
    sigma_theta: float = 0.1  # heading random-walk sd, rad/step
    tau_x: float = 33.1  # celestial lon error sd, km (before cos lat)
    tau_y: float = 24.4  # celestial lat error sd, km
    tau_s: float = 0.192  # relative speed report error sd
    tau_theta: float = 0.23  # heading report error sd, rad
    heading_bias_scale: float = 0.0  # sd of per-interval heading bias, rad
    fix_prob: float = 0.87  # nightly celestial correction probability


@dataclass
class TrackTruth:
    """Latent state behind one synthetic track."""

    params: TruthParams
    s: np.ndarray  # true per-step speed, length n-1
    theta: np.ndarray  # true per-step heading, length n-1
    px: np.ndarray  # true displacement from origin, length n
    py: np.ndarray
    qx: np.ndarray  # reported displacement from origin, length n
    qy: np.ndarray
    true_lon: np.ndarray
    true_lat: np.ndarray
    fix_indices: np.ndarray  # report indices carrying celestial corrections
    betas: np.ndarray  # heading bias per inter-fix interval, length max(m-1, 0)


@dataclass(frozen=True)
class FleetConfig:
    n_tracks: int = 50
    n_reports: int = 300
    cadence_hours: float = 2.0
    start_time: int = 473385600  # 1985-01-01T00:00:00Z
    start_spread_days: float = 300.0
    lat_range_deg: tuple[float, float] = (-40.0, 40.0)
    mu_s_range: tuple[float, float] = (6.5, 14.5)
    quantize_deg: float = 0.0  # 0 disables position rounding
    params: TruthParams = field(default_factory=TruthParams)


def trunc_normal_draws(rng: np.random.Generator, mean, sd, lower=0.0, size=None):
    """Inverse-CDF draws from a normal truncated below at ``lower``."""
    mean = np.asarray(mean, dtype=np.float64)
    u = rng.uniform(0.0, 1.0, size=size if size is not None else mean.shape or None)
    if sd == 0.0:
        return np.maximum(mean, lower) + 0.0 * u
    a = ndtr((lower - mean) / sd)
    u = a + (1.0 - a) * u
    return mean + sd * ndtri(np.clip(u, 1e-16, 1.0 - 1e-16))


def _wrap(x):
    return np.arctan2(np.sin(x), np.cos(x))


def _latent_path(rng: np.random.Generator, p: TruthParams, n_steps: int, dt_hours: float):
    s = np.empty(n_steps)
    th = np.empty(n_steps)
    stat_sd = p.sigma_s / math.sqrt(max(1.0 - p.alpha_s**2, 1e-12))
    s[0] = trunc_normal_draws(rng, p.mu_s, stat_sd)
    th[0] = rng.uniform(-math.pi, math.pi)
    zs = rng.standard_normal(n_steps - 1)
    zt = rng.standard_normal(n_steps - 1)
    for j in range(1, n_steps):
        m = p.mu_s + p.alpha_s * (s[j - 1] - p.mu_s)
        if p.sigma_s == 0.0:
            s[j] = max(m, 0.0)
        else:
            # invert the lower-truncated innovation CDF at a fresh uniform
            a = ndtr(-m / p.sigma_s)
            u = a + (1.0 - a) * ndtr(zs[j - 1])
            s[j] = m + p.sigma_s * ndtri(min(max(u, 1e-16), 1.0 - 1e-16))
        th[j] = th[j - 1] + p.sigma_theta * zt[j - 1]
    th = _wrap(th)
    dx = dt_hours * s * np.cos(th)
    dy = dt_hours * s * np.sin(th)
    px = np.concatenate([[0.0], np.cumsum(dx)])
    py = np.concatenate([[0.0], np.cumsum(dy)])
    return s, th, px, py


def beta_interval_of_step(fix_indices: np.ndarray, n_reports: int) -> np.ndarray:
    """Map each step (ending at report 1..n-1) to a heading-bias interval.

    Interval k spans reports [fix_k, fix_{k+1}); steps before the first
    fix use the first interval, steps at or after the last fix use the
    last one. With fewer than two fixes there are no intervals (-1).
    """
    n_steps = n_reports - 1
    out = np.full(n_steps, -1, dtype=np.int64)
    m = len(fix_indices)
    if m < 2:
        return out
    ends = np.asarray(fix_indices, dtype=np.int64)
    report = np.arange(1, n_reports)
    k = np.searchsorted(ends, report, side="right") - 1
    out = np.clip(k, 0, m - 2)
    return out


def synth_hq2_track(
    track_id: str,
    seed_rng: np.random.Generator,
    params: TruthParams,
    n_reports: int = 300,
    cadence_hours: float = 2.0,
    start_time: int = 473385600,
    start_point: geo.GeoPoint | None = None,
    quantize_deg: float = 0.0,
    max_attempts: int = 20,
) -> tuple[tracks.Track, TrackTruth]:
    """Generate one dead-reckoned track plus its latent truth.

    Paths that would wander beyond 80 degrees of latitude are resampled
    (fresh substream per attempt) so the flat-earth frame stays valid.
    """
    for attempt in range(max_attempts):
        rng = np.random.Generator(np.random.Philox(seed_rng.integers(0, 2**63 - 1)))
        try:
            return _synth_hq2_once(
                track_id, rng, params, n_reports, cadence_hours, start_time,
                start_point, quantize_deg,
            )
        except OutOfDomainError:
            continue
    raise DataError(f"track {track_id}: could not generate a pole-free path")


def _synth_hq2_once(track_id, rng, params, n_reports, cadence_hours, start_time,
                    start_point, quantize_deg):
    if start_point is None:
        start_point = geo.GeoPoint(
            rng.uniform(-math.pi, math.pi), math.radians(rng.uniform(-40.0, 40.0))
        )
    times = start_time + np.arange(n_reports, dtype=np.int64) * int(cadence_hours * 3600)
    if times[0] <= 0:
        raise DataError("start_time must give strictly positive timestamps")

    s, th, px, py = _latent_path(rng, params, n_reports - 1, cadence_hours)
    true_lon, true_lat = geo.advance_xy(
        np.full(n_reports, start_point.lon), np.full(n_reports, start_point.lat), px, py
    )
    if np.any(np.abs(true_lat) > math.radians(80.0)):
        raise OutOfDomainError("path too close to a pole")

    truth_track = tracks.Track(track_id, times, true_lon, true_lat)
    midnights = tracks.midnight_report_indices(truth_track)
    picks = rng.uniform(0.0, 1.0, size=len(midnights)) < params.fix_prob
    fix_indices = midnights[picks]
    m = len(fix_indices)
    betas = _wrap(rng.normal(0.0, params.heading_bias_scale, size=max(m - 1, 0))) \
        if params.heading_bias_scale > 0.0 else np.zeros(max(m - 1, 0))

    interval = beta_interval_of_step(fix_indices, n_reports)
    is_fix = np.zeros(n_reports, dtype=bool)
    is_fix[fix_indices] = True

    qx = np.empty(n_reports)
    qy = np.empty(n_reports)
    qx[0] = qy[0] = 0.0
    z = rng.standard_normal((n_reports - 1, 4))
    for j in range(n_reports - 1):
        t = j + 1
        if is_fix[t]:
            qx[t] = px[t] + params.tau_x * math.cos(true_lat[t]) * z[j, 0]
            qy[t] = py[t] + params.tau_y * z[j, 1]
        else:
            bias = betas[interval[j]] if interval[j] >= 0 else 0.0
            s_hat = s[j] * (1.0 + params.tau_s * z[j, 2])
            th_hat = th[j] + bias + params.tau_theta * z[j, 3]
            qx[t] = qx[t - 1] + cadence_hours * s_hat * math.cos(th_hat)
            qy[t] = qy[t - 1] + cadence_hours * s_hat * math.sin(th_hat)

    rep_lon, rep_lat = geo.advance_xy(
        np.full(n_reports, start_point.lon), np.full(n_reports, start_point.lat), qx, qy
    )
    if np.any(np.abs(rep_lat) > math.radians(85.0)):
        raise OutOfDomainError("reported path too close to a pole")
    if quantize_deg > 0.0:
        rep_lon = np.radians(np.round(np.degrees(rep_lon) / quantize_deg) * quantize_deg)
        rep_lat = np.radians(np.round(np.degrees(rep_lat) / quantize_deg) * quantize_deg)

    track = tracks.Track(track_id, times, rep_lon, rep_lat)
    truth = TrackTruth(params, s, th, px, py, qx, qy, true_lon, true_lat,
                       fix_indices, betas)
    return track, truth


def synth_lq4_track(
    track_id: str,
    seed_rng: np.random.Generator,
    params: TruthParams,
    n_reports: int = 120,
    cadence_hours: float = 4.0,
    start_time: int = 473385600,
    start_point: geo.GeoPoint | None = None,
) -> tuple[tracks.Track, TrackTruth]:
    """Generate a smooth 4-hourly track (reports equal the true path).

    These stand in for interpolated-looking archive tracks: no jumps, so
    fix detection finds (almost) nothing and classification yields LQ4.
    """
    for _ in range(20):
        rng = np.random.Generator(np.random.Philox(seed_rng.integers(0, 2**63 - 1)))
        sp = start_point or geo.GeoPoint(
            rng.uniform(-math.pi, math.pi), math.radians(rng.uniform(-40.0, 40.0))
        )
        times = start_time + np.arange(n_reports, dtype=np.int64) * int(cadence_hours * 3600)
        s, th, px, py = _latent_path(rng, params, n_reports - 1, cadence_hours)
        try:
            lon, lat = geo.advance_xy(
                np.full(n_reports, sp.lon), np.full(n_reports, sp.lat), px, py
            )
        except OutOfDomainError:
            continue
        if np.any(np.abs(lat) > math.radians(80.0)):
            continue
        track = tracks.Track(track_id, times, lon, lat)
        truth = TrackTruth(params, s, th, px, py, px.copy(), py.copy(), lon, lat,
                           np.empty(0, dtype=np.int64), np.zeros(0))
        return track, truth
    raise DataError(f"track {track_id}: could not generate a pole-free path")


def synth_static_jump_track(
    track_id: str,
    seed_rng: np.random.Generator,
    jump_km: float = 84.6,
    n_cycles: int = 12,
    hold_reports: int = 6,
    cadence_hours: float = 2.0,
    start_time: int = 473385600,
) -> tracks.Track:
    """Stationary reports punctuated by large relocations."""
    rng = np.random.Generator(np.random.Philox(seed_rng.integers(0, 2**63 - 1)))
    p = geo.GeoPoint(rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5))
    lon, lat = [p.lon], [p.lat]
    for _ in range(n_cycles):
        lon.extend([lon[-1]] * hold_reports)
        lat.extend([lat[-1]] * hold_reports)
        ang = rng.uniform(-math.pi, math.pi)
        nxt = geo.advance(
            geo.GeoPoint(lon[-1], lat[-1]),
            geo.Displacement(jump_km * math.cos(ang), jump_km * math.sin(ang)),
        )
        lon.append(nxt.lon)
        lat.append(nxt.lat)
    n = len(lon)
    times = start_time + np.arange(n, dtype=np.int64) * int(cadence_hours * 3600)
    return tracks.Track(track_id, times, np.array(lon), np.array(lat))


def synthesize_fleet(cfg: FleetConfig, seed: int) -> tuple[list[tracks.Track], dict[str, TrackTruth]]:
    """Generate an HQ2-like fleet with per-track mean speeds spread over
    ``cfg.mu_s_range`` and everything else shared from ``cfg.params``."""
    from .util import substream

    fleet: list[tracks.Track] = []
    truths: dict[str, TrackTruth] = {}
    for i in range(cfg.n_tracks):
        tid = f"hq2-{i:03d}"
        rng = substream(seed, "synth", tid)
        mu = rng.uniform(*cfg.mu_s_range)
        params = replace(cfg.params, mu_s=float(mu))
        start = int(cfg.start_time + rng.integers(0, max(int(cfg.start_spread_days * 86400), 1)))
        start = (start // 3600) * 3600
        sp = geo.GeoPoint(
            rng.uniform(-math.pi, math.pi),
            math.radians(rng.uniform(*cfg.lat_range_deg)),
        )
        track, truth = synth_hq2_track(
            tid, rng, params, cfg.n_reports, cfg.cadence_hours, start, sp,
            cfg.quantize_deg,
        )
        fleet.append(track)
        truths[tid] = truth
    return fleet, truths
