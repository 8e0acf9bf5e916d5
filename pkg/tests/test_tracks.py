import math

import numpy as np
import pytest

from shipnav import geo, synth, tracks
from shipnav.errors import DataError, ParseError

T0 = 500000000  # 1985-11-05T00:53:20Z


def make_track(tid, xy_km, t0=T0, dt_s=7200, origin=(0.0, 0.0)):
    """Track whose reports sit at given (x, y) km displacements from origin."""
    o = geo.GeoPoint.from_degrees(*origin)
    n = len(xy_km)
    lon, lat = geo.advance_xy(
        np.full(n, o.lon), np.full(n, o.lat),
        np.array([p[0] for p in xy_km], dtype=float),
        np.array([p[1] for p in xy_km], dtype=float),
    )
    times = t0 + np.arange(n, dtype=np.int64) * dt_s
    return tracks.Track(tid, times, lon, lat)


def linear_track(tid, n=30, vx=20.0, vy=0.0, t0=T0):
    return make_track(tid, [(vx * i, vy * i) for i in range(n)], t0=t0)


# ---------------------------------------------------------------- parsing


def test_parse_header_only():
    assert tracks.parse_tracks("id,timestamp_iso8601,lon_deg,lat_deg\n") == []


def test_parse_three_rows():
    csv = (
        "id,timestamp_iso8601,lon_deg,lat_deg\n"
        "a,1985-01-01T00:00:00Z,10.0,20.0\n"
        "a,1985-01-01T02:00:00Z,10.1,20.0\n"
        "a,1985-01-01T04:00:00Z,10.2,20.0\n"
    )
    out = tracks.parse_tracks(csv)
    assert len(out) == 1
    t = out[0]
    assert t.id == "a" and t.n == 3
    assert t.cadence_hours == pytest.approx(2.0)
    assert math.degrees(t.lon[1]) == pytest.approx(10.1)


def test_parse_interleaved_ids_sorted():
    csv = (
        "id,timestamp_iso8601,lon_deg,lat_deg\n"
        "b,1985-01-01T04:00:00Z,1.2,0.0\n"
        "a,1985-01-01T00:00:00Z,0.0,0.0\n"
        "b,1985-01-01T00:00:00Z,1.0,0.0\n"
        "a,1985-01-01T04:00:00Z,0.2,0.0\n"
        "b,1985-01-01T02:00:00Z,1.1,0.0\n"
        "a,1985-01-01T02:00:00Z,0.1,0.0\n"
    )
    out = tracks.parse_tracks(csv)
    assert [t.id for t in out] == ["b", "a"]
    for t in out:
        assert np.all(np.diff(t.times) > 0)
        assert np.all(np.diff(t.lon) > 0)


def test_parse_malformed_row_reports_line():
    csv = (
        "id,timestamp_iso8601,lon_deg,lat_deg\n"
        "a,1985-01-01T00:00:00Z,0.0,0.0\n"
        "a,not-a-time,0.1,0.0\n"
    )
    with pytest.raises(ParseError) as exc:
        tracks.parse_tracks(csv)
    assert exc.value.line == 3


def test_parse_duplicate_timestamps():
    base = (
        "id,timestamp_iso8601,lon_deg,lat_deg\n"
        "a,1985-01-01T00:00:00Z,0.0,0.0\n"
        "a,1985-01-01T02:00:00Z,0.1,0.0\n"
        "a,1985-01-01T02:00:00Z,{lon},0.0\n"
        "a,1985-01-01T04:00:00Z,0.2,0.0\n"
    )
    out = tracks.parse_tracks(base.format(lon="0.1"))  # exact duplicate dropped
    assert out[0].n == 3
    with pytest.raises(DataError):
        tracks.parse_tracks(base.format(lon="0.15"))  # conflicting position


def test_parse_skips_ids_below_three_reports():
    csv = (
        "id,timestamp_iso8601,lon_deg,lat_deg\n"
        "tiny,1985-01-01T00:00:00Z,0.0,0.0\n"
        "tiny,1985-01-01T02:00:00Z,0.1,0.0\n"
        "ok,1985-01-01T00:00:00Z,5.0,5.0\n"
        "ok,1985-01-01T02:00:00Z,5.1,5.0\n"
        "ok,1985-01-01T04:00:00Z,5.2,5.0\n"
    )
    out = tracks.parse_tracks(csv)
    assert [t.id for t in out] == ["ok"]


def test_parse_rejects_wrong_header():
    with pytest.raises(ParseError) as exc:
        tracks.parse_tracks("foo,bar\n")
    assert exc.value.line == 1


def test_write_round_trip():
    t = linear_track("rt", n=12, vx=18.0, vy=-6.0)
    out = tracks.parse_tracks(tracks.write_tracks([t]))
    assert len(out) == 1
    assert np.array_equal(out[0].times, t.times)
    np.testing.assert_allclose(out[0].lon, t.lon, atol=1e-15)
    np.testing.assert_allclose(out[0].lat, t.lat, atol=1e-15)


# ------------------------------------------------------------ segmentation


def test_segment_no_gap_is_identity():
    t = linear_track("s", n=15)
    segs = tracks.segment_track(t)
    assert len(segs) == 1 and segs[0] is t


def test_segment_24h_gap_partitions():
    times = np.concatenate([
        T0 + np.arange(12) * 7200,
        T0 + 12 * 7200 + 86400 + np.arange(12) * 7200,
    ]).astype(np.int64)
    lon = np.radians(np.linspace(0, 4, 24))
    lat = np.zeros(24)
    segs = tracks.segment_track(tracks.Track("g", times, lon, lat))
    assert [s.n for s in segs] == [12, 12]
    assert sum(s.n for s in segs) == 24


def test_segment_gap_exactly_at_threshold_not_split():
    times = np.concatenate([
        T0 + np.arange(12) * 7200,
        T0 + 11 * 7200 + int(12 * 3600) + np.arange(12) * 7200,
    ]).astype(np.int64)
    lon = np.radians(np.linspace(0, 4, 24))
    t = tracks.Track("e", times, lon, np.zeros(24))
    assert len(tracks.segment_track(t, max_gap_hours=12.0)) == 1


def test_segment_drops_short_pieces():
    times = np.concatenate([
        T0 + np.arange(4) * 7200,
        T0 + 4 * 7200 + 86400 + np.arange(12) * 7200,
    ]).astype(np.int64)
    lon = np.radians(np.linspace(0, 3, 16))
    segs = tracks.segment_track(tracks.Track("d", times, lon, np.zeros(16)))
    assert [s.n for s in segs] == [12]


# ------------------------------------------------------------- kinematics


def test_kinematics_stationary_pair():
    t = make_track("st", [(0, 0), (0, 0), (0, 0)])
    k = tracks.empirical_kinematics(t)
    assert k.speed[0] == 0.0
    assert k.heading[0] == 0.0


def test_kinematics_due_north():
    t = make_track("n", [(0, 0), (0, 22.24), (0, 44.48)])
    k = tracks.empirical_kinematics(t)
    assert k.speed[0] == pytest.approx(11.12, abs=1e-9)
    assert k.heading[0] == pytest.approx(math.pi / 2, abs=1e-12)


def test_fleet_median_speed_matches_generator():
    cfg = synth.FleetConfig(n_tracks=5, n_reports=200, mu_s_range=(10.4, 10.4))
    fleet, _ = synth.synthesize_fleet(cfg, seed=3)
    speeds = np.concatenate([tracks.empirical_kinematics(t).speed for t in fleet])
    assert 6.0 <= np.median(speeds) <= 15.0


# ---------------------------------------------------------- fix detection


def test_detect_linear_track_empty():
    t = linear_track("lin", n=40, vx=22.0, vy=5.0)
    fs = tracks.detect_fixes(t, tracks.empirical_kinematics(t))
    assert fs.m == 0


def midnight_jump_track(tid, jump_km=(0.0, 30.0), n=36, t0=None):
    """Eastward dead-reckoned track whose positions all shift by jump_km
    from one local-midnight report onward."""
    if t0 is None:
        t0 = (T0 // 86400) * 86400 + 7200  # 02:00 UTC at lon 0
    xy = [(20.0 * i, 0.0) for i in range(n)]
    day0 = (t0 + np.arange(n) * 7200) // 86400
    jump_at = int(np.nonzero(np.diff(day0))[0][0] + 1)
    xy = [(x + (jump_km[0] if i >= jump_at else 0.0),
           y + (jump_km[1] if i >= jump_at else 0.0)) for i, (x, y) in enumerate(xy)]
    return make_track(tid, xy, t0=t0), jump_at


def test_detect_single_injected_midnight_jump():
    t, jump_at = midnight_jump_track("j1")
    fs = tracks.detect_fixes(t, tracks.empirical_kinematics(t))
    assert list(fs.fix_indices) == [jump_at]
    assert fs.jumps[0, 1] == pytest.approx(30.0, abs=1e-2)
    assert fs.jumps[0, 0] == pytest.approx(0.0, abs=1e-2)


def test_detect_keeps_largest_jump_per_day():
    t0 = (T0 // 86400) * 86400 + 7200
    n = 36
    xy = [(20.0 * i, 0.0) for i in range(n)]
    day0 = (t0 + np.arange(n) * 7200) // 86400
    mid = int(np.nonzero(np.diff(day0))[0][0] + 1)
    for i in range(n):  # 10 km jump at midnight, 40 km jump 4 steps later
        dx = 0.0
        if i >= mid:
            dx += 10.0
        if i >= mid + 4:
            dx += 40.0
        xy[i] = (xy[i][0] + dx, 0.0)
    t = make_track("two", xy, t0=t0)
    fs = tracks.detect_fixes(t, tracks.empirical_kinematics(t))
    days = t.local_day_numbers()
    flagged_today = [i for i in fs.fix_indices if days[i] == days[mid]]
    assert flagged_today == [mid + 4]
    row = list(fs.fix_indices).index(mid + 4)
    assert fs.jumps[row, 0] == pytest.approx(40.0, abs=1e-9)


def test_detect_zero_noise_generated_track_has_no_fixes():
    p = synth.TruthParams(sigma_s=0.0, sigma_theta=0.0, tau_x=0.0, tau_y=0.0,
                          tau_s=0.0, tau_theta=0.0)
    rng = np.random.default_rng(5)
    t, _ = synth.synth_hq2_track("quiet", rng, p, n_reports=100)
    fs = tracks.detect_fixes(t, tracks.empirical_kinematics(t))
    assert fs.m == 0


def test_fix_schedule_one_per_day_invariant():
    cfg = synth.FleetConfig(n_tracks=4, n_reports=240)
    fleet, _ = synth.synthesize_fleet(cfg, seed=11)
    for t in fleet:
        fs = tracks.detect_fixes(t, tracks.empirical_kinematics(t))
        days = t.local_day_numbers()[fs.fix_indices]
        assert len(np.unique(days)) == len(days)


# ------------------------------------------------------- threshold choice


def test_threshold_all_zero_residuals():
    t = linear_track("z", n=30)
    assert tracks.threshold_from_quantile([t], q=0.8) == 0.0


def second_difference_track(values_km):
    """Track whose |predicted - reported| latitudinal residuals equal values_km."""
    d2 = [v * (1 if i % 2 == 0 else -1) for i, v in enumerate(values_km)]
    y = np.concatenate([[0.0, 0.0], np.cumsum(np.cumsum(d2))])
    xy = [(25.0 * i, y[i]) for i in range(len(y))]
    return make_track("q", xy)


def test_threshold_nearest_rank():
    t = second_difference_track(list(range(1, 101)))
    k = tracks.empirical_kinematics(t)
    _, _, jy = tracks._prediction_jumps(t, k)
    np.testing.assert_allclose(np.sort(np.abs(jy)), np.arange(1.0, 101.0), atol=1e-6)
    assert tracks.threshold_from_quantile([t], q=0.8) == pytest.approx(80.0, abs=1e-6)


def test_threshold_monotone_in_q():
    t = second_difference_track(list(np.linspace(0.5, 60.0, 40)))
    vals = [tracks.threshold_from_quantile([t], q) for q in np.linspace(0.0, 1.0, 21)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_threshold_empty_pool_rejected():
    with pytest.raises(DataError):
        tracks.threshold_from_quantile([])


# ----------------------------------------------------------- classification


def test_classify_generative_hq2():
    rng = np.random.default_rng(17)
    t, _ = synth.synth_hq2_track("h", rng, synth.TruthParams(fix_prob=1.0), n_reports=240)
    k = tracks.empirical_kinematics(t)
    fs = tracks.detect_fixes(t, k)
    assert tracks.classify_track(t, k, fs).label == tracks.TrackLabel.HQ2


def test_classify_smooth_lq4():
    rng = np.random.default_rng(19)
    t, _ = synth.synth_lq4_track("l", rng, synth.TruthParams(sigma_s=0.5, sigma_theta=0.05))
    k = tracks.empirical_kinematics(t)
    fs = tracks.detect_fixes(t, k)
    c = tracks.classify_track(t, k, fs)
    assert c.label == tracks.TrackLabel.LQ4


def test_classify_static_jump():
    rng = np.random.default_rng(23)
    t = synth.synth_static_jump_track("s", rng)
    k = tracks.empirical_kinematics(t)
    fs = tracks.detect_fixes(t, k)
    c = tracks.classify_track(t, k, fs)
    assert c.label == tracks.TrackLabel.STATIC_JUMP
    assert c.evidence["median_moving_step_km"] == pytest.approx(84.6, abs=0.5)


def test_classify_invariant_under_longitude_rotation():
    rng = np.random.default_rng(29)
    t, _ = synth.synth_hq2_track("r", rng, synth.TruthParams(), n_reports=200)
    rot = tracks.Track(t.id, t.times, np.array([geo.wrap_longitude(x + 0.6) for x in t.lon]), t.lat)
    for a, b in [(t, rot)]:
        ka, kb = tracks.empirical_kinematics(a), tracks.empirical_kinematics(b)
        ca = tracks.classify_track(a, ka, tracks.detect_fixes(a, ka))
        cb = tracks.classify_track(b, kb, tracks.detect_fixes(b, kb))
        assert ca.label == cb.label


# ------------------------------------------------------------- fix export


def test_fix_schedule_json_round_trip():
    fs = tracks.FixSchedule(np.array([4, 16]), np.array([[8.0, -3.0], [1.5, 22.0]]))
    items = tracks.fix_schedules_to_json({"a": fs})
    back = tracks.fix_schedules_from_json(items)
    assert list(back["a"].fix_indices) == [4, 16]
    np.testing.assert_allclose(back["a"].jumps, fs.jumps)


def test_midnight_report_indices():
    t0 = (T0 // 86400) * 86400  # 00:00 UTC at lon 0
    t = linear_track("m", n=37, t0=t0 + 3600)  # 3 days, reports at odd hours
    mids = tracks.midnight_report_indices(t)
    local = t.times + t.mean_lon_deg() / 15.0 * 3600.0
    for i in mids:
        assert min(local[i] % 86400.0, 86400.0 - local[i] % 86400.0) <= 3600.0
    assert len(mids) == 3
