"""Per-track state-space model of dead-reckoned navigation.

Latent true speeds follow a zero-truncated AR(1); latent headings follow a
random walk; the latent displacement accumulates deterministically as
``p_t = p_{t-1} + dt_t * s_t * (cos th_t, sin th_t)``.  Reported kinematics
observe the latents with multiplicative speed noise ``tau_s`` and additive
heading noise ``tau_theta`` plus a per-interval heading bias ``beta_k``;
reports flagged as celestial fixes instead observe the displacement with
noise ``(tau_x cos(lat), tau_y)``.

The sampler works in the position parameterization of the latent path: it
draws the per-report displacements ``(px_t, py_t)`` rather than the speeds
and headings that generate them.  In speed/heading coordinates the
displacement is a running integral of the latents, so every local path
update shifts all downstream fix residuals and the fixes veto exactly the
moves that would relax the path; the chain then settles in a narrow
degenerate mode where the path rides the reported headings and the process
scale absorbs the report noise.  In position coordinates every term of the
model is local -- a fix constrains one coordinate pair, a report constrains
one displacement increment, transitions couple adjacent increments -- so
overlapping position windows with adapted covariance mix freely between
fixes.  The change of variables carries the exact Jacobian
``prod_t 1/(dt_t^2 s_t)``.  Chains start from a smoothed path built at
moment-matched noise scales, and the scale parameters stay frozen for the
first third of warmup while the path relaxes; released immediately they
would track the start-up roughness of the path and drag the chain into the
degenerate mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geo, kernels, mcmc
from .errors import (
    ConfigError,
    DataError,
    FittingError,
    InitializationError,
    ModelError,
)
from .tracks import FixSchedule, Kinematics, Track, empirical_kinematics
from .util import substream

__all__ = [
    "SsmParams",
    "SsmLatents",
    "SsmPriors",
    "PositionUncertainty",
    "log_posterior",
    "fit_track",
    "position_uncertainty",
    "posterior_predictive",
]

PARAM_NAMES = ("mu_s", "alpha_s", "sigma_s", "sigma_theta",
               "tau_x", "tau_y", "tau_s", "tau_theta")


@dataclass(frozen=True)
class SsmParams:
    """Static parameters; ``beta`` has one heading bias per inter-fix interval."""

    mu_s: float
    alpha_s: float
    sigma_s: float
    sigma_theta: float
    tau_x: float
    tau_y: float
    tau_s: float
    tau_theta: float
    beta: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    def supports_ok(self) -> bool:
        return (
            self.mu_s >= 0.0
            and 0.0 < self.alpha_s < 1.0
            and self.sigma_s > 0.0
            and self.sigma_theta > 0.0
            and self.tau_x > 0.0
            and self.tau_y > 0.0
            and self.tau_s > 0.0
            and self.tau_theta > 0.0
            and all(-math.pi < b <= math.pi for b in self.beta)
        )


@dataclass(frozen=True)
class SsmLatents:
    """Latent speeds and headings; displacement is derived, not stored."""

    s: np.ndarray
    theta: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "s", np.asarray(self.s, dtype=np.float64))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))
        if self.s.shape != self.theta.shape or self.s.ndim != 1:
            raise DataError("latent speeds and headings must be equal-length vectors")

    def displacement(self, dt_hours: np.ndarray) -> tuple:
        """Deterministic accumulation ``p_t = p_{t-1} + dt_t s_t u(theta_t)``."""
        px = np.concatenate([[0.0], np.cumsum(dt_hours * self.s[1:] * np.cos(self.theta[1:]))])
        py = np.concatenate([[0.0], np.cumsum(dt_hours * self.s[1:] * np.sin(self.theta[1:]))])
        return px, py


@dataclass(frozen=True)
class SsmPriors:
    """Weakly informative prior scales; all half-normal except ``mu_s``."""

    mu_s_scale: float = 10.0
    tau_xy_scale: float = 50.0
    tau_s_scale: float = 0.5
    tau_theta_scale: float = 0.5
    sigma_s_scale: float = 2.0
    sigma_theta_scale: float = 0.3


@dataclass(frozen=True)
class PositionUncertainty:
    """Per-report position-uncertainty decomposition.

    Random spread and the degree forms describe the posterior; systematic
    offsets compare the posterior mean against the reported position; the
    overall value combines them as rmse^2 = bias^2 + std^2.
    """

    std_x_km: np.ndarray
    std_y_km: np.ndarray
    std_lon_deg: np.ndarray
    std_lat_deg: np.ndarray
    bias_x_km: np.ndarray
    bias_y_km: np.ndarray
    rmse_x_km: np.ndarray
    rmse_y_km: np.ndarray

    def __post_init__(self) -> None:
        for rmse, bias, std in ((self.rmse_x_km, self.bias_x_km, self.std_x_km),
                                (self.rmse_y_km, self.bias_y_km, self.std_y_km)):
            if not np.allclose(rmse**2, bias**2 + std**2, atol=1e-9):
                raise DataError("rmse^2 must equal bias^2 + std^2")


# ----------------------------------------------------------------- data pack


def beta_interval_of_step(fix_indices: np.ndarray, n_reports: int) -> np.ndarray:
    """Heading-bias interval of each step, edge intervals extended outward.

    Step ``j`` runs into report ``j+1``; intervals live between consecutive
    fixes ``[f_k, f_{k+1})``.  Returns -1 for every step when there are
    fewer than two fixes.
    """
    n_steps = n_reports - 1
    m = len(fix_indices)
    if m < 2:
        return np.full(n_steps, -1, dtype=np.int64)
    reports = np.arange(1, n_reports)
    k = np.searchsorted(fix_indices, reports, side="right") - 1
    return np.clip(k, 0, m - 2).astype(np.int64)


def _fix_masked_steps(fs: FixSchedule, n: int) -> np.ndarray:
    """Steps whose reported kinematics straddle a celestial correction.

    Detection may land on either side of the position jump (the following
    step mirrors it), so both the step into each fix report and the step
    into the report before it are excluded from the dead-reckoning
    likelihood and from empirical summaries of the reported kinematics.
    """
    masked = np.zeros(n - 1, dtype=bool)
    for i in fs.fix_indices:
        masked[i - 1] = True
        if i >= 2:
            masked[i - 2] = True
    return masked


def _data_pack(track: Track, k: Kinematics, fs: FixSchedule, priors: SsmPriors):
    n = track.n
    if fs.m == 0:
        raise DataError(f"track {track.id}: no celestial fixes; refusing to fit")
    if fs.fix_indices[0] < 1 or fs.fix_indices[-1] >= n:
        raise DataError(f"track {track.id}: fix index out of range")
    dxy = geo.cumulative_xy(track.lon, track.lat)
    fix_idx = fs.fix_indices.astype(np.int64)
    masked = _fix_masked_steps(fs, n)
    if masked.all():
        raise DataError(f"track {track.id}: every step is adjacent to a fix")
    obs_use = (~masked).astype(np.uint8)
    # Anchor the mean-speed prior on fix-free steps only: steps that cross a
    # position correction inflate the reported speed and would bias it.
    prior = np.array([
        float(np.mean(k.speed[~masked])), priors.mu_s_scale, priors.tau_xy_scale,
        priors.tau_s_scale, priors.tau_theta_scale,
        priors.sigma_s_scale, priors.sigma_theta_scale,
    ])
    return dict(
        dt=k.dt_hours.astype(np.float64),
        obs_s=k.speed.astype(np.float64),
        obs_h=k.heading.astype(np.float64),
        obs_use=obs_use,
        beta_step=beta_interval_of_step(fix_idx, n),
        fix_idx=fix_idx,
        fix_qx=dxy[0][fix_idx].astype(np.float64),
        fix_qy=dxy[1][fix_idx].astype(np.float64),
        fix_clat=np.cos(track.lat[fix_idx]).astype(np.float64),
        prior=prior,
    )


def _pack_vector(params: SsmParams, latents: SsmLatents, nb: int) -> np.ndarray:
    beta = np.asarray(params.beta, dtype=np.float64)
    if len(beta) != nb:
        raise DataError(f"expected {nb} heading biases, got {len(beta)}")
    return np.concatenate([
        [params.mu_s, params.alpha_s, params.sigma_s, params.sigma_theta,
         params.tau_x, params.tau_y, params.tau_s, params.tau_theta],
        beta, latents.s, latents.theta,
    ])


def log_posterior(params: SsmParams, latents: SsmLatents, track: Track,
                  k: Kinematics, fs: FixSchedule,
                  priors: SsmPriors = SsmPriors()) -> float:
    """Joint log posterior; -inf (never NaN) outside the support."""
    n = track.n
    if latents.s.shape[0] != n:
        raise DataError(f"latents have length {latents.s.shape[0]}, track has {n} reports")
    if not params.supports_ok() or np.any(latents.s < 0.0) \
            or not np.all(np.isfinite(latents.s)) or not np.all(np.isfinite(latents.theta)):
        return -math.inf
    if np.any(latents.s == 0.0):
        return -math.inf  # multiplicative speed noise degenerates at zero
    nb = max(fs.m - 1, 0)
    pack = _data_pack(track, k, fs, priors)
    vec = _pack_vector(params, latents, nb)
    return float(kernels.ssm_logpost(vec, **pack))


# ------------------------------------------------------------------- fitting


def _circular_mean(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return math.atan2(float(np.mean(np.sin(a))), float(np.mean(np.cos(a))))


def _rw_smoother(y: np.ndarray, valid: np.ndarray,
                 proc_var: float, obs_var: float) -> np.ndarray:
    """Posterior mean of a random walk observed with white noise (RTS).

    Handles missing observations (``valid`` false) and starts diffuse.
    Used to build starting latent paths: the starting point must carry the
    honest process/observation split of the variance, not the report
    noise, or the chains relax into the broad mode where the latent path
    rides the reports.
    """
    n = y.shape[0]
    mf = np.empty(n)
    pf = np.empty(n)
    mp = np.empty(n)
    pp = np.empty(n)
    m, p = 0.0, 1e12
    for t_ in range(n):
        if t_ > 0:
            p += proc_var
        mp[t_] = m
        pp[t_] = p
        if valid[t_]:
            gain = p / (p + obs_var)
            m += gain * (y[t_] - m)
            p *= 1.0 - gain
        mf[t_] = m
        pf[t_] = p
    ms = np.empty(n)
    ms[-1] = mf[-1]
    for t_ in range(n - 2, -1, -1):
        c = pf[t_] / pp[t_ + 1]
        ms[t_] = mf[t_] + c * (ms[t_ + 1] - mp[t_ + 1])
    return ms


def _moment_scale_estimates(k: Kinematics, masked: np.ndarray,
                            priors: SsmPriors) -> tuple[float, float, float, float]:
    """Method-of-moments (sigma_s, sigma_theta, tau_s, tau_theta) starts.

    Observed increments are MA(1) when white observation noise rides on a
    (near-)random-walk signal: Var(increment) = process_var + 2*obs_var and
    lag-1 autocovariance = -obs_var.  Decomposing the empirical increment
    moments therefore starts the chains on the correct side of the variance
    split, instead of letting early warmup glue the latent path to the
    observations.  Fix-adjacent steps are excluded, which also removes the
    increments that straddle a heading-bias interval boundary.
    """
    hm = _HALF_NORMAL_MEDIAN
    fallback = (hm * priors.sigma_s_scale, hm * priors.sigma_theta_scale,
                hm * priors.tau_s_scale, hm * priors.tau_theta_scale)
    valid = ~masked
    inc_ok = valid[:-1] & valid[1:]
    pair_ok = inc_ok[:-1] & inc_ok[1:]
    if inc_ok.sum() < 8 or pair_ok.sum() < 4:
        return fallback

    def split(d: np.ndarray) -> tuple[float, float]:
        dc = d - np.mean(d[inc_ok])
        var = float(np.mean(dc[inc_ok] ** 2))
        lag1 = float(np.mean(dc[:-1][pair_ok] * dc[1:][pair_ok]))
        obs_var = min(max(-lag1, 0.01 * var), 0.45 * var)
        proc_var = max(var - 2.0 * obs_var, 0.05 * var)
        return proc_var, obs_var

    dh = np.diff(k.heading)
    dh = np.arctan2(np.sin(dh), np.cos(dh))
    proc_h, obs_h = split(dh)
    sigma_theta0 = math.sqrt(proc_h)
    tau_theta0 = math.sqrt(obs_h)

    ds = np.diff(k.speed)
    proc_s, obs_s = split(ds)
    mean_sq = float(np.mean(k.speed[valid] ** 2))
    tau_s0 = math.sqrt(obs_s / max(mean_sq, 1e-12))
    # proc_s estimates 2*stationary_var*(1-alpha); convert to the innovation
    # scale sigma_s**2 = stationary_var*(1-alpha**2) at the alpha start 0.5.
    sigma_s0 = math.sqrt(0.5 * proc_s * 1.5)

    out = (sigma_s0, sigma_theta0, tau_s0, tau_theta0)
    caps = (5.0 * priors.sigma_s_scale, 5.0 * priors.sigma_theta_scale,
            5.0 * priors.tau_s_scale, 5.0 * priors.tau_theta_scale)
    return tuple(min(max(v, 0.02), cap) for v, cap in zip(out, caps))


def _initial_state(track: Track, k: Kinematics, fs: FixSchedule,
                   priors: SsmPriors = SsmPriors()):
    """Model-based smoothed starting point with fix steps masked out.

    Speeds and headings start at the posterior mean of a local-level
    smoother run at the moment-matched scale estimates.  Crude running
    means are not enough here: a start that keeps an observation-noise
    share of roughness sits in the broad degenerate basin where the latent
    path rides the reports, and the chains stay there.
    """
    n = track.n
    masked = _fix_masked_steps(fs, n)
    if masked.all():
        raise FittingError(f"track {track.id}: every step is adjacent to a fix")
    valid = ~masked
    scales0 = _moment_scale_estimates(k, masked, priors)
    sigma_s0, sigma_theta0, tau_s0, tau_theta0 = scales0

    mean_speed = float(np.mean(k.speed[valid]))
    speed = _rw_smoother(k.speed, valid, sigma_s0 ** 2,
                         (tau_s0 * mean_speed) ** 2)

    # Thread a continuous heading frame through the valid reports only
    # (nearest-image increments), then smooth; the masked jump-crossing
    # values would otherwise seed spurious whole-turn offsets.
    idx = np.flatnonzero(valid)
    dh = np.diff(k.heading[idx])
    dh = np.arctan2(np.sin(dh), np.cos(dh))
    hu = np.zeros(n - 1)
    hu[idx] = k.heading[idx[0]] + np.concatenate([[0.0], np.cumsum(dh)])
    heading = _rw_smoother(hu, valid, sigma_theta0 ** 2, tau_theta0 ** 2)

    s0 = np.empty(n)
    s0[1:] = np.maximum(speed, 0.1)
    s0[0] = s0[1]
    th0 = np.empty(n)
    th0[1:] = heading
    th0[0] = th0[1]
    th0 = np.arctan2(np.sin(th0), np.cos(th0))

    nb = max(fs.m - 1, 0)
    beta_step = beta_interval_of_step(fs.fix_indices.astype(np.int64), n)
    beta0 = np.zeros(nb)
    for b in range(nb):
        sel = (beta_step == b) & valid
        resid = k.heading[sel] - th0[1:][sel]
        beta0[b] = _circular_mean(np.arctan2(np.sin(resid), np.cos(resid)))
    return s0, th0, beta0, scales0


def _initial_positions(track: Track, fs: FixSchedule, dt: np.ndarray,
                       s0: np.ndarray, th0: np.ndarray,
                       lean: float = 0.25):
    """Smoothed dead reckoning integrated, leaning gently toward the fixes.

    Integrating the smoothed starting kinematics puts the path on the
    process side of the variance split; an affine correction per inter-fix
    segment then moves fraction ``lean`` of the way to the reported
    coordinates at each fix.  The lean keeps the chains from starting far
    off the celestial observations, but deliberately does not interpolate
    them: the celestial noise is several times the local dead-reckoning
    spread, so an exactly fix-matching start would crash the fix scales'
    conditional posterior and clamp the path before it can relax.
    """
    n = track.n
    ref_x, ref_y = geo.cumulative_xy(track.lon, track.lat)
    px = np.concatenate([[0.0], np.cumsum(dt * s0[1:] * np.cos(th0[1:]))])
    py = np.concatenate([[0.0], np.cumsum(dt * s0[1:] * np.sin(th0[1:]))])

    def anchor(p: np.ndarray, ref: np.ndarray) -> np.ndarray:
        out = p.copy()
        prev = 0
        corr_prev = 0.0
        for i in fs.fix_indices:
            corr_i = corr_prev + lean * (ref[i] - (p[i] + corr_prev))
            w = np.linspace(0.0, 1.0, i - prev + 1)
            out[prev:i + 1] = p[prev:i + 1] \
                + corr_prev * (1.0 - w) + corr_i * w
            corr_prev = corr_i
            prev = i
        if prev < n - 1:
            out[prev:] = p[prev:] + corr_prev
        return out

    return anchor(px, ref_x), anchor(py, ref_y)


_HALF_NORMAL_MEDIAN = 0.6744897501960817  # Phi^-1(0.75)


class _BlockShiftMove:
    """Translate one contiguous block of path coordinates along one axis.

    The slow modes of the sampled path are whole-segment offsets between
    consecutive fixes: the interior of a segment can move together at the
    cost of only its two boundary increments and one fix residual, a change
    coordinatewise window updates reproduce only through many diffusive
    steps.  The tuned scalar step translates the block directly.
    """

    def __init__(self, idx: np.ndarray, label: str) -> None:
        self.idx = idx
        self.label = label

    def propose(self, z: np.ndarray, delta: float):
        z_new = z.copy()
        z_new[self.idx] += delta
        return z_new, 0.0


def _segment_blocks(fix_idx: np.ndarray, n: int) -> list:
    """Report-index blocks [fix_k .. fix_{k+1}-1] plus the pre-fix lead-in."""
    blocks = []
    if fix_idx[0] > 1:
        blocks.append(np.arange(1, fix_idx[0]))
    bounds = list(fix_idx) + [n]
    for a, b in zip(bounds[:-1], bounds[1:]):
        blocks.append(np.arange(a, b))
    return blocks


def _window_groups(n: int, off_px: int, off_py: int,
                   width: int = 4, stride: int = 3):
    """Overlapping position windows; east and north coordinates per report
    move jointly so each group gets a full adapted covariance."""
    groups = []
    lo = 1
    while True:
        hi = min(lo + width, n)
        idx = np.arange(lo - 1, hi - 1)
        groups.append(np.concatenate([off_px + idx, off_py + idx]))
        if hi >= n:
            break
        lo += stride
    return groups


def fit_track(track: Track, fs: FixSchedule, config: dict,
              k: Kinematics | None = None,
              priors: SsmPriors = SsmPriors()) -> mcmc.PosteriorSamples:
    """Sample the joint posterior and append derived per-report lon/lat.

    Args:
        track: An HQ2-cadence track.
        fs: Its fix schedule (must be non-empty).
        config: Sampler config ``{chains, warmup, draws, seed}``.
        k: Optional precomputed kinematics.
        priors: Prior scales.

    Returns:
        PosteriorSamples over parameters, heading biases, latents, and the
        derived ``lon[t]``/``lat[t]`` columns (degrees).
    """
    if k is None:
        k = empirical_kinematics(track)
    n = track.n
    if fs.m == 0:
        raise FittingError(f"track {track.id}: no celestial fixes; refusing to fit")
    nb = max(fs.m - 1, 0)
    try:
        pack = _data_pack(track, k, fs, priors)
        s0, th0, beta0, scales0 = _initial_state(track, k, fs, priors)
    except DataError as exc:
        raise FittingError(f"track {track.id}: {exc}") from exc
    sigma_s0, sigma_theta0, tau_s0, tau_theta0 = scales0
    px0, py0 = _initial_positions(track, fs, pack["dt"], s0, th0)
    # Start the fix scales on the residuals of the starting path so their
    # conditional posterior neither crashes toward zero nor has to descend
    # orders of magnitude when the measurement noise is genuinely tiny.
    res_x = (pack["fix_qx"] - px0[pack["fix_idx"]]) / pack["fix_clat"]
    res_y = pack["fix_qy"] - py0[pack["fix_idx"]]
    cap = 5.0 * priors.tau_xy_scale
    tau_x0 = min(max(float(np.sqrt(np.mean(res_x ** 2))), 0.1), cap)
    tau_y0 = min(max(float(np.sqrt(np.mean(res_y ** 2))), 0.1), cap)

    blocks = [
        mcmc.Block("ar", ["mu_s", "alpha_s", "sigma_s", "sigma_theta"],
                   ["positive", ("interval", 0.0, 1.0), "positive", "positive"]),
        mcmc.Block("obs_scales", ["tau_x", "tau_y", "tau_s", "tau_theta"], "positive"),
    ]
    if nb:
        blocks.append(mcmc.Block("beta", [f"beta[{b}]" for b in range(nb)], "circular"))
    blocks.append(mcmc.Block("init", ["s[0]", "theta[0]"],
                             ["positive", "circular"]))
    blocks.append(mcmc.Block(
        "path",
        [f"px[{t}]" for t in range(1, n)] + [f"py[{t}]" for t in range(1, n)],
        "unbounded"))
    space = mcmc.ParameterSpace(blocks)

    init = np.concatenate([
        [max(float(np.mean(s0)), 0.5), 0.5,
         sigma_s0, sigma_theta0, tau_x0, tau_y0, tau_s0, tau_theta0],
        beta0, [s0[0], th0[0]], px0[1:], py0[1:],
    ])

    groups = space.block_groups()[: 2 + bool(nb)]
    labels = [b.name for b in blocks[: 2 + bool(nb)]]
    # Ridge updates: each process/observation noise pair trades off variance
    # for the same data, so move them jointly with a learned covariance.
    groups.append(np.array([3, 7]))
    labels.append("theta_scales")
    groups.append(np.array([2, 6]))
    labels.append("speed_scales")
    off0 = 8 + nb
    off_px = off0 + 2
    off_py = off_px + (n - 1)
    groups.append(np.array([off0, off0 + 1]))
    labels.append("init")
    for gi, g in enumerate(_window_groups(n, off_px, off_py)):
        groups.append(g)
        labels.append(f"path_w{gi}")

    moves = []
    for bi, blk in enumerate(_segment_blocks(pack["fix_idx"], n)):
        moves.append(_BlockShiftMove(off_px + blk - 1, f"seg{bi}_x"))
        moves.append(_BlockShiftMove(off_py + blk - 1, f"seg{bi}_y"))

    target = lambda x: kernels.ssm_logpost_pos(x, **pack)  # noqa: E731

    # The scale parameters' conditional posteriors track whatever roughness
    # the latent path currently has, and they equilibrate much faster than
    # the path itself; released immediately they chase the unrelaxed start
    # and drag the chain into the degenerate obs-riding mode.  Holding them
    # at the moment-matched estimates for the first third of warmup lets the
    # path settle into its honest smoothed shape first.
    hold = int(config.get("warmup", 0)) // 3
    delay = {lab: hold for lab in
             ("ar", "obs_scales", "theta_scales", "speed_scales")}

    try:
        samples = mcmc.sample(target, space, init, config,
                              groups=groups, group_labels=labels,
                              moves=moves, delay=delay, init_jitter=0.02)
    except ConfigError:
        raise
    except (InitializationError, ModelError) as exc:
        raise FittingError(f"track {track.id}: {exc}") from exc

    # Derived columns: speeds/headings from displacement differences, and
    # per-report longitude/latitude from the sampled coordinates.
    dt = pack["dt"]
    px = np.concatenate([np.zeros((samples.draws.shape[0], 1)),
                         samples.draws[:, off_px:off_px + n - 1]], axis=1)
    py = np.concatenate([np.zeros((samples.draws.shape[0], 1)),
                         samples.draws[:, off_py:off_py + n - 1]], axis=1)
    ddx = np.diff(px, axis=1)
    ddy = np.diff(py, axis=1)
    s_der = np.hypot(ddx, ddy) / dt
    th_der = np.arctan2(ddy, ddx)
    lon0 = np.full(px.shape, track.lon[0])
    lat0 = np.full(px.shape, track.lat[0])
    lon, lat = geo.advance_xy(lon0, lat0, px, py)
    names = samples.names \
        + tuple(f"s[{t}]" for t in range(1, n)) \
        + tuple(f"theta[{t}]" for t in range(1, n)) \
        + tuple(f"lon[{t}]" for t in range(n)) \
        + tuple(f"lat[{t}]" for t in range(n))
    draws = np.concatenate(
        [samples.draws, s_der, th_der, np.degrees(lon), np.degrees(lat)], axis=1)
    meta = dict(samples.meta)
    meta.update({"track_id": track.id, "n_reports": n,
                 "fix_indices": [int(i) for i in fs.fix_indices]})
    return mcmc.PosteriorSamples(names, draws, samples.chains, meta)


# ------------------------------------------------------------- summaries


def _position_draws(samples: mcmc.PosteriorSamples, track: Track):
    n = track.n
    try:
        lon = np.column_stack([samples.column(f"lon[{t}]") for t in range(n)])
        lat = np.column_stack([samples.column(f"lat[{t}]") for t in range(n)])
    except ConfigError:
        raise DataError("samples carry no latent positions for this track") from None
    return np.radians(lon), np.radians(lat)


def position_uncertainty(samples: mcmc.PosteriorSamples, track: Track) -> PositionUncertainty:
    """Random/systematic/overall per-report position uncertainty."""
    lon, lat = _position_draws(samples, track)
    dx, dy = geo.pair_displacements_xy(track.lon, track.lat, lon, lat)
    std_x = dx.std(axis=0)
    std_y = dy.std(axis=0)
    bias_x = np.abs(dx.mean(axis=0))
    bias_y = np.abs(dy.mean(axis=0))
    coslat = np.cos(track.lat)
    return PositionUncertainty(
        std_x_km=std_x,
        std_y_km=std_y,
        std_lon_deg=std_x / (geo.KM_PER_DEGREE * coslat),
        std_lat_deg=std_y / geo.KM_PER_DEGREE,
        bias_x_km=bias_x,
        bias_y_km=bias_y,
        rmse_x_km=np.sqrt(bias_x**2 + std_x**2),
        rmse_y_km=np.sqrt(bias_y**2 + std_y**2),
    )


def posterior_predictive(samples: mcmc.PosteriorSamples, track: Track,
                         fs: FixSchedule, seed: int,
                         n_replicates: int = 100) -> list:
    """Replicate observed tracks from joint posterior draws.

    Each replicate takes one posterior draw of parameters and latents and
    regenerates the observables: dead-reckoned steps accumulate reported
    speed/heading noise, fix reports re-observe the latent displacement
    with celestial noise.  Replicates share the original timestamps.
    """
    n = track.n
    _position_draws(samples, track)  # reject samples fitted to another track
    nb = sum(1 for name in samples.names if name.startswith("beta["))
    n_draws = samples.draws.shape[0]
    idx_of = {name: i for i, name in enumerate(samples.names)}
    s_cols = [idx_of[f"s[{t}]"] for t in range(n)]
    beta_cols = [idx_of[f"beta[{b}]"] for b in range(nb)]
    th_cols = [idx_of[f"theta[{t}]"] for t in range(n)]
    dt = np.diff(track.times) / 3600.0
    beta_step = beta_interval_of_step(fs.fix_indices.astype(np.int64), n)
    fix_set = set(int(i) for i in fs.fix_indices)
    pick = substream(seed, "ppc-pick").integers(0, n_draws, size=n_replicates)

    out = []
    for r in range(n_replicates):
        row = samples.draws[pick[r]]
        rng = substream(seed, "ppc", r)
        s = row[s_cols]
        th = row[th_cols]
        beta = row[beta_cols] if nb else np.zeros(0)
        tau_x, tau_y = row[idx_of["tau_x"]], row[idx_of["tau_y"]]
        tau_s, tau_th = row[idx_of["tau_s"]], row[idx_of["tau_theta"]]
        px = np.concatenate([[0.0], np.cumsum(dt * s[1:] * np.cos(th[1:]))])
        py = np.concatenate([[0.0], np.cumsum(dt * s[1:] * np.sin(th[1:]))])
        qx = np.zeros(n)
        qy = np.zeros(n)
        for t in range(1, n):
            if t in fix_set:
                clat = math.cos(track.lat[t])
                qx[t] = px[t] + tau_x * clat * rng.standard_normal()
                qy[t] = py[t] + tau_y * rng.standard_normal()
            else:
                b = beta[beta_step[t - 1]] if beta_step[t - 1] >= 0 else 0.0
                shat = s[t] * (1.0 + tau_s * rng.standard_normal())
                that = th[t] + b + tau_th * rng.standard_normal()
                qx[t] = qx[t - 1] + dt[t - 1] * shat * math.cos(that)
                qy[t] = qy[t - 1] + dt[t - 1] * shat * math.sin(that)
        lon, lat = geo.advance_xy(np.full(n, track.lon[0]),
                                  np.full(n, track.lat[0]), qx, qy)
        out.append(Track(f"{track.id}#rep{r}", track.times.copy(), lon, lat))
    return out
