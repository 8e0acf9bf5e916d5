"""Hot numerical kernels with numba acceleration and a numpy fallback.

The state-space log posterior is evaluated tens of thousands of times per
track fit, so it gets two interchangeable implementations: a numba
``@njit`` scalar-loop version and a vectorized pure-numpy version.  The
environment variable ``SHIPNAV_NUMBA=0`` selects the numpy path (also used
automatically when numba is unavailable); both produce the same values to
floating-point roundoff.  ``benchmarks/bench_kernels.py`` times the two.

Term-level helpers (`gaussian_logpdf`, `trunc_normal_logpdf`, `log_phi`)
are exposed for direct verification against analytic values.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.special import erfc as _erfc

__all__ = [
    "USING_NUMBA",
    "log_phi",
    "gaussian_logpdf",
    "trunc_normal_logpdf",
    "ssm_logpost",
    "ssm_logpost_numpy",
    "ssm_logpost_pos",
    "ssm_logpost_pos_numpy",
]

LOG_2PI = math.log(2.0 * math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
TWO_PI = 2.0 * math.pi


def _numba_enabled() -> bool:
    flag = os.environ.get("SHIPNAV_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USING_NUMBA = _numba_enabled()


def log_phi(x):
    """log of the standard normal CDF, stable for moderate arguments."""
    return np.log(0.5 * _erfc(-np.asarray(x, dtype=np.float64) * _INV_SQRT2))


def gaussian_logpdf(x, mean, sd):
    """Normal log density, with the full normalizing constant."""
    z = (np.asarray(x, dtype=np.float64) - mean) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI


def trunc_normal_logpdf(x, mean, sd, lower=0.0):
    """Log density of a normal truncated below at ``lower``."""
    x = np.asarray(x, dtype=np.float64)
    out = gaussian_logpdf(x, mean, sd) - log_phi((mean - lower) / sd)
    return np.where(x < lower, -np.inf, out)


# --------------------------------------------------------------------------
# State-space log posterior
#
# Coordinate vector layout (all constrained values):
#   [mu_s, alpha_s, sigma_s, sigma_theta, tau_x, tau_y, tau_s, tau_theta,
#    beta[0..nb-1], s[0..n-1], theta[0..n-1]]
#
# Data pack (one array per argument, precomputed per track):
#   dt        (n-1,) hours of step j (report j -> j+1)
#   obs_s     (n-1,) reported speed of step j, km/hr
#   obs_h     (n-1,) reported heading of step j, rad
#   obs_use   (n-1,) uint8, 1 when step j contributes speed/heading terms
#   beta_step (n-1,) int64 heading-bias interval of step j, -1 for none
#   fix_idx   (m,) int64 report indices with a position observation
#   fix_qx/qy (m,) reported cumulative displacement at those reports, km
#   fix_clat  (m,) cos(latitude) there
#   prior     (7,) [mu0, mu_scale, tau_xy_scale, tau_s_scale,
#                   tau_theta_scale, sigma_s_scale, sigma_theta_scale]
# --------------------------------------------------------------------------


def ssm_logpost_numpy(vec, dt, obs_s, obs_h, obs_use, beta_step,
                      fix_idx, fix_qx, fix_qy, fix_clat, prior,
                      obs_weight=1.0):
    n = dt.shape[0] + 1
    nb = vec.shape[0] - 8 - 2 * n
    mu_s, alpha_s, sigma_s, sigma_theta = vec[0], vec[1], vec[2], vec[3]
    tau_x, tau_y, tau_s, tau_theta = vec[4], vec[5], vec[6], vec[7]
    beta = vec[8:8 + nb]
    s = vec[8 + nb:8 + nb + n]
    th = vec[8 + nb + n:8 + nb + 2 * n]

    lp = 0.0
    # Speed AR(1) transitions with lower truncation at zero.
    m = mu_s + alpha_s * (s[:-1] - mu_s)
    z = (s[1:] - m) / sigma_s
    lp += float(np.sum(-0.5 * z * z - np.log(sigma_s) - 0.5 * LOG_2PI
                       - log_phi(m / sigma_s)))
    # Initial speed from the stationary distribution of the AR, truncated.
    sd0 = sigma_s / math.sqrt(1.0 - alpha_s * alpha_s)
    z0 = (s[0] - mu_s) / sd0
    lp += -0.5 * z0 * z0 - math.log(sd0) - 0.5 * LOG_2PI \
        - float(log_phi(mu_s / sd0))
    # Heading random walk (nearest-image wrapped residual) + flat start.
    dth = th[1:] - th[:-1]
    dth = dth - TWO_PI * np.floor(dth / TWO_PI + 0.5)
    lp += float(np.sum(-0.5 * (dth / sigma_theta) ** 2
                       - np.log(sigma_theta) - 0.5 * LOG_2PI))
    lp += -math.log(TWO_PI)

    # Dead-reckoning observations at non-fix steps, scaled by obs_weight
    # (likelihood-tempering hook: 0 drops the speed/heading report terms,
    # 1 is the full posterior).
    s_step = s[1:]
    th_step = th[1:]
    use = obs_use.astype(bool)
    sd_s = tau_s * s_step[use]
    zs = (obs_s[use] - s_step[use]) / sd_s
    lp += obs_weight * float(np.sum(-0.5 * zs * zs - np.log(sd_s)
                                    - 0.5 * LOG_2PI))
    b = np.where(beta_step >= 0, beta[np.maximum(beta_step, 0)], 0.0) if nb > 0 \
        else np.zeros(n - 1)
    r = obs_h[use] - th_step[use] - b[use]
    r = r - TWO_PI * np.floor(r / TWO_PI + 0.5)
    lp += obs_weight * float(np.sum(-0.5 * (r / tau_theta) ** 2
                                    - math.log(tau_theta) - 0.5 * LOG_2PI))

    # Celestial position observations at fix reports.
    if fix_idx.shape[0] > 0:
        px = np.concatenate([[0.0], np.cumsum(dt * s_step * np.cos(th_step))])
        py = np.concatenate([[0.0], np.cumsum(dt * s_step * np.sin(th_step))])
        sx = tau_x * fix_clat
        zx = (fix_qx - px[fix_idx]) / sx
        zy = (fix_qy - py[fix_idx]) / tau_y
        lp += float(np.sum(-0.5 * zx * zx - np.log(sx) - 0.5 * LOG_2PI))
        lp += float(np.sum(-0.5 * zy * zy - math.log(tau_y) - 0.5 * LOG_2PI))

    # Priors: truncated normal on mu_s, half normals on the scales,
    # uniform on alpha_s and the heading biases.
    lp += -0.5 * ((mu_s - prior[0]) / prior[1]) ** 2
    lp += -0.5 * ((tau_x / prior[2]) ** 2 + (tau_y / prior[2]) ** 2)
    lp += -0.5 * (tau_s / prior[3]) ** 2
    lp += -0.5 * (tau_theta / prior[4]) ** 2
    lp += -0.5 * (sigma_s / prior[5]) ** 2
    lp += -0.5 * (sigma_theta / prior[6]) ** 2
    return lp


def ssm_logpost_pos_numpy(vec, dt, obs_s, obs_h, obs_use, beta_step,
                          fix_idx, fix_qx, fix_qy, fix_clat, prior,
                          obs_weight=1.0):
    """Log posterior over the position parameterization of the latent path.

    Layout: ``[8 params, beta[0..nb-1], s0, theta0, px[1..n-1], py[1..n-1]]``
    where ``(px[t], py[t])`` is the east/north displacement (km) of report t
    from report 0.  Same total length as the speed/heading layout.  Speeds
    and headings are recovered from consecutive displacement differences and
    the change of variables contributes ``-sum(log(dt_t^2 * s_t))``.  In this
    coordinate system every likelihood term is local: a position fix
    constrains a single coordinate pair instead of the whole upstream path.
    """
    n = dt.shape[0] + 1
    nb = vec.shape[0] - 8 - 2 * n
    s0 = vec[8 + nb]
    th0 = vec[8 + nb + 1]
    px = vec[8 + nb + 2:8 + nb + 1 + n]
    py = vec[8 + nb + 1 + n:]
    ddx = np.diff(px, prepend=0.0)
    ddy = np.diff(py, prepend=0.0)
    r = np.hypot(ddx, ddy)
    if not np.all(r > 0.0):
        return -math.inf
    s_step = r / dt
    th_step = np.arctan2(ddy, ddx)
    vec_st = np.concatenate([vec[:8 + nb], [s0], s_step, [th0], th_step])
    lp = ssm_logpost_numpy(vec_st, dt, obs_s, obs_h, obs_use, beta_step,
                           fix_idx, fix_qx, fix_qy, fix_clat, prior,
                           obs_weight)
    return lp - float(np.sum(2.0 * np.log(dt) + np.log(s_step)))


def _build_numba_kernel():
    from numba import njit

    @njit(cache=True, fastmath=False)
    def ssm_logpost_nb(vec, dt, obs_s, obs_h, obs_use, beta_step,
                       fix_idx, fix_qx, fix_qy, fix_clat, prior,
                       obs_weight=1.0):
        n = dt.shape[0] + 1
        nb = vec.shape[0] - 8 - 2 * n
        mu_s = vec[0]
        alpha_s = vec[1]
        sigma_s = vec[2]
        sigma_theta = vec[3]
        tau_x = vec[4]
        tau_y = vec[5]
        tau_s = vec[6]
        tau_theta = vec[7]
        off_b = 8
        off_s = 8 + nb
        off_t = 8 + nb + n

        lp = 0.0
        sd0 = sigma_s / math.sqrt(1.0 - alpha_s * alpha_s)
        z0 = (vec[off_s] - mu_s) / sd0
        lp += -0.5 * z0 * z0 - math.log(sd0) - 0.5 * LOG_2PI \
            - math.log(0.5 * math.erfc(-(mu_s / sd0) * _INV_SQRT2))
        lp += -math.log(TWO_PI)

        nfix = fix_idx.shape[0]
        fk = 0
        px = 0.0
        py = 0.0
        for j in range(n - 1):
            s_prev = vec[off_s + j]
            s_cur = vec[off_s + j + 1]
            th_prev = vec[off_t + j]
            th_cur = vec[off_t + j + 1]
            # transition terms
            m = mu_s + alpha_s * (s_prev - mu_s)
            z = (s_cur - m) / sigma_s
            lp += -0.5 * z * z - math.log(sigma_s) - 0.5 * LOG_2PI \
                - math.log(0.5 * math.erfc(-(m / sigma_s) * _INV_SQRT2))
            dth = th_cur - th_prev
            dth = dth - TWO_PI * math.floor(dth / TWO_PI + 0.5)
            lp += -0.5 * (dth / sigma_theta) ** 2 \
                - math.log(sigma_theta) - 0.5 * LOG_2PI
            # observation terms for the step into report j+1
            if obs_use[j] != 0:
                sd_s = tau_s * s_cur
                zs = (obs_s[j] - s_cur) / sd_s
                lp += obs_weight * (-0.5 * zs * zs - math.log(sd_s)
                                    - 0.5 * LOG_2PI)
                bb = 0.0
                if beta_step[j] >= 0:
                    bb = vec[off_b + beta_step[j]]
                r = obs_h[j] - th_cur - bb
                r = r - TWO_PI * math.floor(r / TWO_PI + 0.5)
                lp += obs_weight * (-0.5 * (r / tau_theta) ** 2
                                    - math.log(tau_theta) - 0.5 * LOG_2PI)
            # advance the dead-reckoned displacement and visit fixes
            px += dt[j] * s_cur * math.cos(th_cur)
            py += dt[j] * s_cur * math.sin(th_cur)
            if fk < nfix and fix_idx[fk] == j + 1:
                sx = tau_x * fix_clat[fk]
                zx = (fix_qx[fk] - px) / sx
                zy = (fix_qy[fk] - py) / tau_y
                lp += -0.5 * zx * zx - math.log(sx) - 0.5 * LOG_2PI
                lp += -0.5 * zy * zy - math.log(tau_y) - 0.5 * LOG_2PI
                fk += 1

        lp += -0.5 * ((mu_s - prior[0]) / prior[1]) ** 2
        lp += -0.5 * ((tau_x / prior[2]) ** 2 + (tau_y / prior[2]) ** 2)
        lp += -0.5 * (tau_s / prior[3]) ** 2
        lp += -0.5 * (tau_theta / prior[4]) ** 2
        lp += -0.5 * (sigma_s / prior[5]) ** 2
        lp += -0.5 * (sigma_theta / prior[6]) ** 2
        return lp

    @njit(cache=True, fastmath=False)
    def ssm_logpost_pos_nb(vec, dt, obs_s, obs_h, obs_use, beta_step,
                           fix_idx, fix_qx, fix_qy, fix_clat, prior,
                           obs_weight=1.0):
        n = dt.shape[0] + 1
        nb = vec.shape[0] - 8 - 2 * n
        mu_s = vec[0]
        alpha_s = vec[1]
        sigma_s = vec[2]
        sigma_theta = vec[3]
        tau_x = vec[4]
        tau_y = vec[5]
        tau_s = vec[6]
        tau_theta = vec[7]
        off_b = 8
        off0 = 8 + nb
        off_px = 8 + nb + 2
        off_py = off_px + (n - 1)

        lp = 0.0
        sd0 = sigma_s / math.sqrt(1.0 - alpha_s * alpha_s)
        z0 = (vec[off0] - mu_s) / sd0
        lp += -0.5 * z0 * z0 - math.log(sd0) - 0.5 * LOG_2PI \
            - math.log(0.5 * math.erfc(-(mu_s / sd0) * _INV_SQRT2))
        lp += -math.log(TWO_PI)

        nfix = fix_idx.shape[0]
        fk = 0
        s_prev = vec[off0]
        th_prev = vec[off0 + 1]
        px_prev = 0.0
        py_prev = 0.0
        for j in range(n - 1):
            x = vec[off_px + j]
            y = vec[off_py + j]
            dx = x - px_prev
            dy = y - py_prev
            rr = math.sqrt(dx * dx + dy * dy)
            if rr <= 0.0:
                return -math.inf
            s_cur = rr / dt[j]
            th_cur = math.atan2(dy, dx)
            # change of variables from (s, theta) to displacements
            lp += -2.0 * math.log(dt[j]) - math.log(s_cur)
            # transition terms
            m = mu_s + alpha_s * (s_prev - mu_s)
            z = (s_cur - m) / sigma_s
            lp += -0.5 * z * z - math.log(sigma_s) - 0.5 * LOG_2PI \
                - math.log(0.5 * math.erfc(-(m / sigma_s) * _INV_SQRT2))
            dth = th_cur - th_prev
            dth = dth - TWO_PI * math.floor(dth / TWO_PI + 0.5)
            lp += -0.5 * (dth / sigma_theta) ** 2 \
                - math.log(sigma_theta) - 0.5 * LOG_2PI
            # observation terms for the step into report j+1
            if obs_use[j] != 0:
                sd_s = tau_s * s_cur
                zs = (obs_s[j] - s_cur) / sd_s
                lp += obs_weight * (-0.5 * zs * zs - math.log(sd_s)
                                    - 0.5 * LOG_2PI)
                bb = 0.0
                if beta_step[j] >= 0:
                    bb = vec[off_b + beta_step[j]]
                r = obs_h[j] - th_cur - bb
                r = r - TWO_PI * math.floor(r / TWO_PI + 0.5)
                lp += obs_weight * (-0.5 * (r / tau_theta) ** 2
                                    - math.log(tau_theta) - 0.5 * LOG_2PI)
            # a fix observes this report's coordinates directly
            if fk < nfix and fix_idx[fk] == j + 1:
                sx = tau_x * fix_clat[fk]
                zx = (fix_qx[fk] - x) / sx
                zy = (fix_qy[fk] - y) / tau_y
                lp += -0.5 * zx * zx - math.log(sx) - 0.5 * LOG_2PI
                lp += -0.5 * zy * zy - math.log(tau_y) - 0.5 * LOG_2PI
                fk += 1
            s_prev = s_cur
            th_prev = th_cur
            px_prev = x
            py_prev = y

        lp += -0.5 * ((mu_s - prior[0]) / prior[1]) ** 2
        lp += -0.5 * ((tau_x / prior[2]) ** 2 + (tau_y / prior[2]) ** 2)
        lp += -0.5 * (tau_s / prior[3]) ** 2
        lp += -0.5 * (tau_theta / prior[4]) ** 2
        lp += -0.5 * (sigma_s / prior[5]) ** 2
        lp += -0.5 * (sigma_theta / prior[6]) ** 2
        return lp

    return ssm_logpost_nb, ssm_logpost_pos_nb


if USING_NUMBA:
    ssm_logpost, ssm_logpost_pos = _build_numba_kernel()
else:
    ssm_logpost = ssm_logpost_numpy
    ssm_logpost_pos = ssm_logpost_pos_numpy
