"""Population-level pooling of per-track noise-scale posteriors.

Track-level fits yield posterior draws of the four navigation noise scales
(``tau_x``, ``tau_y``, ``tau_s``, ``tau_theta``).  Pooling treats each
track's draws of a scale as exchangeable lognormal samples around a
track-level median, and the track medians as lognormal around a population
median::

    log tau[j, i] ~ N(log mu_j, eta_j**2)     i.i.d. over draws i
    log mu_j      ~ N(log mu,   gamma**2)     i.i.d. over tracks j

``mu`` is the population median in natural units, ``gamma`` the
across-track log spread.  Given its track level a track's draws are
independent, so the likelihood depends on the draws only through the
per-track count, log mean and log variance; pooling cost is flat in the
number of retained draws.  The four scale families are fitted
independently, each with its own blocked adaptive sampler run.

Hyperpriors: ``log mu ~ N(log m0, 1)`` with per-family medians ``m0``
(configurable, defaults in :data:`PRIOR_MEDIANS`), and half-Normal(1) on
``gamma`` and every ``eta_j``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import mcmc
from .errors import ConfigError, DataError
from .util import substream

__all__ = [
    "FAMILIES",
    "PRIOR_MEDIANS",
    "PooledInput",
    "PopulationPosterior",
    "from_track_samples",
    "pool",
    "empirical_hyperparameters",
]

FAMILIES = ("tau_x", "tau_y", "tau_s", "tau_theta")

# Hyperprior medians for the population log-median, in natural units (km for
# the fix scales, fraction / radians for the dead-reckoning scales).
PRIOR_MEDIANS = {"tau_x": 30.0, "tau_y": 25.0, "tau_s": 0.2, "tau_theta": 0.2}

# Fewest posterior draws per track that make a track-level summary credible.
_MIN_DRAWS = 100

# Draws retained per track before computing sufficient statistics.  Draws are
# i.i.d. given the track level, so thinning only widens Monte-Carlo error.
_DEFAULT_THIN = 500

_SUMMARY_QUANTILES = (5.0, 25.0, 50.0, 75.0, 95.0)


class PooledInput:
    """Per-track posterior draws of the four noise scales.

    Tracks are normalized to a deterministic order (sorted by id) so the
    pooled posterior cannot depend on input order.  Each family must supply
    one 1-D array of positive draws per track, at least 100 draws each.
    """

    __slots__ = ("track_ids", "draws")

    def __init__(self, track_ids: Sequence[str], draws: Mapping[str, Sequence]):
        ids = [str(t) for t in track_ids]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate track ids in pooled input")
        missing = [f for f in FAMILIES if f not in draws]
        if missing:
            raise DataError(f"pooled input lacks scale families: {missing}")
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        by_family: dict[str, tuple] = {}
        for fam in FAMILIES:
            cols = draws[fam]
            if len(cols) != len(ids):
                raise DataError(
                    f"{fam}: {len(cols)} draw arrays for {len(ids)} tracks")
            arrs = []
            for i in order:
                a = np.asarray(cols[i], dtype=np.float64).ravel()
                if a.size < _MIN_DRAWS:
                    raise DataError(
                        f"track {ids[i]}: only {a.size} {fam} draws "
                        f"(need >= {_MIN_DRAWS})")
                if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
                    raise DataError(f"track {ids[i]}: non-positive {fam} draw")
                arrs.append(a)
            by_family[fam] = tuple(arrs)
        self.track_ids = tuple(ids[i] for i in order)
        self.draws = by_family

    @property
    def n_tracks(self) -> int:
        return len(self.track_ids)


def from_track_samples(samples: Sequence[mcmc.PosteriorSamples]) -> PooledInput:
    """Collect the noise-scale columns of per-track posterior dumps."""
    ids: list[str] = []
    cols: dict[str, list] = {f: [] for f in FAMILIES}
    for s in samples:
        tid = s.meta.get("track_id")
        if tid is None:
            raise DataError("posterior samples carry no track_id")
        ids.append(str(tid))
        for fam in FAMILIES:
            cols[fam].append(s.column(fam))
    return PooledInput(ids, cols)


@dataclass(frozen=True)
class PopulationPosterior:
    """Posterior over population medians and spreads, one fit per family.

    Each family's samples hold ``mu`` (population median, natural units),
    ``gamma`` (log-scale spread) and per-track ``mu[<id>]`` / ``eta[<id>]``.
    """

    track_ids: tuple
    families: Mapping[str, mcmc.PosteriorSamples]

    def summary(self) -> dict:
        """Quantiles {5,25,50,75,95}% and std of each population median."""
        out: dict[str, dict] = {}
        for fam in FAMILIES:
            mu = self.families[fam].column("mu")
            qs = np.percentile(mu, _SUMMARY_QUANTILES)
            entry = {f"{int(q)}%": float(v) for q, v in zip(_SUMMARY_QUANTILES, qs)}
            entry["std"] = float(mu.std())
            out[fam] = entry
        return out


def _suff_stats(arrs: Sequence[np.ndarray], thin: int):
    """Per-track (count, log mean, log variance) after even thinning."""
    J = len(arrs)
    n = np.empty(J)
    m = np.empty(J)
    v = np.empty(J)
    for j, a in enumerate(arrs):
        if a.size > thin:
            keep = np.floor(np.linspace(0.0, a.size, thin, endpoint=False))
            a = a[keep.astype(np.intp)]
        la = np.log(a)
        n[j] = la.size
        m[j] = float(la.mean())
        v[j] = float(la.var())
    return n, m, v


def _fit_family(arrs: Sequence[np.ndarray], track_ids: tuple, fam: str,
                config: Mapping, prior_median: float, thin: int,
                seed: int) -> mcmc.PosteriorSamples:
    nj, mj, vj = _suff_stats(arrs, thin)
    J = len(arrs)
    lm0 = math.log(prior_median)

    def logdensity(x: np.ndarray) -> float:
        # Guard against under/overflow of the positive transform; the
        # density itself is finite on (0, inf)^dim.
        if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
            return -math.inf
        mu, gamma = x[0], x[1]
        mu_j = x[2:2 + J]
        eta_j = x[2 + J:]
        lm = math.log(mu)
        lmj = np.log(mu_j)
        # Hyperpriors: lognormal on mu (density w.r.t. mu itself), half
        # normal on gamma and the eta_j.
        lp = -0.5 * (lm - lm0) ** 2 - lm
        lp += -0.5 * gamma * gamma - 0.5 * float(eta_j @ eta_j)
        # Track medians around the population median.
        r = lmj - lm
        lp += -J * math.log(gamma) - float(r @ r) / (2.0 * gamma * gamma) \
            - float(lmj.sum())
        # Per-track draws enter through their sufficient statistics.
        lp += float(np.sum(-nj * np.log(eta_j)
                           - nj * (vj + (mj - lmj) ** 2) / (2.0 * eta_j ** 2)))
        return lp

    blocks = [
        mcmc.Block("population", ("mu", "gamma"), "positive"),
        mcmc.Block("track_medians", tuple(f"mu[{t}]" for t in track_ids),
                   "positive"),
        mcmc.Block("track_spreads", tuple(f"eta[{t}]" for t in track_ids),
                   "positive"),
    ]
    space = mcmc.ParameterSpace(blocks)
    # The population pair and each track's (median, spread) pair are the
    # tightly coupled coordinates; update them jointly.
    groups = [np.array([0, 1], dtype=np.intp)]
    labels = ["population"]
    for j in range(J):
        groups.append(np.array([2 + j, 2 + J + j], dtype=np.intp))
        labels.append(f"track{j}")

    x0 = np.empty(2 + 2 * J)
    x0[0] = math.exp(float(mj.mean()))
    x0[1] = max(float(mj.std()), 0.05)
    x0[2:2 + J] = np.exp(mj)
    x0[2 + J:] = np.maximum(np.sqrt(vj), 1e-3)

    cfg = dict(config)
    cfg["seed"] = seed
    samples = mcmc.sample(logdensity, space, x0, cfg,
                          groups=groups, group_labels=labels)
    samples.meta.update({
        "family": fam,
        "track_ids": list(track_ids),
        "prior_median": prior_median,
        "thin": thin,
    })
    return samples


def pool(pin: PooledInput, config: Mapping) -> PopulationPosterior:
    """Fit the lognormal-lognormal hierarchy to each scale family.

    ``config`` holds the sampler settings ``{chains, warmup, draws, seed}``
    plus optionally ``prior_medians`` (per-family overrides of
    :data:`PRIOR_MEDIANS`) and ``thin`` (max draws kept per track,
    default 500).  The four families run concurrently on threads; each
    family derives its own seed substream.
    """
    if pin.n_tracks < 3:
        raise DataError(f"pooling needs at least 3 tracks, got {pin.n_tracks}")
    medians = dict(PRIOR_MEDIANS)
    overrides = config.get("prior_medians", {})
    unknown = set(overrides) - set(FAMILIES)
    if unknown:
        raise ConfigError(f"prior_medians for unknown families: {sorted(unknown)}")
    medians.update(overrides)
    if any(not (m > 0.0) for m in medians.values()):
        raise ConfigError("prior medians must be positive")
    thin = int(config.get("thin", _DEFAULT_THIN))
    if thin < 1:
        raise ConfigError("thin must be a positive draw count")
    try:
        seed = int(config["seed"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("pool config needs an integer seed") from None
    base = {k: config[k] for k in ("chains", "warmup", "draws") if k in config}

    fits: dict[str, mcmc.PosteriorSamples] = {}
    with ThreadPoolExecutor(max_workers=len(FAMILIES)) as ex:
        futures = {
            fam: ex.submit(
                _fit_family, pin.draws[fam], pin.track_ids, fam, base,
                medians[fam], thin,
                int(substream(seed, "pool", fam).integers(0, 2 ** 31 - 1)),
            )
            for fam in FAMILIES
        }
        for fam, fut in futures.items():
            fits[fam] = fut.result()
    return PopulationPosterior(pin.track_ids, fits)


def empirical_hyperparameters(p: PopulationPosterior) -> dict:
    """Posterior means of each family's population median and log spread."""
    out: dict[str, float] = {}
    for fam in FAMILIES:
        s = p.families[fam]
        out[f"mu_{fam}"] = float(s.column("mu").mean())
        out[f"gamma_{fam}"] = float(s.column("gamma").mean())
    return out
