"""Blocked adaptive random-walk Metropolis sampler.

The sampler is generic: it draws from any log density over a vector of
named scalar coordinates organized into blocks, each coordinate carrying a
support descriptor (``"unbounded"``, ``"positive"``, ``("interval", a, b)``
or ``"circular"``).  Supports are handled by bijective transforms to an
unconstrained working space (log, logit, wrap) with the matching Jacobian
terms folded into the Metropolis ratio, so no emitted draw can violate its
support.

Updates are organized into *groups* of coordinates — by default one group
per block, but callers may pass overlapping index windows (used by the
state-space model to update latent trajectories in sliding windows).  Each
group owns an adaptive proposal: during warmup a Robbins–Monro recursion
tunes the step size toward 0.44 (scalar groups) or 0.234 (multivariate)
acceptance while a running estimate of the group's posterior covariance
shapes the proposal (full covariance up to 8 dimensions, diagonal above
that).  After warmup the kernel is frozen.

Everything is deterministic given the seed: chains use independent
counter-based substreams and run sequentially.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DiagnosticsError,
    FormatError,
    InitializationError,
    ModelError,
)
from .util import substream

__all__ = [
    "Block",
    "ParameterSpace",
    "PosteriorSamples",
    "Diagnostics",
    "ScaleMove",
    "AmplitudeMove",
    "sample",
    "diagnostics",
]

_TWO_PI = 2.0 * math.pi

# Support kind codes used in vectorized transforms.
_UNBOUNDED, _POSITIVE, _INTERVAL, _CIRCULAR = 0, 1, 2, 3

# Acceptance-rate targets for Robbins–Monro step-size adaptation.
_TARGET_SCALAR = 0.44
_TARGET_MULTI = 0.234

# Largest group dimension for which a full proposal covariance is learned.
_FULL_COV_MAX_DIM = 8


def _normalize_support(s):
    if s == "unbounded" or s == "positive" or s == "circular":
        return s
    if isinstance(s, (tuple, list)) and len(s) == 3 and s[0] == "interval":
        a, b = float(s[1]), float(s[2])
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ConfigError(f"interval support needs finite a < b, got ({a}, {b})")
        return ("interval", a, b)
    raise ConfigError(f"unknown support descriptor: {s!r}")


@dataclass(frozen=True)
class Block:
    """A named group of scalar coordinates with per-coordinate supports."""

    name: str
    coords: tuple
    supports: tuple

    def __init__(self, name: str, coords: Sequence[str], supports) -> None:
        coords = tuple(coords)
        if not coords:
            raise ConfigError(f"block {name!r} has no coordinates")
        if isinstance(supports, (str, tuple)) and (
            supports in ("unbounded", "positive", "circular")
            or (isinstance(supports, tuple) and supports and supports[0] == "interval")
        ):
            supports = [supports] * len(coords)
        supports = tuple(_normalize_support(s) for s in supports)
        if len(supports) != len(coords):
            raise ConfigError(
                f"block {name!r}: {len(coords)} coordinates but {len(supports)} supports"
            )
        object.__setattr__(self, "name", str(name))
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "supports", supports)


class ParameterSpace:
    """Named scalar coordinates partitioned into disjoint blocks."""

    def __init__(self, blocks: Sequence[Block]) -> None:
        blocks = tuple(blocks)
        if not blocks:
            raise ConfigError("parameter space needs at least one block")
        seen_blocks: set[str] = set()
        names: list[str] = []
        supports: list = []
        for b in blocks:
            if b.name in seen_blocks:
                raise ConfigError(f"duplicate block name {b.name!r}")
            seen_blocks.add(b.name)
            names.extend(b.coords)
            supports.extend(b.supports)
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ConfigError(f"coordinate names repeat across blocks: {dup}")
        self.blocks = blocks
        self.names = tuple(names)
        self.supports = tuple(supports)
        self._index = {n: i for i, n in enumerate(names)}
        # Precompute vectorized transform tables.
        self._kind = np.empty(len(names), dtype=np.int8)
        self._lo = np.zeros(len(names))
        self._hi = np.ones(len(names))
        for i, s in enumerate(self.supports):
            if s == "unbounded":
                self._kind[i] = _UNBOUNDED
            elif s == "positive":
                self._kind[i] = _POSITIVE
            elif s == "circular":
                self._kind[i] = _CIRCULAR
            else:
                self._kind[i] = _INTERVAL
                self._lo[i], self._hi[i] = s[1], s[2]

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ConfigError(f"unknown coordinate {name!r}") from None

    def block_groups(self) -> list[np.ndarray]:
        """Flat coordinate indices of each block, the default update groups."""
        out = []
        start = 0
        for b in self.blocks:
            out.append(np.arange(start, start + len(b.coords), dtype=np.intp))
            start += len(b.coords)
        return out

    # ---------------------------------------------------------- transforms

    def to_unconstrained(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ConfigError(f"point has shape {x.shape}, expected ({self.dim},)")
        z = x.copy()
        k = self._kind
        pos = k == _POSITIVE
        if np.any(pos):
            if np.any(x[pos] <= 0.0):
                bad = [self.names[i] for i in np.nonzero(pos & (x <= 0.0))[0]]
                raise InitializationError(f"coordinates not positive: {bad}")
            z[pos] = np.log(x[pos])
        itv = k == _INTERVAL
        if np.any(itv):
            lo, hi = self._lo[itv], self._hi[itv]
            u = (np.clip(x[itv], lo + 1e-12 * (hi - lo), hi - 1e-12 * (hi - lo)) - lo) / (hi - lo)
            if np.any((x[itv] < lo) | (x[itv] > hi)):
                bad = [self.names[i] for i in np.nonzero(itv)[0]
                       if not (self._lo[i] <= x[i] <= self._hi[i])]
                raise InitializationError(f"coordinates outside their interval: {bad}")
            z[itv] = np.log(u) - np.log1p(-u)
        circ = k == _CIRCULAR
        if np.any(circ):
            z[circ] = _wrap(x[circ])
        return z

    def from_unconstrained(self, z: np.ndarray):
        """Map working-space point to constrained space; return (x, log|J|)."""
        x = z.copy()
        k = self._kind
        logjac = 0.0
        pos = k == _POSITIVE
        if np.any(pos):
            x[pos] = np.exp(np.clip(z[pos], -700.0, 700.0))
            logjac += float(np.sum(z[pos]))
        itv = k == _INTERVAL
        if np.any(itv):
            lo, hi = self._lo[itv], self._hi[itv]
            za = np.abs(z[itv])
            sig = np.where(z[itv] >= 0.0, 1.0 / (1.0 + np.exp(-za)),
                           np.exp(-za) / (1.0 + np.exp(-za)))
            x[itv] = lo + (hi - lo) * sig
            logjac += float(np.sum(np.log(hi - lo) - za - 2.0 * np.log1p(np.exp(-za))))
        circ = k == _CIRCULAR
        if np.any(circ):
            x[circ] = _wrap(z[circ])
        return x, logjac

    def check_support(self, x: np.ndarray) -> None:
        """Raise unless every coordinate satisfies its support descriptor."""
        for i, s in enumerate(self.supports):
            v = x[i]
            ok = (
                math.isfinite(v)
                and (s != "positive" or v > 0.0)
                and (not isinstance(s, tuple) or s[1] <= v <= s[2])
            )
            if not ok:
                raise InitializationError(
                    f"coordinate {self.names[i]!r}={v!r} violates support {s!r}"
                )


def _wrap(x):
    return x - _TWO_PI * np.round(x / _TWO_PI)


@dataclass
class PosteriorSamples:
    """Posterior draws in constrained space, stacked across chains."""

    names: tuple
    draws: np.ndarray   # (n_total, dim) float64
    chains: np.ndarray  # (n_total,) int32 chain index
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.names = tuple(self.names)
        self.draws = np.asarray(self.draws, dtype=np.float64)
        self.chains = np.asarray(self.chains, dtype=np.int32)
        if self.draws.ndim != 2 or self.draws.shape[1] != len(self.names):
            raise FormatError(
                f"draws shape {self.draws.shape} does not match {len(self.names)} names"
            )
        if self.chains.shape != (self.draws.shape[0],):
            raise FormatError("chain labels must align with draws")

    @property
    def n_chains(self) -> int:
        return int(self.chains.max()) + 1 if self.chains.size else 0

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.names.index(name)
        except ValueError:
            raise ConfigError(f"unknown coordinate {name!r}") from None
        return self.draws[:, j]

    def split_by_chain(self, name: str) -> np.ndarray:
        """Draws of one coordinate as a (chains, draws_per_chain) matrix."""
        col = self.column(name)
        per = [col[self.chains == c] for c in range(self.n_chains)]
        counts = {len(p) for p in per}
        if len(counts) != 1:
            raise DiagnosticsError("chains have unequal draw counts")
        return np.stack(per)

    # -------------------------------------------------------------- text

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("chain,draw,")
        buf.write(",".join(self.names))
        buf.write("\n")
        counters: dict[int, int] = {}
        for i in range(self.draws.shape[0]):
            c = int(self.chains[i])
            d = counters.get(c, 0)
            counters[c] = d + 1
            buf.write(f"{c},{d},")
            buf.write(",".join(repr(float(v)) for v in self.draws[i]))
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PosteriorSamples":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise FormatError("empty sample CSV")
        header = lines[0].split(",")
        if header[:2] != ["chain", "draw"]:
            raise FormatError("sample CSV must start with chain,draw columns")
        names = tuple(header[2:])
        n = len(lines) - 1
        draws = np.empty((n, len(names)))
        chains = np.empty(n, dtype=np.int32)
        for i, ln in enumerate(lines[1:]):
            parts = ln.split(",")
            if len(parts) != len(names) + 2:
                raise FormatError(f"sample CSV row {i + 2} has {len(parts)} fields")
            chains[i] = int(parts[0])
            draws[i] = [float(v) for v in parts[2:]]
        return cls(names, draws, chains)

    # ------------------------------------------------------------ binary

    def to_bytes(self) -> bytes:
        header = json.dumps({"names": list(self.names)}).encode("utf-8")
        out = bytearray()
        out += b"PSB1"
        out += struct.pack("<I", len(header))
        out += header
        out += struct.pack("<QQ", self.draws.shape[0], self.draws.shape[1])
        out += self.chains.astype("<i4").tobytes()
        out += self.draws.astype("<f8").tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PosteriorSamples":
        if blob[:4] != b"PSB1":
            raise FormatError("not a posterior-sample binary blob")
        (hlen,) = struct.unpack_from("<I", blob, 4)
        header = json.loads(blob[8:8 + hlen].decode("utf-8"))
        off = 8 + hlen
        n, d = struct.unpack_from("<QQ", blob, off)
        off += 16
        chains = np.frombuffer(blob, dtype="<i4", count=n, offset=off).copy()
        off += 4 * n
        draws = np.frombuffer(blob, dtype="<f8", count=n * d, offset=off).reshape(n, d).copy()
        return cls(tuple(header["names"]), draws, chains)


@dataclass(frozen=True)
class Diagnostics:
    """Split-chain convergence summaries per coordinate."""

    rhat: Mapping[str, float]
    ess: Mapping[str, float]


# ------------------------------------------------------------ custom moves
#
# A scale parameter and the path whose amplitude it governs form a ridge
# that coordinatewise random-walk updates traverse extremely slowly: the
# path cannot loosen until the scale grows, and vice versa.  These moves
# shift a log-scale coordinate by delta while deterministically rescaling
# its satellite coordinates by e^delta, so a single proposal walks along
# the ridge; the map's log-Jacobian is returned for the Metropolis ratio.


class ScaleMove:
    """Rescale working-space satellites about an anchor coordinate (or 0).

    Suits satellites whose working-space deviations from the anchor scale
    linearly with the (log-transformed) scale coordinate, e.g. a random
    walk and its innovation scale.
    """

    def __init__(self, scale_index: int, satellites, anchor_index: int | None = None,
                 label: str = "scale-move") -> None:
        self.scale_index = int(scale_index)
        self.satellites = np.asarray(satellites, dtype=np.intp)
        self.anchor_index = None if anchor_index is None else int(anchor_index)
        self.label = label

    def propose(self, z: np.ndarray, delta: float):
        z2 = z.copy()
        z2[self.scale_index] += delta
        ref = 0.0 if self.anchor_index is None else z[self.anchor_index]
        z2[self.satellites] = ref + math.exp(delta) * (z[self.satellites] - ref)
        return z2, len(self.satellites) * delta


class AmplitudeMove:
    """Rescale positive satellites about a positive center coordinate.

    Satellites and center are log-transformed coordinates; the satellites'
    constrained values move as ``v' = c + e^delta (v - c)`` about the
    center's constrained value ``c``.  Proposals that would push any
    satellite non-positive are rejected outright.
    """

    def __init__(self, scale_index: int, satellites, center_index: int,
                 label: str = "amplitude-move") -> None:
        self.scale_index = int(scale_index)
        self.satellites = np.asarray(satellites, dtype=np.intp)
        self.center_index = int(center_index)
        self.label = label

    def propose(self, z: np.ndarray, delta: float):
        v = np.exp(z[self.satellites])
        c = math.exp(z[self.center_index])
        v2 = c + math.exp(delta) * (v - c)
        if np.any(v2 <= 0.0):
            return None
        z2 = z.copy()
        z2[self.scale_index] += delta
        z2[self.satellites] = np.log(v2)
        return z2, float(np.sum(delta + z[self.satellites] - z2[self.satellites]))


class _MoveState:
    def __init__(self, move) -> None:
        self.move = move
        self.log_step = math.log(0.1)
        self.accepted = 0
        self.proposed = 0
        # Independence-style moves draw their own randomness and have no
        # step size to tune.
        self.needs_rng = bool(getattr(move, "needs_rng", False))

    def adapt(self, accept_prob: float, iteration: int) -> None:
        if self.needs_rng:
            return
        gamma = (iteration + 1.0) ** -0.6
        self.log_step += gamma * (accept_prob - _TARGET_SCALAR)
        self.log_step = min(max(self.log_step, -12.0), 4.0)


# ---------------------------------------------------------------- sampler


class _GroupProposal:
    """Adaptation state for one update group."""

    def __init__(self, idx: np.ndarray, label: str) -> None:
        self.idx = idx
        self.label = label
        self.d = len(idx)
        self.target = _TARGET_SCALAR if self.d == 1 else _TARGET_MULTI
        self.log_step = math.log(2.38 / math.sqrt(self.d))
        self.scale = None  # Cholesky factor (d,d) or per-coord sd (d,)
        # Welford accumulators over the working-space coordinates.
        self._count = 0
        self._mean = np.zeros(self.d)
        self._m2 = np.zeros((self.d, self.d)) if self.d <= _FULL_COV_MAX_DIM else np.zeros(self.d)
        self.accepted = 0
        self.proposed = 0

    def observe(self, z: np.ndarray) -> None:
        v = z[self.idx]
        self._count += 1
        delta = v - self._mean
        self._mean += delta / self._count
        if self.d <= _FULL_COV_MAX_DIM:
            self._m2 += np.outer(delta, v - self._mean)
        else:
            self._m2 += delta * (v - self._mean)

    def reset_moments(self) -> None:
        self._count = 0
        self._mean[:] = 0.0
        self._m2[:] = 0.0

    def rebuild_scale(self) -> None:
        if self._count < max(20, 4 * self.d):
            return
        if self.d <= _FULL_COV_MAX_DIM:
            cov = self._m2 / (self._count - 1)
            cov = cov + np.eye(self.d) * (1e-10 + 1e-6 * np.trace(cov) / self.d)
            try:
                self.scale = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                self.scale = np.sqrt(np.diag(cov))
        else:
            var = self._m2 / (self._count - 1)
            self.scale = np.sqrt(np.maximum(var, 1e-12))

    def step_vector(self, rng: np.random.Generator) -> np.ndarray:
        xi = rng.standard_normal(self.d)
        step = math.exp(self.log_step)
        if self.scale is None:
            return step * xi
        if self.scale.ndim == 2:
            return step * (self.scale @ xi)
        return step * (self.scale * xi)

    def adapt(self, accept_prob: float, iteration: int) -> None:
        gamma = (iteration + 1.0) ** -0.6
        self.log_step += gamma * (accept_prob - self.target)
        self.log_step = min(max(self.log_step, -12.0), 8.0)


def _validate_config(config: Mapping) -> tuple:
    try:
        chains = int(config["chains"])
        warmup = int(config["warmup"])
        draws = int(config["draws"])
        seed = int(config["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"sampler config needs integer chains/warmup/draws/seed: {exc}")
    if chains < 1 or warmup < 0 or draws < 1:
        raise ConfigError("sampler config values must be positive")
    return chains, warmup, draws, seed


def sample(
    logdensity: Callable[[np.ndarray], float],
    space: ParameterSpace,
    init: np.ndarray,
    config: Mapping,
    *,
    groups: Sequence[np.ndarray] | None = None,
    group_labels: Sequence[str] | None = None,
    moves: Sequence | None = None,
    tempered: Callable[[float], Callable[[np.ndarray], float]] | None = None,
    delay: Mapping[str, int] | None = None,
    init_jitter: float = 0.1,
    trace: Callable[[int, int, np.ndarray], None] | None = None,
) -> PosteriorSamples:
    """Draw posterior samples with blocked adaptive random-walk Metropolis.

    Args:
        logdensity: Log target over the full constrained coordinate vector;
            may return ``-inf`` but never NaN.
        space: Coordinate names, blocks, and supports.
        init: Constrained-space starting point, finite under ``logdensity``.
        config: ``{chains, warmup, draws, seed}``.
        groups: Optional update groups as arrays of flat coordinate indices;
            may overlap.  Defaults to one group per block.
        group_labels: Optional labels aligned with ``groups``.
        moves: Optional custom moves interleaved after the group updates each
            sweep.  A move exposes ``propose(z, delta) -> (z_new, corr) |
            None`` and gets a tuned scalar ``delta``; a move with
            ``needs_rng = True`` instead exposes ``propose(z, rng, lam)`` and
            draws its own randomness (``lam`` is the current tempering
            weight, 1.0 outside the warmup ramp).  ``corr`` is added to the
            Metropolis log ratio.
        tempered: Optional family ``lam -> logdensity``; when given, sweeps
            in the first half of warmup target ``tempered(lam)`` with ``lam``
            ramping linearly from near 0 to 1, after which the full target
            takes over.  ``tempered(1.0)`` must equal ``logdensity``.  Lets
            chains settle into the dominant posterior basin before sharp
            likelihood terms switch on.
        delay: Optional map of group label to the first sweep at which that
            group starts updating; until then the group's coordinates stay
            at their initial values and adapt nothing.  Holding
            hyperparameters at moment-matched starts while a latent field
            relaxes breaks the feedback race in which the hyperparameters
            chase the field's unrelaxed shape.
        init_jitter: Scale of working-space perturbation of per-chain starts.
        trace: Optional observer called as ``trace(chain, sweep, x)`` with
            the constrained state after every sweep (warmup included).

    Returns:
        PosteriorSamples with ``chains*draws`` rows in constrained space.
    """
    chains, warmup, draws, seed = _validate_config(config)
    init = np.asarray(init, dtype=np.float64)
    space.check_support(init)
    z_init = space.to_unconstrained(init)
    x0, lj0 = space.from_unconstrained(z_init)
    f0 = float(logdensity(x0))
    if math.isnan(f0):
        raise ModelError("log density is NaN at the initial point",
                         coords=dict(zip(space.names, x0)))
    if f0 == -math.inf:
        raise InitializationError("log density is -inf at the initial point")

    if groups is None:
        groups = space.block_groups()
        labels = [b.name for b in space.blocks]
    else:
        groups = [np.asarray(g, dtype=np.intp) for g in groups]
        for g in groups:
            if g.size == 0 or np.any(g < 0) or np.any(g >= space.dim):
                raise ConfigError("update group indices out of range")
        labels = list(group_labels) if group_labels is not None else [
            f"group{j}" for j in range(len(groups))
        ]
    if len(labels) != len(groups):
        raise ConfigError("group labels do not align with groups")
    first_active = [0] * len(groups)
    if delay:
        unknown = set(delay) - set(labels)
        if unknown:
            raise ConfigError(f"delay labels not among groups: {sorted(unknown)}")
        for j, lab in enumerate(labels):
            if lab in delay:
                t0 = int(delay[lab])
                if t0 < 0:
                    raise ConfigError("delay sweeps must be >= 0")
                first_active[j] = t0

    moves = list(moves) if moves else []
    n_total = chains * draws
    all_draws = np.empty((n_total, space.dim))
    chain_ix = np.empty(n_total, dtype=np.int32)
    acc_rates = np.zeros((len(groups), chains))
    step_sizes = np.zeros((len(groups), chains))
    move_acc = np.zeros((len(moves), chains))

    row = 0
    for c in range(chains):
        rng = substream(seed, "mcmc-chain", c)
        props = [_GroupProposal(g, labels[j]) for j, g in enumerate(groups)]
        move_states = [_MoveState(mv) for mv in moves]

        # Perturb the start in working space, shrinking until finite.
        z = z_init.copy()
        if init_jitter > 0.0:
            noise = rng.standard_normal(space.dim)
            scale = init_jitter
            for _ in range(60):
                z_try = z_init + scale * noise
                x_try, lj_try = space.from_unconstrained(z_try)
                f_try = float(logdensity(x_try))
                if math.isnan(f_try):
                    raise ModelError("log density returned NaN",
                                     coords=dict(zip(space.names, x_try)))
                if math.isfinite(f_try):
                    z, x_cur, lj_cur, f_cur = z_try, x_try, lj_try, f_try
                    break
                scale *= 0.5
            else:
                z, x_cur, lj_cur, f_cur = z_init.copy(), x0, lj0, f0
        else:
            x_cur, lj_cur, f_cur = x0, lj0, f0

        half = warmup // 2
        ramp = tempered is not None and half > 0
        target = logdensity
        cur_lam = 1.0
        for t in range(warmup + draws):
            adapting = t < warmup
            if ramp and t <= half:
                lam = min(1.0, (t + 1) / half)
                if lam != cur_lam:
                    target = logdensity if lam >= 1.0 else tempered(lam)
                    cur_lam = lam
                    f_cur = float(target(x_cur))
                    if math.isnan(f_cur):
                        raise ModelError("log density returned NaN",
                                         coords=dict(zip(space.names, x_cur)))
            for gi, p in enumerate(props):
                if t < first_active[gi]:
                    continue
                dz = p.step_vector(rng)
                z_prop = z.copy()
                z_prop[p.idx] += dz
                x_prop, lj_prop = space.from_unconstrained(z_prop)
                f_prop = float(target(x_prop))
                if math.isnan(f_prop):
                    raise ModelError(
                        "log density returned NaN",
                        coords={space.names[i]: float(x_prop[i]) for i in p.idx},
                    )
                log_r = (f_prop + lj_prop) - (f_cur + lj_cur)
                a = 1.0 if log_r >= 0.0 else math.exp(log_r)
                if rng.random() < a:
                    z, x_cur, lj_cur, f_cur = z_prop, x_prop, lj_prop, f_prop
                    if not adapting:
                        p.accepted += 1
                if adapting:
                    p.adapt(a, t)
                    if t >= half:
                        p.observe(z)
                        if (t - half) % 100 == 99:
                            p.rebuild_scale()
                else:
                    p.proposed += 1
            for ms in move_states:
                if ms.needs_rng:
                    proposal = ms.move.propose(z, rng, cur_lam)
                else:
                    delta = math.exp(ms.log_step) * rng.standard_normal()
                    proposal = ms.move.propose(z, delta)
                a = 0.0
                if proposal is not None:
                    z_prop, corr = proposal
                    x_prop, lj_prop = space.from_unconstrained(z_prop)
                    f_prop = float(target(x_prop))
                    if math.isnan(f_prop):
                        raise ModelError("log density returned NaN",
                                         coords=dict(zip(space.names, x_prop)))
                    log_r = (f_prop + lj_prop) - (f_cur + lj_cur) + corr
                    a = 1.0 if log_r >= 0.0 else math.exp(log_r)
                    if rng.random() < a:
                        z, x_cur, lj_cur, f_cur = z_prop, x_prop, lj_prop, f_prop
                        if not adapting:
                            ms.accepted += 1
                if adapting:
                    ms.adapt(a, t)
                else:
                    ms.proposed += 1
            if t == half - 1:
                for p in props:
                    p.reset_moments()
            if trace is not None:
                trace(c, t, x_cur)
            if not adapting:
                all_draws[row] = x_cur
                chain_ix[row] = c
                row += 1
        for j, p in enumerate(props):
            acc_rates[j, c] = p.accepted / max(p.proposed, 1)
            step_sizes[j, c] = math.exp(p.log_step)
        for j, ms in enumerate(move_states):
            move_acc[j, c] = ms.accepted / max(ms.proposed, 1)

    meta = {
        "groups": labels,
        "acceptance": acc_rates.tolist(),
        "step_size": step_sizes.tolist(),
        "warmup": warmup,
        "draws": draws,
        "seed": seed,
    }
    if moves:
        meta["moves"] = [mv.label for mv in moves]
        meta["move_acceptance"] = move_acc.tolist()
    if tempered is not None:
        meta["tempered_warmup"] = warmup // 2
    if delay:
        meta["delay"] = {k: int(v) for k, v in delay.items()}
    return PosteriorSamples(space.names, all_draws, chain_ix, meta)


# ------------------------------------------------------------ diagnostics


def _split_halves(mat: np.ndarray) -> np.ndarray:
    """Split each row (chain) of ``mat`` into two halves."""
    n = mat.shape[1] // 2
    return np.concatenate([mat[:, :n], mat[:, n: 2 * n]], axis=0)


def _rhat(seqs: np.ndarray) -> float:
    m, n = seqs.shape
    means = seqs.mean(axis=1)
    w = float(np.mean(seqs.var(axis=1, ddof=1)))
    b = n * float(np.var(means, ddof=1))
    if w <= 0.0:
        return 1.0 if b <= 0.0 else math.inf
    var_plus = (n - 1) / n * w + b / n
    return math.sqrt(var_plus / w)


def _ess(seqs: np.ndarray) -> float:
    m, n = seqs.shape
    if n < 4:
        return float(m * n)
    centered = seqs - seqs.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, :n].real / n
    w = float(np.mean(seqs.var(axis=1, ddof=1)))
    b_over_n = float(np.var(seqs.mean(axis=1), ddof=1)) if m > 1 else 0.0
    var_plus = (n - 1) / n * w + b_over_n
    if var_plus <= 0.0:
        return float(m * n)
    mean_acov = acov.mean(axis=0)
    rho = 1.0 - (w - mean_acov) / var_plus
    rho[0] = 1.0
    # Geyer initial monotone positive sequence on even/odd paired sums.
    psum_prev = math.inf
    tau = -1.0
    k = 0
    while k + 1 < n:
        pair = rho[k] + rho[k + 1]
        if pair < 0.0:
            break
        pair = min(pair, psum_prev)
        tau += 2.0 * pair
        psum_prev = pair
        k += 2
    tau = max(tau, 1e-12)
    ess = m * n / tau
    return float(min(ess, m * n))


def diagnostics(s: PosteriorSamples) -> Diagnostics:
    """Split-chain R-hat and autocorrelation ESS for every coordinate."""
    if s.n_chains < 2:
        raise DiagnosticsError("diagnostics need at least two chains")
    per_chain = np.bincount(s.chains)
    if np.any(per_chain < 100):
        raise DiagnosticsError("diagnostics need at least 100 draws per chain")
    rhat: dict[str, float] = {}
    ess: dict[str, float] = {}
    for name in s.names:
        mat = s.split_by_chain(name)
        halves = _split_halves(mat)
        rhat[name] = _rhat(halves)
        ess[name] = _ess(halves)
    return Diagnostics(rhat=rhat, ess=ess)
