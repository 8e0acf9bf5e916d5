import math

import numpy as np
import pytest

from shipnav import mcmc
from shipnav.errors import (
    ConfigError,
    DiagnosticsError,
    InitializationError,
    ModelError,
)


def space_1d(support="unbounded", name="x"):
    return mcmc.ParameterSpace([mcmc.Block("b", [name], [support])])


CFG = {"chains": 4, "warmup": 1000, "draws": 5000, "seed": 7}


# ------------------------------------------------------------ basic targets


def test_standard_gaussian_moments():
    s = mcmc.sample(lambda x: -0.5 * x[0] ** 2, space_1d(), [0.5], CFG)
    assert s.draws.shape == (20000, 1)
    assert abs(s.draws.mean()) < 0.05
    assert s.draws.var() == pytest.approx(1.0, rel=0.05)


def test_correlated_gaussian_covariance():
    cov = np.array([[1.0, 0.8], [0.8, 1.0]])
    prec = np.linalg.inv(cov)

    def logp(x):
        return -0.5 * x @ prec @ x

    space = mcmc.ParameterSpace([mcmc.Block("xy", ["x", "y"], "unbounded")])
    cfg = {"chains": 4, "warmup": 1500, "draws": 5000, "seed": 11}
    s = mcmc.sample(logp, space, [0.0, 0.0], cfg)
    est = np.cov(s.draws.T)
    np.testing.assert_allclose(est, cov, atol=0.1)
    assert est[0, 1] == pytest.approx(0.8, abs=0.08)


def test_exponential_positive_support():
    s = mcmc.sample(lambda x: -x[0], space_1d("positive"), [1.0], CFG)
    assert np.all(s.draws > 0.0)
    assert s.draws.mean() == pytest.approx(1.0, rel=0.05)


def test_interval_support_beta_like():
    # density ∝ x^2 (1-x) on (0,1): a Beta(3,2), mean 0.6
    def logp(x):
        return 2.0 * math.log(x[0]) + math.log1p(-x[0])

    s = mcmc.sample(logp, space_1d(("interval", 0.0, 1.0)), [0.5], CFG)
    assert np.all((s.draws >= 0.0) & (s.draws <= 1.0))
    assert s.draws.mean() == pytest.approx(0.6, abs=0.02)


def test_circular_support_von_mises():
    mu, kappa = 2.5, 2.0

    def logp(x):
        return kappa * math.cos(x[0] - mu)

    s = mcmc.sample(logp, space_1d("circular"), [0.0], CFG)
    assert np.all(np.abs(s.draws) <= math.pi + 1e-12)
    mean_angle = math.atan2(np.sin(s.draws).mean(), np.cos(s.draws).mean())
    assert abs(math.atan2(math.sin(mean_angle - mu), math.cos(mean_angle - mu))) < 0.05


def test_mixed_supports_never_violated():
    space = mcmc.ParameterSpace([
        mcmc.Block("free", ["u"], "unbounded"),
        mcmc.Block("scales", ["p"], "positive"),
        mcmc.Block("box", ["q"], [("interval", -2.0, 3.0)]),
        mcmc.Block("angle", ["a"], "circular"),
    ])

    def logp(x):
        return -0.5 * (x[0] ** 2 + math.log(x[1]) ** 2 + x[2] ** 2) + math.cos(x[3])

    s = mcmc.sample(logp, space, [0.0, 1.0, 0.0, 0.0],
                    {"chains": 2, "warmup": 400, "draws": 800, "seed": 3})
    u, p, q, a = s.draws.T
    assert np.all(np.isfinite(u))
    assert np.all(p > 0)
    assert np.all((q >= -2.0) & (q <= 3.0))
    assert np.all(np.abs(a) <= math.pi + 1e-12)


# ---------------------------------------------------- determinism and groups


def test_identical_seed_bit_identical():
    a = mcmc.sample(lambda x: -0.5 * x[0] ** 2, space_1d(), [0.0], CFG)
    b = mcmc.sample(lambda x: -0.5 * x[0] ** 2, space_1d(), [0.0], CFG)
    assert np.array_equal(a.draws, b.draws)
    assert a.meta == b.meta
    c = mcmc.sample(lambda x: -0.5 * x[0] ** 2, space_1d(), [0.0],
                    {**CFG, "seed": 8})
    assert not np.array_equal(a.draws, c.draws)


def test_overlapping_update_groups():
    prec = np.linalg.inv(0.5 * np.eye(3) + 0.5)

    def logp(x):
        return -0.5 * x @ prec @ x

    space = mcmc.ParameterSpace([mcmc.Block("v", ["a", "b", "c"], "unbounded")])
    groups = [np.array([0, 1]), np.array([1, 2]), np.array([0, 2])]
    s = mcmc.sample(logp, space, [0.0, 0.0, 0.0],
                    {"chains": 2, "warmup": 1000, "draws": 4000, "seed": 5},
                    groups=groups, group_labels=["ab", "bc", "ac"])
    assert s.meta["groups"] == ["ab", "bc", "ac"]
    est = np.cov(s.draws.T)
    np.testing.assert_allclose(est, 0.5 * np.eye(3) + 0.5, atol=0.12)


# ------------------------------------------------------------ discrete smoke


@pytest.mark.slow
def test_detailed_balance_three_state():
    probs = np.array([0.2, 0.3, 0.5])

    def logp(x):
        return math.log(probs[min(int(x[0]), 2)])

    s = mcmc.sample(logp, space_1d(("interval", 0.0, 3.0)), [0.5],
                    {"chains": 2, "warmup": 2000, "draws": 500000, "seed": 13})
    states = np.minimum(s.draws[:, 0].astype(int), 2)
    freq = np.bincount(states, minlength=3) / len(states)
    np.testing.assert_allclose(freq, probs, atol=0.02)


# ------------------------------------------------------------- diagnostics


def iid_samples(rng, chains=4, n=1000, shift=None):
    draws = rng.standard_normal((chains, n))
    if shift is not None:
        draws += np.asarray(shift)[:, None]
    flat = draws.reshape(-1, 1)
    labels = np.repeat(np.arange(chains, dtype=np.int32), n)
    return mcmc.PosteriorSamples(("x",), flat, labels)


def test_rhat_iid_near_one():
    d = mcmc.diagnostics(iid_samples(np.random.default_rng(0)))
    assert 1.0 <= d.rhat["x"] < 1.01
    assert 0 < d.ess["x"] <= 4000


def test_rhat_disjoint_means_large():
    d = mcmc.diagnostics(iid_samples(np.random.default_rng(1), chains=2,
                                     shift=[0.0, 10.0]))
    assert d.rhat["x"] > 1.5


def test_ess_ar1_matches_theory():
    rng = np.random.default_rng(2)
    phi, chains, n = 0.9, 4, 10000
    draws = np.empty((chains, n))
    for c in range(chains):
        e = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = e[0] / math.sqrt(1 - phi**2)
        for t in range(1, n):
            x[t] = phi * x[t - 1] + e[t]
        draws[c] = x
    s = mcmc.PosteriorSamples(("x",), draws.reshape(-1, 1),
                              np.repeat(np.arange(chains, dtype=np.int32), n))
    ratio = mcmc.diagnostics(s).ess["x"] / (chains * n)
    expected = (1 - phi) / (1 + phi)
    assert expected / 2 < ratio < expected * 2


def test_diagnostics_require_two_chains():
    draws = np.random.default_rng(3).standard_normal((500, 1))
    s = mcmc.PosteriorSamples(("x",), draws, np.zeros(500, dtype=np.int32))
    with pytest.raises(DiagnosticsError):
        mcmc.diagnostics(s)


def test_diagnostics_require_min_draws():
    with pytest.raises(DiagnosticsError):
        mcmc.diagnostics(iid_samples(np.random.default_rng(4), n=50))


# ------------------------------------------------------------ serialization


def small_run():
    return mcmc.sample(lambda x: -0.5 * (x[0] ** 2 + x[1] ** 2),
                       mcmc.ParameterSpace([mcmc.Block("b", ["x", "y"], "unbounded")]),
                       [0.0, 0.0], {"chains": 2, "warmup": 200, "draws": 150, "seed": 21})


def test_csv_round_trip_exact():
    s = small_run()
    text = s.to_csv()
    assert text.splitlines()[0] == "chain,draw,x,y"
    back = mcmc.PosteriorSamples.from_csv(text)
    assert back.names == s.names
    assert np.array_equal(back.draws, s.draws)
    assert np.array_equal(back.chains, s.chains)


def test_binary_round_trip_exact():
    s = small_run()
    back = mcmc.PosteriorSamples.from_bytes(s.to_bytes())
    assert back.names == s.names
    assert np.array_equal(back.draws, s.draws)
    assert np.array_equal(back.chains, s.chains)


# ------------------------------------------------------------------ errors


def test_init_at_minus_inf_rejected():
    def logp(x):
        return -x[0] if x[0] > 5.0 else -math.inf

    with pytest.raises(InitializationError):
        mcmc.sample(logp, space_1d(), [1.0], CFG)


def test_nan_density_raises_model_error():
    def logp(x):
        return 0.0 if abs(x[0]) < 1e-12 else math.nan

    with pytest.raises(ModelError) as exc:
        mcmc.sample(logp, space_1d(), [0.0], CFG)
    assert "x" in exc.value.coords


def test_bad_config_rejected():
    with pytest.raises(ConfigError):
        mcmc.sample(lambda x: 0.0, space_1d(), [0.0],
                    {"chains": 0, "warmup": 10, "draws": 10, "seed": 1})
    with pytest.raises(ConfigError):
        mcmc.sample(lambda x: 0.0, space_1d(), [0.0], {"chains": 2, "draws": 10})


def test_init_outside_support_rejected():
    with pytest.raises(InitializationError):
        mcmc.sample(lambda x: -x[0], space_1d("positive"), [-1.0], CFG)


def test_duplicate_coordinates_rejected():
    with pytest.raises(ConfigError):
        mcmc.ParameterSpace([mcmc.Block("a", ["x"], "unbounded"),
                             mcmc.Block("b", ["x"], "positive")])
    with pytest.raises(ConfigError):
        mcmc.Block("a", ["x"], [("interval", 2.0, 1.0)])
