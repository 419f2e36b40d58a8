import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mspatplus.errors import ConfigError, RankDeficient, TooFewDraws, ValidationError
from mspatplus.glm import fit_glm_baseline
from mspatplus.graph import bym2_scaled_structure, grid_graph
from mspatplus.mcmc import McmcConfig, fit_mcmc
from mspatplus.mmodel import CountData, MModelSpec
from mspatplus.posterior import (
    PosteriorSamples,
    correlation_summary,
    diagnostics,
    dic,
    effective_sample_size,
    split_rhat,
    summarize,
    summarize_draws,
    waic,
)
from mspatplus.priors import SpatialPriorSpec
from mspatplus.simulation import Scenario2Spec, design_study2

# ---- summaries -----------------------------------------------------------


def test_summary_constant_draws():
    row = summarize_draws("c", np.full(50, 2.5))
    assert (row.mean, row.sd, row.q025, row.q50, row.q975) == (2.5, 0.0, 2.5, 2.5, 2.5)


def test_summary_type7_quantiles():
    row = summarize_draws("x", np.arange(1.0, 101.0))
    assert row.q50 == 50.5
    assert row.q025 == pytest.approx(1 + 0.025 * 99)
    assert row.q975 == pytest.approx(1 + 0.975 * 99)
    x = np.random.default_rng(0).standard_normal(40)
    assert summarize_draws("s", np.r_[x, -x]).mean == pytest.approx(0.0, abs=1e-15)


def test_summary_too_few_draws():
    with pytest.raises(TooFewDraws):
        summarize({"x": np.arange(9.0)})


def test_summary_order_independent():
    x = np.random.default_rng(1).standard_normal(200)
    a = summarize_draws("x", x)
    b = summarize_draws("x", x[::-1])
    assert (a.q025, a.q50, a.q975) == (b.q025, b.q50, b.q975)


def _sigma_draws(S, N=20):
    return np.broadcast_to(np.asarray(S, float), (N, *np.shape(S))).copy()


def test_correlation_summary_examples():
    med, lo, hi = correlation_summary(_sigma_draws(np.eye(2)))[(0, 1)]
    assert (med, lo, hi) == (0.0, 0.0, 0.0)
    med, _, _ = correlation_summary(_sigma_draws([[0.9, 0.2970], [0.2970, 0.2]]))[(0, 1)]
    assert med == pytest.approx(0.70, abs=1e-4)
    rng = np.random.default_rng(2)
    r = rng.uniform(-0.9, 0.9, 4001)
    r = np.r_[r, -r]
    sig = np.empty((r.size, 2, 2))
    sig[:, 0, 0] = sig[:, 1, 1] = 1.0
    sig[:, 0, 1] = sig[:, 1, 0] = r
    assert correlation_summary(sig)[(0, 1)][0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        correlation_summary(_sigma_draws(np.eye(1)))


# ---- DIC / WAIC ----------------------------------------------------------


def test_dic_single_repeated_draw():
    Y = np.array([[3.0], [0.0], [5.0]])
    data = CountData(Y, np.ones_like(Y))
    eta = np.broadcast_to(np.log([[2.0], [1.0], [4.0]]), (12, 3, 1)).copy()
    out = dic(eta, data)
    assert out["pd"] == pytest.approx(0.0, abs=1e-10)
    mu = np.array([2.0, 1.0, 4.0])
    dev = -2 * np.sum(Y[:, 0] * np.log(mu) - mu - np.array([math.lgamma(4), 0.0, math.lgamma(6)]))
    assert out["dic"] == pytest.approx(dev, rel=1e-12)
    assert waic(eta, data)["p_waic"] == 0.0


def test_waic_two_draw_hand_example():
    data = CountData(np.array([[1.0]]), np.array([[1.0]]))
    eta = np.array([[[0.0]], [[math.log(2.0)]]])
    # log p(Y=1 | mu) = log mu - mu
    l1, l2 = -1.0, math.log(2.0) - 2.0
    lppd = math.log(0.5 * (math.exp(l1) + math.exp(l2)))
    p_waic = (l1 - l2) ** 2 / 2.0  # sample variance of two values
    out = waic(eta, data)
    assert out["lppd"] == pytest.approx(lppd, rel=1e-12)
    assert out["p_waic"] == pytest.approx(p_waic, rel=1e-12)
    assert out["waic"] == pytest.approx(-2 * (lppd - p_waic), rel=1e-12)
    d = dic(eta, data)
    dbar = -2 * 0.5 * (l1 + l2)
    mubar = 1.5
    assert d["dbar"] == pytest.approx(dbar, rel=1e-12)
    assert d["pd"] == pytest.approx(dbar + 2 * (math.log(mubar) - mubar), rel=1e-12)
    with pytest.raises(TooFewDraws):
        waic(eta[:1], data)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_information_criteria_additive(seed):
    rng = np.random.default_rng(seed)
    Y = rng.poisson(4.0, (5, 2)).astype(float)
    eta = rng.normal(1.3, 0.2, (15, 5, 2))
    d1 = CountData(Y, np.ones_like(Y))
    d2 = CountData(np.vstack([Y, Y]), np.ones((10, 2)))
    eta2 = np.concatenate([eta, eta], axis=1)
    assert dic(eta2, d2)["dbar"] == pytest.approx(2 * dic(eta, d1)["dbar"], rel=1e-12)
    assert waic(eta2, d2)["lppd"] == pytest.approx(2 * waic(eta, d1)["lppd"], rel=1e-12)


# ---- ESS / R-hat ---------------------------------------------------------


def test_ess_and_rhat():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(4000)
    assert 3000 < effective_sample_size(x) < 5000
    ar = np.empty(4000)
    ar[0] = 0
    for t in range(1, 4000):
        ar[t] = 0.9 * ar[t - 1] + rng.standard_normal()
    # AR(1) with phi = 0.9: ESS ~ n (1 - phi) / (1 + phi)
    assert 100 < effective_sample_size(ar) < 420
    assert split_rhat([x[:2000], x[2000:]]) == pytest.approx(1.0, abs=0.02)
    assert split_rhat([x[:2000], x[2000:] + 3.0]) > 1.5


# ---- GLM baseline --------------------------------------------------------


def test_glm_saturated_null():
    e = np.array([[3.0], [5.0], [8.0], [2.0]])
    fit = fit_glm_baseline(CountData(e, e), np.array([0.3, -1.0, 2.0, 0.1]))
    assert fit.alpha[0] == pytest.approx(0.0, abs=1e-10)
    assert fit.beta[0] == pytest.approx(0.0, abs=1e-10)


def test_glm_recovers_truth():
    rng = np.random.default_rng(5)
    n = 400
    x = rng.standard_normal(n)
    e = np.full(n, 200.0)
    Y = rng.poisson(e * np.exp(0.12 + 0.15 * x))
    fit = fit_glm_baseline(CountData(Y, e), x)
    assert abs(fit.alpha[0] - 0.12) < 3 * fit.se_alpha[0]
    assert abs(fit.beta[0] - 0.15) < 3 * fit.se_beta[0]


def test_glm_constant_covariate():
    with pytest.raises(RankDeficient):
        fit_glm_baseline(CountData(np.ones((4, 1)), np.ones((4, 1))), np.full(4, 2.0))


# ---- MCMC ----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        McmcConfig(n_iterations=0)
    with pytest.raises(ConfigError):
        McmcConfig(thin=0)
    with pytest.raises(ConfigError):
        McmcConfig(adapt_target=1.0)
    with pytest.raises(ConfigError):
        McmcConfig.from_dict({"n_iter": 5})
    assert McmcConfig.from_dict({"thin": 3}).thin == 3


@pytest.fixture(scope="module")
def grid_problem():
    s = bym2_scaled_structure(grid_graph(4, 4))
    rng = np.random.default_rng(7)
    Z = rng.standard_normal((16, 2))
    e = rng.uniform(20, 40, (16, 2))
    return s, Z, e, rng


def test_conjugate_gaussian_oracle(grid_problem):
    s, Z, _, rng = grid_problem
    n = s.n
    Y = rng.poisson(6.0, (n, 2)).astype(float)
    data = CountData(Y, np.ones((n, 2)))
    s2 = 4.0

    def gauss(eta, Yv):
        r = Yv - eta
        return -0.5 * float(np.sum(r * r)) / s2

    spec = MModelSpec(s, (SpatialPriorSpec("ICAR"),) * 2, Z)
    cfg = McmcConfig(n_burnin=2000, n_iterations=20000, thin=2, n_chains=1, seed=3)
    post = fit_mcmc(spec, data, cfg, loglik=gauss, blocks={"fixed"})
    for j in range(2):
        X = np.column_stack([np.ones(n), Z[:, j]])
        P = X.T @ X / s2 + spec.fixed_precision * np.eye(2)
        V = np.linalg.inv(P)
        m = V @ (X.T @ Y[:, j] / s2)
        for k, draws in enumerate((post.alpha[:, j], post.beta[:, j])):
            ess = effective_sample_size(draws)
            mc_se = math.sqrt(V[k, k] / ess)
            assert abs(draws.mean() - m[k]) < 3 * mc_se
            # SE of a variance estimate ~ var * sqrt(2 / ess)
            assert abs(draws.var(ddof=1) - V[k, k]) < 3 * V[k, k] * math.sqrt(2 / ess)


def test_poisson_only_matches_glm(grid_problem):
    s, Z, e, rng = grid_problem
    Y = rng.poisson(e * np.exp(0.12 + 0.15 * Z))
    data = CountData(Y, e)
    spec = MModelSpec(s, (SpatialPriorSpec("ICAR"),) * 2, Z)
    post = fit_mcmc(spec, data, McmcConfig(n_burnin=1000, n_iterations=6000, thin=2, n_chains=1, seed=1),
                    blocks={"fixed"})
    glm = fit_glm_baseline(data, Z)
    for j in range(2):
        sd = post.alpha[:, j].std(ddof=1)
        assert abs(post.alpha[:, j].mean() - glm.alpha[j]) < 3 * sd


@pytest.fixture(scope="module")
def study2_fit():
    from mspatplus.fixtures import synthetic_region

    reg = synthetic_region()
    design = design_study2(Scenario2Spec(reg.e), reg.graph, seed=5)
    data = CountData(design.counts(np.random.default_rng(9)), design.e)
    spec = MModelSpec(bym2_scaled_structure(reg.graph), (SpatialPriorSpec("ICAR"),) * 2,
                      np.column_stack([design.X_obs, design.X_obs]))
    cfg = McmcConfig(n_burnin=1500, n_iterations=3000, thin=3, n_chains=2, seed=11)
    return spec, data, cfg, fit_mcmc(spec, data, cfg)


def test_fit_is_deterministic(study2_fit):
    spec, data, cfg, post = study2_fit
    small = McmcConfig(n_burnin=200, n_iterations=200, thin=2, n_chains=1, seed=4)
    a = fit_mcmc(spec, data, small)
    b = fit_mcmc(spec, data, small)
    assert [r.as_tuple() for r in summarize(a)] == [r.as_tuple() for r in summarize(b)]
    np.testing.assert_array_equal(a.eta, b.eta)


def test_samples_invariants_and_acceptance(study2_fit):
    _, _, _, post = study2_fit
    assert isinstance(post, PosteriorSamples)
    assert np.all(np.linalg.eigvalsh(post.sigma)[:, 0] > 0)
    R = post.correlations()
    assert np.all(np.abs(R) <= 1.0)
    _, acc = diagnostics(post)
    assert {"fixed", "phi[1]", "phi[2]", "bartlett_theta", "bartlett_phi"} <= set(acc)
    for block, rate in acc.items():
        assert 0.1 <= rate <= 0.6, (block, rate)


def test_relabeling_crimes(study2_fit):
    spec, data, cfg, post = study2_fit
    swapped = MModelSpec(spec.structure, spec.priors, spec.Z[:, ::-1])
    data2 = CountData(data.Y[:, ::-1], data.e[:, ::-1])
    post2 = fit_mcmc(swapped, data2, cfg)
    for name in ("alpha", "beta"):
        a, b = getattr(post, name), getattr(post2, name)[:, ::-1]
        for j in range(2):
            se = math.hypot(a[:, j].std() / math.sqrt(effective_sample_size(post.chains_of(a[:, j]))),
                            b[:, j].std() / math.sqrt(effective_sample_size(post2.chains_of(b[:, j]))))
            assert abs(a[:, j].mean() - b[:, j].mean()) < 4 * se
    r1 = post.correlations()[:, 0, 1]
    r2 = post2.correlations()[:, 0, 1]
    se = math.hypot(r1.std() / math.sqrt(effective_sample_size(post.chains_of(r1))),
                    r2.std() / math.sqrt(effective_sample_size(post2.chains_of(r2))))
    assert abs(np.median(r1) - np.median(r2)) < 4 * se
