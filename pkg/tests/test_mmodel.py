import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mspatplus.errors import (
    DimensionMismatch,
    InvalidCounts,
    NonFinitePredictor,
    NonPositiveDiagonal,
    NotPD,
    SingularM,
)
from mspatplus.graph import bym2_scaled_structure, from_edge_list, grid_graph
from mspatplus.mmodel import (
    BartlettFactor,
    CountData,
    LatentState,
    MModelSpec,
    apply_sum_to_zero,
    linear_predictor,
    log_posterior,
    log_posterior_terms,
    m_from_sigma,
    omega_theta,
    poisson_loglik_grad,
    sample_bartlett_prior,
    sigma_from_bartlett,
    theta_from_phi,
)
from mspatplus.priors import SpatialPriorSpec, precision_matrix
from mspatplus.spectral import eigendecompose

PATH2 = bym2_scaled_structure(from_edge_list(2, [(0, 1)]))


def test_sigma_from_bartlett():
    np.testing.assert_array_equal(sigma_from_bartlett(BartlettFactor.identity(3)), np.eye(3))
    b = BartlettFactor([2.0, 1.0], [1.0])
    np.testing.assert_array_equal(sigma_from_bartlett(b), [[4, 2], [2, 2]])
    np.testing.assert_array_equal(sigma_from_bartlett(b, 2.0), [[8, 4], [4, 4]])
    with pytest.raises(NonPositiveDiagonal):
        BartlettFactor([1.0, 0.0], [0.3])


def test_wishart_mean_monte_carlo():
    rng = np.random.default_rng(11)
    N = 100_000
    c, off = sample_bartlett_prior(2, 2.0, rng, size=N)
    A = np.zeros((N, 2, 2))
    A[:, 0, 0], A[:, 1, 1], A[:, 1, 0] = c[:, 0], c[:, 1], off[:, 0]
    S = A @ np.transpose(A, (0, 2, 1))
    mean = S.mean(axis=0)
    se = S.std(axis=0, ddof=1) / np.sqrt(N)
    assert np.all(np.abs(mean - 2 * np.eye(2)) < 3 * se)


def test_m_from_sigma_examples():
    np.testing.assert_allclose(m_from_sigma(np.eye(2)), np.eye(2), atol=1e-14)
    np.testing.assert_allclose(m_from_sigma(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    M = m_from_sigma(S)
    np.testing.assert_allclose(M, M.T, atol=1e-14)
    np.testing.assert_allclose(M @ M, S, atol=1e-12)
    with pytest.raises(NotPD):
        m_from_sigma(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_theta_stacking():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    np.testing.assert_array_equal(theta_from_phi(np.eye(2), np.array([[a, b], [c, d]])), [a, c, b, d])
    Phi = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(theta_from_phi(Phi, np.eye(2)), Phi.ravel(order="F"))
    rng = np.random.default_rng(0)
    Phi, M = rng.standard_normal((3, 2)), rng.standard_normal((2, 2))
    kron = np.kron(M.T, np.eye(3)) @ Phi.ravel(order="F")
    np.testing.assert_allclose(theta_from_phi(Phi, M), kron, atol=1e-12)
    with pytest.raises(DimensionMismatch):
        theta_from_phi(Phi, np.eye(3))


def test_omega_theta():
    Q = PATH2.Q
    np.testing.assert_allclose(omega_theta(np.eye(1), [Q]), Q)
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    om = omega_theta(m_from_sigma(S), [Q, Q])
    np.testing.assert_allclose(om, np.kron(np.linalg.inv(S), Q), atol=1e-10)
    s = bym2_scaled_structure(grid_graph(2, 3))
    O1 = precision_matrix(SpatialPriorSpec("PCAR", 0.3), s)
    O2 = precision_matrix(SpatialPriorSpec("PCAR", 0.8), s)
    om = omega_theta(m_from_sigma(S), [O1, O2])
    # best separable fit via the Van Loan rearrangement
    n = 6
    R = om.reshape(2, n, 2, n).transpose(0, 2, 1, 3).reshape(4, n * n)
    sv = np.linalg.svd(R, compute_uv=False)
    assert sv[1] / sv[0] > 1e-3
    with pytest.raises(SingularM):
        omega_theta(np.array([[1.0, 1.0], [1.0, 1.0]]), [Q, Q])


def test_apply_sum_to_zero():
    np.testing.assert_array_equal(apply_sum_to_zero(np.array([1.0, 2.0, 3.0])), [-1, 0, 1])
    X = np.array([[1.0, 5.0], [-1.0, 5.0]])
    out = apply_sum_to_zero(X)
    np.testing.assert_array_equal(out, [[1, 0], [-1, 0]])
    np.testing.assert_array_equal(apply_sum_to_zero(out), out)
    np.testing.assert_array_equal(apply_sum_to_zero(X, columns=[1])[:, 0], X[:, 0])


def _instance(seed=0, n_rows=2, n_cols=3, J=2, fams=("ICAR", "PCAR")):
    rng = np.random.default_rng(seed)
    s = bym2_scaled_structure(grid_graph(n_rows, n_cols))
    n = s.n
    Z = rng.standard_normal((n, J))
    priors = tuple(SpatialPriorSpec(f, 0.5 if f != "ICAR" else None) for f in fams)
    spec = MModelSpec(s, priors, Z)
    Phi = apply_sum_to_zero(rng.standard_normal((n, J)) * 0.3)
    state = LatentState(alpha=rng.normal(0, 0.2, J), beta=rng.normal(0, 0.2, J), Phi=Phi,
                        bartlett=BartlettFactor([1.2, 0.8], [0.3]),
                        hyper=np.array([p.hyper if p.has_hyper else np.nan for p in priors]))
    e = rng.uniform(5, 20, (n, J))
    Y = rng.poisson(e)
    return spec, state, CountData(Y, e)


def test_log_posterior_zero_counts():
    spec, state, data = _instance()
    zero = state.replace(alpha=np.zeros(2), beta=np.zeros(2), Phi=np.zeros_like(state.Phi))
    d0 = CountData(np.zeros_like(data.Y), data.e)
    assert log_posterior_terms(zero, spec, d0)["loglik"] == pytest.approx(-data.e.sum(), rel=1e-12)


def test_alpha_perturbation():
    spec, state, data = _instance(1)
    delta = 0.17
    base = log_posterior_terms(state, spec, data)["loglik"]
    moved = state.replace(alpha=state.alpha + np.array([delta, 0.0]))
    r = np.exp(linear_predictor(state, spec, data))[:, 0] / data.e[:, 0]
    expected = np.sum(data.Y[:, 0] * delta - data.e[:, 0] * r * (np.exp(delta) - 1))
    assert log_posterior_terms(moved, spec, data)["loglik"] - base == pytest.approx(expected, rel=1e-10)


def test_beta_gradient_finite_difference():
    spec, state, data = _instance(2)
    _, gb = poisson_loglik_grad(state, spec, data)
    h = 1e-6
    for j in range(2):
        step = np.eye(2)[j] * h
        up = log_posterior_terms(state.replace(beta=state.beta + step), spec, data)["loglik"]
        dn = log_posterior_terms(state.replace(beta=state.beta - step), spec, data)["loglik"]
        assert (up - dn) / (2 * h) == pytest.approx(gb[j], rel=1e-5)


def test_doubling_expected_counts():
    spec, state, data = _instance(3)
    t1 = log_posterior_terms(state, spec, data)
    d2 = CountData(data.Y, 2 * data.e)
    t2 = log_posterior_terms(state, spec, d2)
    mu = np.exp(linear_predictor(state, spec, data))
    assert t2["loglik"] - t1["loglik"] == pytest.approx(data.Y.sum() * np.log(2) - mu.sum(), rel=1e-10)
    for k in ("latent", "bartlett", "fixed", "hyper"):
        assert t2[k] == t1[k]


def test_log_posterior_errors():
    spec, state, data = _instance(4)
    assert np.isfinite(log_posterior(state, spec, data))
    with pytest.raises(NonFinitePredictor):
        log_posterior(state.replace(alpha=np.array([800.0, 0.0])), spec, data)
    with pytest.raises(InvalidCounts):
        CountData(np.full((6, 2), 1.5), data.e)
    with pytest.raises(DimensionMismatch):
        log_posterior(state, spec, CountData(data.Y[:, :1], data.e[:, :1]))


def test_icar_field_covariance_monte_carlo():
    s = bym2_scaled_structure(grid_graph(2, 3))
    n = s.n
    basis = eigendecompose(s.Q)
    Qp = np.linalg.pinv(s.Q)
    M = m_from_sigma(np.array([[1.0, 0.6], [0.6, 2.0]]))
    rng = np.random.default_rng(5)
    N = 20_000
    # Phi columns ~ N(0, Q^-) on the centred subspace
    U, lam = basis.U[:, :-1], basis.eigenvalues[:-1]
    Phi = (U / np.sqrt(lam)) @ rng.standard_normal((n - 1, N * 2))
    Phi = Phi.reshape(n, N, 2).transpose(1, 0, 2)
    theta = (Phi @ M).transpose(0, 2, 1).reshape(N, 2 * n)
    emp = np.cov(theta, rowvar=False)
    K = np.kron(M, np.eye(n))
    target = K.T @ np.kron(np.eye(2), Qp) @ K
    # SE of a sample covariance entry: sqrt((s_ii s_jj + s_ij^2) / N)
    d = np.diag(target)
    se = np.sqrt((np.outer(d, d) + target ** 2) / N)
    assert np.all(np.abs(emp - target) < 5 * se)


def test_order_invariance_of_correlation():
    S = np.array([[1.0, 0.6], [0.6, 2.0]])
    P = np.array([[0, 1], [1, 0]])
    M = m_from_sigma(S)
    Mp = m_from_sigma(P @ S @ P.T)
    np.testing.assert_allclose(Mp, P @ M @ P.T, atol=1e-12)
    spec, state, data = _instance(6, fams=("ICAR", "ICAR"))
    b = state.bartlett
    swapped = MModelSpec(spec.structure, spec.priors, spec.Z[:, ::-1])
    Sig = sigma_from_bartlett(b)
    Sp = P @ Sig @ P.T
    Ap = np.linalg.cholesky(Sp)
    bp = BartlettFactor(np.diag(Ap), Ap[np.tril_indices(2, -1)])
    st2 = LatentState(state.alpha[::-1], state.beta[::-1], state.Phi @ M @ P.T @ np.linalg.inv(Mp), bp)
    eta1 = linear_predictor(state, spec, data)
    eta2 = linear_predictor(st2, swapped, CountData(data.Y[:, ::-1], data.e[:, ::-1]))
    np.testing.assert_allclose(eta2, eta1[:, ::-1], atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_bartlett_round_trip(J, seed):
    rng = np.random.default_rng(seed)
    c, off = sample_bartlett_prior(J, J + 1.0, rng)
    S = sigma_from_bartlett(BartlettFactor(np.maximum(c, 1e-3), off))
    M = m_from_sigma(S)
    np.testing.assert_allclose(M.T @ M, S, atol=1e-10 * max(1.0, np.abs(S).max()))
