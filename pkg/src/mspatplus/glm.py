"""Non-spatial Poisson GLM baseline fitted by IRLS."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergence, RankDeficient


@dataclass(frozen=True)
class GlmFit:
    """Per-crime intercepts and slopes with asymptotic standard errors."""

    alpha: np.ndarray
    beta: np.ndarray
    se_alpha: np.ndarray
    se_beta: np.ndarray
    cov: np.ndarray  # J x 2 x 2, (alpha, beta) per crime
    iterations: np.ndarray


def _irls(y, log_e, x, max_iter, tol):
    X = np.column_stack([np.ones_like(x), x])
    if np.linalg.matrix_rank(X) < 2:
        raise RankDeficient("covariate is collinear with the intercept")
    # start from the offset-only mean
    coef = np.array([np.log(max(y.sum(), 0.5) / np.exp(log_e).sum()), 0.0])
    for it in range(1, max_iter + 1):
        eta = log_e + X @ coef
        mu = np.exp(eta)
        z = eta - log_e + (y - mu) / mu
        XtW = X.T * mu
        new = np.linalg.solve(XtW @ X, XtW @ z)
        if np.max(np.abs(new - coef)) < tol * (1.0 + np.max(np.abs(coef))):
            coef = new
            break
        coef = new
    else:
        raise NonConvergence(f"IRLS did not converge in {max_iter} iterations")
    mu = np.exp(log_e + X @ coef)
    cov = np.linalg.inv((X.T * mu) @ X)
    return coef, cov, it


def fit_glm_baseline(data, X, max_iter=100, tol=1e-10):
    """Fit ``log mu_ij = log e_ij + alpha_j + beta_j x_ij`` crime by crime.

    Parameters
    ----------
    data : CountData
    X : array_like
        Length-n covariate shared by all crimes, or an n x J design with one
        column per crime.

    Returns
    -------
    GlmFit
    """
    Y, log_e = data.Y, data.log_e
    n, J = Y.shape
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = np.repeat(X[:, None], J, axis=1)
    if X.shape != (n, J):
        raise DimensionMismatch(f"design {X.shape} vs data {(n, J)}")
    coefs = np.empty((J, 2))
    covs = np.empty((J, 2, 2))
    its = np.empty(J, dtype=int)
    for j in range(J):
        coefs[j], covs[j], its[j] = _irls(Y[:, j], log_e[:, j], X[:, j], max_iter, tol)
    se = np.sqrt(np.diagonal(covs, axis1=1, axis2=2))
    return GlmFit(alpha=coefs[:, 0], beta=coefs[:, 1], se_alpha=se[:, 0], se_beta=se[:, 1],
                  cov=covs, iterations=its)
