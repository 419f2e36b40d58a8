"""Multivariate M-model: latent field Theta = Phi M and its log-posterior.

Stacking is crime-major throughout: ``theta = vec(Theta) = (theta_1', ...,
theta_J')'``, i.e. column-major (Fortran) flattening of the n x J matrix.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .errors import (
    DimensionMismatch,
    InvalidCounts,
    NonFinitePredictor,
    NonPositiveDiagonal,
    NonPositiveExpected,
    NotPD,
    SingularM,
    ValidationError,
)
from .priors import LAMBDA_MAX, SpatialPriorSpec, prior_kernel

FIXED_EFFECT_PRECISION = 0.001
# exp() of a log-mean above this overflows float64
MAX_LOG_MEAN = 700.0


@dataclass(frozen=True, eq=False)
class CountData:
    """Observed counts ``Y`` and expected counts ``e``, both n x J."""

    Y: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        e = np.asarray(self.e, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if e.ndim == 1:
            e = e[:, None]
        if Y.shape != e.shape:
            raise DimensionMismatch(f"counts {Y.shape} vs expected {e.shape}")
        if not np.all(np.isfinite(Y)) or np.any(Y < 0) or np.any(Y != np.round(Y)):
            raise InvalidCounts("counts must be finite non-negative integers")
        if not np.all(np.isfinite(e)) or np.any(e <= 0):
            raise NonPositiveExpected("expected counts must be positive")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "e", e)

    @property
    def shape(self):
        return self.Y.shape

    @property
    def log_e(self):
        return np.log(self.e)


@dataclass(frozen=True, eq=False)
class MModelSpec:
    """Full description of one multivariate M-model.

    ``Z`` holds one design column per crime: the decorrelated covariate for
    an M-SpatPlus model or the raw covariate for M-Spatial. Extending to
    several covariates per crime means turning each column into an n x p
    block; the samplers only ever touch ``Z`` through ``design_effect``.
    """

    structure: object
    priors: tuple
    Z: np.ndarray
    fixed_precision: float = FIXED_EFFECT_PRECISION
    wishart_sigma2: float = 1.0
    wishart_dof: float | None = None
    name: str = "M-model"

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        n = self.structure.n
        if Z.shape[0] != n:
            raise DimensionMismatch(f"design has {Z.shape[0]} rows, graph has {n} areas")
        priors = tuple(p if isinstance(p, SpatialPriorSpec) else SpatialPriorSpec(p) for p in self.priors)
        if len(priors) == 1 and Z.shape[1] > 1:
            priors = priors * Z.shape[1]
        if len(priors) != Z.shape[1]:
            raise DimensionMismatch(f"{len(priors)} priors for {Z.shape[1]} crimes")
        if self.wishart_sigma2 <= 0:
            raise ValidationError("wishart_sigma2 must be positive")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "priors", priors)
        if self.wishart_dof is None:
            object.__setattr__(self, "wishart_dof", float(Z.shape[1]))
        if self.wishart_dof < Z.shape[1]:
            raise ValidationError("wishart_dof must be at least J")

    @property
    def J(self):
        return self.Z.shape[1]

    @property
    def n(self):
        return self.Z.shape[0]

    def design_effect(self, beta):
        return self.Z * np.asarray(beta)[None, :]

    def kernels(self):
        return [prior_kernel(p.family, self.structure) for p in self.priors]


@dataclass(frozen=True, eq=False)
class BartlettFactor:
    """Lower-triangular Bartlett factor A.

    ``c`` are the J diagonal entries; ``offdiag`` the J(J-1)/2 strictly-lower
    entries in row-major order (n21, n31, n32, ...).
    """

    c: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        off = np.atleast_1d(np.asarray(self.offdiag, dtype=float))
        J = c.shape[0]
        if off.shape != (J * (J - 1) // 2,):
            raise DimensionMismatch(f"need {J * (J - 1) // 2} off-diagonal entries, got {off.shape}")
        if np.any(c <= 0) or not np.all(np.isfinite(c)):
            raise NonPositiveDiagonal("Bartlett diagonal entries must be positive")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "offdiag", off)

    @property
    def J(self):
        return self.c.shape[0]

    def matrix(self):
        J = self.J
        A = np.diag(self.c)
        A[np.tril_indices(J, -1)] = self.offdiag
        return A

    @classmethod
    def identity(cls, J, scale=1.0):
        return cls(np.full(J, float(scale)), np.zeros(J * (J - 1) // 2))


@dataclass(frozen=True, eq=False)
class LatentState:
    """One point in parameter space.

    ``hyper`` carries rho_j or lambda_j per crime (NaN for ICAR columns).
    """

    alpha: np.ndarray
    beta: np.ndarray
    Phi: np.ndarray
    bartlett: BartlettFactor
    hyper: np.ndarray = field(default=None)

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        Phi = np.asarray(self.Phi, dtype=float)
        if Phi.ndim == 1:
            Phi = Phi[:, None]
        J = alpha.shape[0]
        if beta.shape != (J,) or Phi.shape[1] != J or self.bartlett.J != J:
            raise DimensionMismatch("alpha, beta, Phi and Bartlett factor disagree on J")
        hyper = np.full(J, np.nan) if self.hyper is None else np.asarray(self.hyper, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "hyper", hyper)

    @property
    def J(self):
        return self.alpha.shape[0]

    def replace(self, **changes):
        return replace(self, **changes)


def sigma_from_bartlett(b, sigma2=1.0):
    """Between-crime covariance ``Sigma_b = sigma2 * A A'``."""
    if sigma2 <= 0:
        raise ValidationError("sigma2 must be positive")
    A = b.matrix()
    S = sigma2 * (A @ A.T)
    return 0.5 * (S + S.T)


def m_from_sigma(sigma):
    """Symmetric square root ``M = V diag(sqrt(lambda)) V'`` of ``Sigma_b``.

    The symmetric root makes the model invariant to the order of the crimes,
    which a Cholesky factor would not.
    """
    S = np.asarray(sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"Sigma_b must be square, got {S.shape}")
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    if vals[0] <= 0:
        raise NotPD(f"Sigma_b is not positive definite (min eigenvalue {vals[0]:.3g})")
    return (vecs * np.sqrt(vals)) @ vecs.T


def theta_from_phi(Phi, M):
    """``theta = vec(Phi M)``, crime-major."""
    Phi = np.asarray(Phi, dtype=float)
    M = np.asarray(M, dtype=float)
    if Phi.ndim != 2 or M.shape != (Phi.shape[1], Phi.shape[1]):
        raise DimensionMismatch(f"Phi {Phi.shape} and M {M.shape} do not conform")
    return (Phi @ M).ravel(order="F")


def omega_theta(M, omegas):
    """Joint precision ``(M^-1 x I) Blockdiag(Omega_j) (M^-1 x I)'`` of theta."""
    M = np.asarray(M, dtype=float)
    J = M.shape[0]
    if len(omegas) != J:
        raise DimensionMismatch(f"{len(omegas)} precisions for J={J}")
    n = np.asarray(omegas[0]).shape[0]
    if np.linalg.cond(M) > 1e12:
        raise SingularM("M is singular")
    Minv = np.linalg.inv(M)
    block = np.zeros((n * J, n * J))
    for j, om in enumerate(omegas):
        block[j * n:(j + 1) * n, j * n:(j + 1) * n] = om
    K = np.kron(Minv, np.eye(n))
    out = K @ block @ K.T
    return 0.5 * (out + out.T)


def apply_sum_to_zero(Phi, columns=None):
    """Centre columns of ``Phi`` (all columns, or the given indices)."""
    Phi = np.array(Phi, dtype=float, copy=True)
    if Phi.ndim == 1:
        return Phi - Phi.mean()
    cols = range(Phi.shape[1]) if columns is None else columns
    for j in cols:
        Phi[:, j] -= Phi[:, j].mean()
    return Phi


def log_chi(x, k):
    """Log density of the chi distribution with k degrees of freedom."""
    return (k - 1.0) * np.log(x) - 0.5 * x * x - (0.5 * k - 1.0) * np.log(2.0) - gammaln(0.5 * k)


def log_normal(x, precision):
    x = np.asarray(x, dtype=float)
    return 0.5 * np.log(precision / (2.0 * np.pi)) - 0.5 * precision * x * x


def bartlett_log_prior(b, dof):
    J = b.J
    ks = dof - np.arange(J)  # chi_{nu - j + 1} for j = 1..J
    return float(np.sum(log_chi(b.c, ks)) + np.sum(log_normal(b.offdiag, 1.0)))


def sample_bartlett_prior(J, dof, rng, size=None):
    """Draw Bartlett scalars from their prior; returns (c, offdiag) arrays."""
    ks = dof - np.arange(J)
    shape = (J,) if size is None else (size, J)
    c = np.sqrt(rng.chisquare(np.broadcast_to(ks, shape)))
    m = J * (J - 1) // 2
    off = rng.standard_normal((m,) if size is None else (size, m))
    return c, off


def log_hyperprior(spec, value):
    """Unif(0, 1) hyperprior on rho or lambda; 0 for ICAR."""
    if spec.family == "ICAR":
        return 0.0
    if spec.family == "BYM2":
        return 0.0 if 0.0 <= value <= LAMBDA_MAX else -np.inf
    return 0.0 if 0.0 < value < 1.0 else -np.inf


def linear_predictor(state, spec, data):
    """Log-mean ``log e + alpha + Z beta + Phi M`` as an n x J array."""
    M = m_from_sigma(sigma_from_bartlett(state.bartlett, spec.wishart_sigma2))
    return data.log_e + state.alpha[None, :] + spec.design_effect(state.beta) + state.Phi @ M


def poisson_loglik(eta, Y):
    """Poisson log-likelihood in the log-mean with log(Y!) omitted."""
    if np.max(eta) > MAX_LOG_MEAN or not np.all(np.isfinite(eta)):
        raise NonFinitePredictor("linear predictor overflows exp()")
    return float(np.sum(Y * eta - np.exp(eta)))


def poisson_loglik_grad(state, spec, data):
    """Gradient of the Poisson log-likelihood in (alpha, beta)."""
    eta = linear_predictor(state, spec, data)
    resid = data.Y - np.exp(eta)
    return resid.sum(axis=0), (spec.Z * resid).sum(axis=0)


def log_posterior_terms(state, spec, data):
    """Dictionary of the five log-posterior components."""
    if data.shape != (spec.n, spec.J):
        raise DimensionMismatch(f"data {data.shape} vs model ({spec.n}, {spec.J})")
    eta = linear_predictor(state, spec, data)
    loglik = poisson_loglik(eta, data.Y)
    latent = 0.0
    for j, (p, kern) in enumerate(zip(spec.priors, spec.kernels())):
        latent += kern.log_density(state.Phi[:, j], state.hyper[j] if p.has_hyper else None)
    bart = bartlett_log_prior(state.bartlett, spec.wishart_dof)
    fixed = float(np.sum(log_normal(state.alpha, spec.fixed_precision))
                  + np.sum(log_normal(state.beta, spec.fixed_precision)))
    hyper = sum(log_hyperprior(p, state.hyper[j]) for j, p in enumerate(spec.priors))
    return {"loglik": loglik, "latent": latent, "bartlett": bart, "fixed": fixed, "hyper": hyper}


def log_posterior(state, spec, data):
    """Unnormalized log-posterior of an M-model state.

    ICAR columns of ``Phi`` are expected to be centred; their density is the
    rank n-1 improper Gaussian.
    """
    return float(sum(log_posterior_terms(state, spec, data).values()))
