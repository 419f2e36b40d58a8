"""ICAR, PCAR and BYM2 precision matrices with the overall precision fixed at 1."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConstraintViolated, DimensionMismatch, LambdaOutOfRange, RhoOutOfRange, ValidationError
from .graph import PINV_RTOL, icar_structure

FAMILIES = ("ICAR", "PCAR", "BYM2")
LOG_2PI = float(np.log(2.0 * np.pi))
# sampling of the BYM2 mixing weight stays below the improper limit
LAMBDA_MAX = 1.0 - 1e-6


@dataclass(frozen=True)
class SpatialPriorSpec:
    """Prior family for one column of the latent field.

    ``hyper`` is rho for PCAR, lambda for BYM2 and None for ICAR. The overall
    precision tau is always 1.
    """

    family: str
    hyper: float | None = None

    def __post_init__(self):
        fam = str(self.family).upper()
        if fam not in FAMILIES:
            raise ValidationError(f"unknown prior family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if fam == "ICAR":
            object.__setattr__(self, "hyper", None)
            return
        if self.hyper is None:
            object.__setattr__(self, "hyper", 0.5)
        h = float(self.hyper)
        object.__setattr__(self, "hyper", h)
        if fam == "BYM2" and not 0.0 <= h <= 1.0:
            raise LambdaOutOfRange(f"lambda={h} outside [0, 1]")
        if fam == "PCAR" and not h <= 1.0:
            raise RhoOutOfRange(f"rho={h} above 1")

    @property
    def tau(self):
        return 1.0

    @property
    def has_hyper(self):
        return self.family != "ICAR"

    def with_hyper(self, value):
        return SpatialPriorSpec(self.family, value)


def _normalized_adjacency_eigenvalues(g):
    d = g.degree.astype(float)
    W = g.adjacency()
    s = 1.0 / np.sqrt(d)
    return np.linalg.eigvalsh(s[:, None] * W * s[None, :])


def pcar_valid_range(g):
    """Open interval ``(1/d_min, 1/d_max)`` of valid PCAR rho values.

    ``d_min`` and ``d_max`` are the extreme eigenvalues of D^-1/2 W D^-1/2;
    for a connected graph ``d_max = 1``.
    """
    if not g.connected:
        icar_structure(g)  # raises DisconnectedGraph
    eta = _normalized_adjacency_eigenvalues(g)
    return 1.0 / eta[0], 1.0 / eta[-1]


class PriorKernel:
    """Precomputed spectra for fast repeated density evaluation.

    For all three families the log density of a column ``phi`` is
    ``0.5 * logdet(hyper) - 0.5 * quad(phi, hyper) - 0.5 * rank * log(2 pi)``.
    """

    def __init__(self, family, structure):
        self.family = family.upper()
        self.structure = structure
        g = structure.graph
        n = g.n
        self.n = n
        Q = structure.Q
        self.Q = Q
        if self.family == "ICAR":
            vals = np.linalg.eigvalsh(Q)
            keep = vals > PINV_RTOL * vals.max()
            self.rank = int(keep.sum())
            self._icar_logdet = float(np.sum(np.log(vals[keep])))
        elif self.family == "PCAR":
            self.rank = n
            self.d = g.degree.astype(float)
            self.W = g.adjacency()
            self._log_d = float(np.sum(np.log(self.d)))
            self.eta = _normalized_adjacency_eigenvalues(g)
            self.rho_range = (1.0 / self.eta[0], 1.0 / self.eta[-1])
        else:
            vals, vecs = np.linalg.eigh(structure.Q_scaled_geninv)
            vals = np.where(vals > PINV_RTOL * vals.max(), vals, 0.0)
            self.gamma = vals
            self.Ut = vecs.T.copy()
            self.rank = n

    def _bym2_var(self, lam):
        return (1.0 - lam) + lam * self.gamma

    def logdet(self, hyper=None):
        """Log (pseudo-)determinant of the precision."""
        if self.family == "ICAR":
            return self._icar_logdet
        if self.family == "PCAR":
            return self._log_d + float(np.sum(np.log1p(-hyper * self.eta)))
        v = self._bym2_var(hyper)
        pos = v > 0
        return -float(np.sum(np.log(v[pos])))

    def quad(self, phi, hyper=None):
        """Quadratic form ``phi' Omega phi``."""
        if self.family == "ICAR":
            return float(phi @ (self.Q @ phi))
        if self.family == "PCAR":
            return float(phi @ (self.d * phi) - hyper * (phi @ (self.W @ phi)))
        a = self.Ut @ phi
        v = self._bym2_var(hyper)
        pos = v > 0
        return float(np.sum(a[pos] ** 2 / v[pos]))

    def effective_rank(self, hyper=None):
        if self.family == "BYM2":
            return int(np.sum(self._bym2_var(hyper) > 0))
        return self.rank

    def log_density(self, phi, hyper=None):
        r = self.effective_rank(hyper)
        return 0.5 * self.logdet(hyper) - 0.5 * self.quad(phi, hyper) - 0.5 * r * LOG_2PI

    def precision(self, hyper=None):
        return precision_matrix(SpatialPriorSpec(self.family, hyper), self.structure)


@lru_cache(maxsize=32)
def prior_kernel(family, structure):
    return PriorKernel(family, structure)


def _check_pcar_rho(rho, structure):
    lo, hi = prior_kernel("PCAR", structure).rho_range
    if not (lo < rho <= hi + 1e-12):
        raise RhoOutOfRange(f"rho={rho} outside ({lo:.6g}, {hi:.6g})")


class _Bym2Cache:
    """Dense BYM2 precisions keyed on lambda rounded to 1e-12."""

    def __init__(self, maxsize=64):
        self.maxsize = maxsize
        self._store = {}

    def get(self, structure, lam):
        key = (id(structure), round(lam, 12))
        hit = self._store.get(key)
        if hit is not None and hit[0] is structure:
            return hit[1]
        n = structure.n
        cov = (1.0 - lam) * np.eye(n) + lam * structure.Q_scaled_geninv
        omega = np.linalg.inv(cov)
        omega = 0.5 * (omega + omega.T)
        omega.setflags(write=False)
        if len(self._store) >= self.maxsize:
            self._store.pop(next(iter(self._store)))
        self._store[key] = (structure, omega)
        return omega


_bym2_cache = _Bym2Cache()


def precision_matrix(spec, structure):
    """Precision of one latent column.

    ICAR returns Q (rank n-1, pair it with a sum-to-zero constraint); PCAR
    returns D - rho W, with rho = 1 giving Q exactly; BYM2 returns the
    inverse of ``(1 - lambda) I + lambda Q*^-``, which requires lambda < 1.
    """
    g = structure.graph
    if spec.family == "ICAR":
        return structure.Q.copy()
    if spec.family == "PCAR":
        rho = spec.hyper
        _check_pcar_rho(rho, structure)
        return np.diag(g.degree.astype(float)) - rho * g.adjacency()
    lam = spec.hyper
    if not 0.0 <= lam < 1.0:
        raise LambdaOutOfRange(f"BYM2 precision needs lambda in [0, 1), got {lam}")
    return _bym2_cache.get(structure, lam).copy()


def log_density_gmrf(theta_col, spec, structure):
    """Gaussian log density of one latent column, 2 pi constants included.

    ICAR (and BYM2 at lambda = 1) use the pseudo-determinant over the non-null
    space and require a centred input.
    """
    theta = np.asarray(theta_col, dtype=float)
    if theta.shape != (structure.n,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({structure.n},)")
    improper = spec.family == "ICAR" or (spec.family == "BYM2" and spec.hyper >= 1.0)
    if improper and abs(theta.sum()) > 1e-8 * max(1.0, np.abs(theta).sum()):
        raise ConstraintViolated(f"{spec.family} column must sum to zero (sum={theta.sum():.3g})")
    if spec.family == "PCAR":
        _check_pcar_rho(spec.hyper, structure)
        if spec.hyper >= 1.0:
            raise RhoOutOfRange("PCAR density needs rho < 1")
    kernel = prior_kernel(spec.family, structure)
    return kernel.log_density(theta, spec.hyper)
