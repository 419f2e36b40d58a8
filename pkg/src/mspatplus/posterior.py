"""Posterior draws, summaries, correlation extraction, DIC and WAIC."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DimensionMismatch, TooFewDraws, ValidationError

MIN_DRAWS = 10
SUMMARY_COLUMNS = ("parameter", "mean", "sd", "q025", "q50", "q975")


@dataclass(frozen=True, eq=False)
class PosteriorSamples:
    """Pooled MCMC draws from one or more chains.

    Arrays are indexed by draw first; ``chain`` gives the chain id of each
    draw. ``eta`` holds the n x J log-mean per draw for DIC/WAIC.
    """

    alpha: np.ndarray
    beta: np.ndarray
    hyper: np.ndarray
    sigma: np.ndarray
    eta: np.ndarray
    chain: np.ndarray
    families: tuple = ()
    acceptance: list = field(default_factory=list)
    logpost: np.ndarray | None = None
    model_name: str = "M-model"

    @classmethod
    def from_chains(cls, chains, spec=None, data=None):
        cat = lambda key: np.concatenate([c[key] for c in chains], axis=0)
        ids = np.concatenate([np.full(len(c["alpha"]), i) for i, c in enumerate(chains)])
        return cls(
            alpha=cat("alpha"), beta=cat("beta"), hyper=cat("hyper"), sigma=cat("sigma"),
            eta=cat("eta"), chain=ids,
            families=tuple(p.family for p in spec.priors) if spec is not None else (),
            acceptance=[c.get("acceptance", {}) for c in chains],
            logpost=cat("logpost") if all("logpost" in c for c in chains) else None,
            model_name=spec.name if spec is not None else "M-model",
        )

    @property
    def n_draws(self):
        return self.alpha.shape[0]

    @property
    def J(self):
        return self.alpha.shape[1]

    @property
    def n_chains(self):
        return int(self.chain.max()) + 1 if self.chain.size else 0

    def correlations(self):
        """Per-draw correlation matrices derived from ``sigma``."""
        sd = np.sqrt(np.diagonal(self.sigma, axis1=1, axis2=2))
        R = self.sigma / (sd[:, :, None] * sd[:, None, :])
        return np.clip(R, -1.0, 1.0)

    def scalar_draws(self):
        """Ordered mapping from parameter name to its 1-D draw vector."""
        out = {}
        J = self.J
        for j in range(J):
            out[f"alpha[{j + 1}]"] = self.alpha[:, j]
        for j in range(J):
            out[f"beta[{j + 1}]"] = self.beta[:, j]
        for j in range(J):
            fam = self.families[j] if self.families else None
            if fam == "PCAR":
                out[f"rho[{j + 1}]"] = self.hyper[:, j]
            elif fam == "BYM2":
                out[f"lambda[{j + 1}]"] = self.hyper[:, j]
        for j in range(J):
            for l in range(j, J):
                out[f"sigma[{j + 1},{l + 1}]"] = self.sigma[:, j, l]
        if J >= 2:
            R = self.correlations()
            for j in range(J):
                for l in range(j + 1, J):
                    out[f"corr[{j + 1},{l + 1}]"] = R[:, j, l]
        return out

    def chains_of(self, x):
        """Split a pooled draw vector into a list of per-chain vectors."""
        return [x[self.chain == c] for c in range(self.n_chains)]


@dataclass(frozen=True)
class SummaryRow:
    parameter: str
    mean: float
    sd: float
    q025: float
    q50: float
    q975: float

    def as_tuple(self):
        return (self.parameter, self.mean, self.sd, self.q025, self.q50, self.q975)


def summarize_draws(name, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < MIN_DRAWS:
        raise TooFewDraws(f"{name}: need at least {MIN_DRAWS} draws, got {x.size}")
    q = np.quantile(x, [0.025, 0.5, 0.975], method="linear")
    # constant draws give SD exactly 0 rather than rounding noise
    sd = 0.0 if np.all(x == x[0]) else float(np.std(x, ddof=1))
    return SummaryRow(name, float(np.mean(x)), sd, float(q[0]), float(q[1]), float(q[2]))


def summarize(samples):
    """Mean, SD, 2.5%, 50%, 97.5% per scalar parameter.

    ``samples`` is a PosteriorSamples or a mapping name -> 1-D draws.
    Quantiles use type-7 (linear) interpolation.
    """
    draws = samples.scalar_draws() if isinstance(samples, PosteriorSamples) else samples
    return [summarize_draws(k, v) for k, v in draws.items()]


def correlation_summary(samples):
    """Posterior median and 95% interval of each between-crime correlation.

    Returns a dict ``{(j, l): (median, lower, upper)}`` with 0-based indices.
    """
    sigma = samples.sigma if isinstance(samples, PosteriorSamples) else np.asarray(samples)
    if sigma.ndim != 3 or sigma.shape[1] != sigma.shape[2]:
        raise DimensionMismatch(f"expected draws x J x J, got {sigma.shape}")
    J = sigma.shape[1]
    if J < 2:
        raise ValidationError("correlation summary needs J >= 2")
    if sigma.shape[0] < MIN_DRAWS:
        raise TooFewDraws(f"need at least {MIN_DRAWS} draws, got {sigma.shape[0]}")
    sd = np.sqrt(np.diagonal(sigma, axis1=1, axis2=2))
    R = np.clip(sigma / (sd[:, :, None] * sd[:, None, :]), -1.0, 1.0)
    out = {}
    for j in range(J):
        for l in range(j + 1, J):
            q = np.quantile(R[:, j, l], [0.5, 0.025, 0.975], method="linear")
            out[(j, l)] = tuple(float(v) for v in q)
    return out


def _eta_draws(samples):
    eta = samples.eta if isinstance(samples, PosteriorSamples) else np.asarray(samples, dtype=float)
    if eta.ndim == 2:
        eta = eta[:, :, None]
    return eta


def _pointwise_loglik(eta, Y):
    """Poisson log-likelihood with log(Y!) included, per draw and cell."""
    return Y * eta - np.exp(eta) - gammaln(Y + 1.0)


def _counts(data):
    Y = np.asarray(data.Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def _check_draws(eta, Y, minimum):
    if eta.shape[1:] != Y.shape:
        raise DimensionMismatch(f"draws have cells {eta.shape[1:]}, data {Y.shape}")
    if eta.shape[0] < minimum:
        raise TooFewDraws(f"need at least {minimum} draws, got {eta.shape[0]}")


def dic(samples, data):
    """Deviance information criterion ``Dbar + pD``.

    ``pD = Dbar - D(posterior mean of mu)``. Accepts PosteriorSamples or a
    raw array of per-draw log-means (draws x n [x J]).

    Returns
    -------
    dict with keys ``dic``, ``dbar``, ``pd``
    """
    eta = _eta_draws(samples)
    Y = _counts(data)
    _check_draws(eta, Y, 1)
    dev = -2.0 * _pointwise_loglik(eta, Y).sum(axis=(1, 2))
    dbar = float(dev.mean())
    mu_bar = np.exp(eta).mean(axis=0)
    dhat = float(-2.0 * np.sum(Y * np.log(mu_bar) - mu_bar - gammaln(Y + 1.0)))
    pd = dbar - dhat
    return {"dic": dbar + pd, "dbar": dbar, "pd": pd}


def waic(samples, data):
    """Watanabe-Akaike information criterion ``-2 (lppd - pWAIC)``.

    ``pWAIC`` sums the per-cell sample variance (divisor S - 1) of the
    pointwise log-likelihood over draws.

    Returns
    -------
    dict with keys ``waic``, ``lppd``, ``p_waic``
    """
    eta = _eta_draws(samples)
    Y = _counts(data)
    _check_draws(eta, Y, 2)
    ll = _pointwise_loglik(eta, Y)
    S = ll.shape[0]
    lppd = float(np.sum(logsumexp(ll, axis=0) - math.log(S)))
    var = np.var(ll, axis=0, ddof=1)
    # cells whose draws agree exactly contribute exactly 0
    var[np.all(ll == ll[:1], axis=0)] = 0.0
    p_waic = float(np.sum(var))
    return {"waic": -2.0 * (lppd - p_waic), "lppd": lppd, "p_waic": p_waic}


def autocorrelation(x):
    """Normalised autocorrelation of a 1-D series via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n]
    if acov[0] <= 0:
        return np.r_[1.0, np.zeros(n - 1)]
    return acov / acov[0]


def effective_sample_size(chains):
    """ESS pooled over chains with Geyer's initial positive sequence.

    ``chains`` is a list of 1-D draw vectors (or a single vector).
    """
    if isinstance(chains, np.ndarray) and chains.ndim == 1:
        chains = [chains]
    total = 0.0
    for x in chains:
        x = np.asarray(x, dtype=float)
        n = x.size
        if n < 4:
            total += n
            continue
        rho = autocorrelation(x)
        if np.all(x == x[0]):
            total += n
            continue
        tau = -1.0
        for t in range(0, n - 1, 2):
            pair = rho[t] + rho[t + 1]
            if pair <= 0:
                break
            tau += 2.0 * pair
        total += n / max(tau, 1e-12)
    return float(total)


def split_rhat(chains):
    """Split-chain potential scale reduction factor."""
    if isinstance(chains, np.ndarray) and chains.ndim == 1:
        chains = [chains]
    halves = []
    for x in chains:
        h = len(x) // 2
        if h < 2:
            return float("nan")
        halves.extend([np.asarray(x[:h], float), np.asarray(x[h:2 * h], float)])
    m = len(halves)
    n = len(halves[0])
    means = np.array([h.mean() for h in halves])
    W = np.mean([h.var(ddof=1) for h in halves])
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(math.sqrt(var_plus / W)) if m > 1 else float("nan")


def diagnostics(samples):
    """ESS and split R-hat per scalar parameter plus acceptance rates.

    Returns a list of ``(parameter, ess, rhat)`` and a dict of mean
    acceptance rates per block over chains.
    """
    rows = []
    for name, x in samples.scalar_draws().items():
        parts = samples.chains_of(x)
        rows.append((name, effective_sample_size(parts), split_rhat(parts)))
    acc = {}
    for per_chain in samples.acceptance:
        for k, v in per_chain.items():
            acc.setdefault(k, []).append(v)
    return rows, {k: float(np.mean(v)) for k, v in acc.items()}
