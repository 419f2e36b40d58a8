"""Adaptive random-walk Metropolis-within-Gibbs sampler for M-models.

One sweep updates, in order:

1. ``(alpha, beta)`` jointly, followed by one ridge move per crime that
   trades ``beta_j`` against the spatial field along the covariate direction
   while leaving the linear predictor unchanged;
2. each column of ``Phi`` with a Gaussian proposal preconditioned by the
   local curvature of the posterior (ICAR columns are re-centred);
3. the Bartlett scalars ``(log c, offdiag)``, once holding ``Theta = Phi M``
   fixed and once holding ``Phi`` fixed;
4. each rho_j / lambda_j on the logit scale.

Step sizes and proposal covariances adapt during burn-in only, so the kernel
used for the retained draws is fixed. Chains are seeded from
``SeedSequence([seed, replicate, chain])`` on a Philox generator.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MSpatPlusError, NonFiniteTarget
from .glm import fit_glm_baseline
from .mmodel import MAX_LOG_MEAN, BartlettFactor, bartlett_log_prior, log_normal
from .posterior import PosteriorSamples
from .priors import LAMBDA_MAX

log = logging.getLogger(__name__)

ALL_BLOCKS = frozenset({"fixed", "ridge", "phi", "bartlett", "hyper"})


@dataclass(frozen=True)
class McmcConfig:
    n_burnin: int = 5000
    n_iterations: int = 20000
    thin: int = 10
    n_chains: int = 3
    seed: int = 0
    adapt_target: float = 0.3
    adapt_interval: int = 50
    min_step: float = 1e-4
    max_step: float = 10.0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_iterations <= 0:
            raise ConfigError("n_iterations must be positive")
        if self.n_burnin < 0:
            raise ConfigError("n_burnin must be non-negative")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be at least 1")
        if not 0.0 < self.adapt_target < 1.0:
            raise ConfigError("adapt_target must lie in (0, 1)")
        if self.adapt_interval < 1:
            raise ConfigError("adapt_interval must be at least 1")
        if not 0.0 < self.min_step < self.max_step:
            raise ConfigError("step bounds must satisfy 0 < min_step < max_step")

    @classmethod
    def from_dict(cls, d):
        """Build from a mapping; ``preset`` names a base from PRESETS."""
        d = dict(d)
        preset = d.pop("preset", None)
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown MCMC preset {preset!r}; choose from {sorted(PRESETS)}")
            d = {**PRESETS[preset], **d}
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown MCMC settings: {sorted(unknown)}")
        return cls(**known)


# "desk" is the scaled budget used for the replicated simulation studies
PRESETS = {
    "default": {},
    "desk": {"n_burnin": 2000, "n_iterations": 4000, "thin": 4, "n_chains": 1},
}


def chain_rng(seed, chain=0, replicate=0):
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), int(replicate), int(chain)])
    return np.random.Generator(np.random.Philox(ss))


def poisson_kernel(eta, Y):
    """Default likelihood: Poisson in the log-mean, log(Y!) omitted."""
    if eta.max() > MAX_LOG_MEAN:
        return -np.inf
    return float(np.sum(Y * eta - np.exp(eta)))


class _Adaptive:
    """Robbins-Monro controller of a log step size."""

    def __init__(self, base, target, lo, hi):
        self.base = base
        self.log_scale = 0.0
        self.target = target
        self.lo, self.hi = math.log(lo), math.log(hi)
        self.tries = self.accepts = 0
        self.total_tries = self.total_accepts = 0
        self.batches = 0

    @property
    def step(self):
        return self.base * math.exp(self.log_scale)

    def record(self, accepted):
        self.tries += 1
        self.accepts += accepted

    def adapt(self):
        if self.tries == 0:
            return
        self.batches += 1
        rate = self.accepts / self.tries
        gain = 2.0 / math.sqrt(self.batches)
        ls = self.log_scale + gain * (rate - self.target)
        lo = self.lo - math.log(self.base)
        hi = self.hi - math.log(self.base)
        self.log_scale = min(max(ls, lo), hi)
        self.tries = self.accepts = 0

    def restart(self):
        """Forget the learned scale after the proposal shape changed."""
        self.log_scale = 0.0
        self.batches = 0
        self.tries = self.accepts = 0

    def reset_counts(self):
        self.tries = self.accepts = 0
        self.total_tries = self.total_accepts = 0

    def record_total(self, accepted):
        self.total_tries += 1
        self.total_accepts += accepted

    @property
    def rate(self):
        return self.total_accepts / self.total_tries if self.total_tries else float("nan")


def _sym_sqrt(S):
    vals, vecs = np.linalg.eigh(S)
    if vals[0] <= 0:
        return None
    return (vecs * np.sqrt(vals)) @ vecs.T


def _chol_or_diag(C):
    C = 0.5 * (C + C.T)
    jitter = 1e-10 * max(np.trace(C) / C.shape[0], 1e-300)
    try:
        return np.linalg.cholesky(C + jitter * np.eye(C.shape[0]))
    except np.linalg.LinAlgError:
        return np.diag(np.sqrt(np.maximum(np.diag(C), jitter)))


class _Chain:
    def __init__(self, spec, data, config, rng, loglik=None, blocks=ALL_BLOCKS, init=None):
        self.cfg = config
        self.rng = rng
        self.Y = data.Y
        self.log_e = data.log_e
        self.Z = spec.Z
        self.n, self.J = spec.n, spec.J
        self.kernels = spec.kernels()
        self.priors = spec.priors
        self.icar = np.array([p.family == "ICAR" for p in spec.priors])
        self.hyper_cols = [j for j, p in enumerate(spec.priors) if p.has_hyper]
        self.bym2 = np.array([p.family == "BYM2" for p in spec.priors])
        self.sigma2 = spec.wishart_sigma2
        self.dof = spec.wishart_dof
        self.fprec = spec.fixed_precision
        self.loglik_fn = loglik or poisson_kernel
        self.blocks = frozenset(blocks)
        self.tril = np.tril_indices(self.J, -1)
        # Theta-fixed Bartlett moves need every column on the same constraint
        self.homogeneous = bool(self.icar.all() or not self.icar.any())
        self.n_eff = self.n - 1 if self.icar.all() else self.n
        self.Zc = self.Z - self.Z.mean(axis=0)
        self._init_state(data, init)

    # ---- state -------------------------------------------------------
    def _init_state(self, data, init):
        J = self.J
        if init is not None:
            self.alpha = np.array(init.alpha, dtype=float)
            self.beta = np.array(init.beta, dtype=float)
            self.Phi = np.array(init.Phi, dtype=float)
            self.logc = np.log(init.bartlett.c)
            self.off = np.array(init.bartlett.offdiag, dtype=float)
            self.hyper = np.array(init.hyper, dtype=float)
            self.glm_cov = None
        else:
            try:
                glm = fit_glm_baseline(data, self.Z)
                self.alpha, self.beta = glm.alpha.copy(), glm.beta.copy()
                self.glm_cov = glm.cov
            except MSpatPlusError:
                self.alpha = np.log(data.Y.sum(axis=0) + 0.5) - np.log(data.e.sum(axis=0))
                self.beta = np.zeros(J)
                self.glm_cov = None
            self.Phi = np.zeros((self.n, J))
            self.logc = np.full(J, 0.5 * math.log(self.dof))
            self.off = np.zeros(J * (J - 1) // 2)
            self.hyper = np.where([p.has_hyper for p in self.priors], 0.5, np.nan)
        self.M = self._M(self.logc, self.off)
        if self.M is None:
            raise NonFiniteTarget("initial Bartlett factor is not positive definite")
        self.Minv = np.linalg.inv(self.M)
        self._refresh()
        if not np.isfinite(self.logpost()):
            raise NonFiniteTarget("log-posterior is not finite at the initial state")

    def _M(self, logc, off):
        A = np.diag(np.exp(logc))
        A[self.tril] = off
        return _sym_sqrt(self.sigma2 * (A @ A.T))

    def _refresh(self):
        for j in np.flatnonzero(self.icar):
            self.Phi[:, j] -= self.Phi[:, j].mean()
        self.theta = self.Phi @ self.M
        self.eta = self.log_e + self.alpha + self.Z * self.beta + self.theta
        self.ll = self.loglik_fn(self.eta, self.Y)
        self.lat = np.array([self._lat(j, self.Phi[:, j], self.hyper[j]) for j in range(self.J)])
        self.lp_bart = self._bart_prior(self.logc, self.off)
        self.lp_fixed = self._fixed_prior(self.alpha, self.beta)

    def _lat(self, j, phi, h):
        k = self.kernels[j]
        return 0.5 * k.logdet(h) - 0.5 * k.quad(phi, h)

    def _bart_prior(self, logc, off):
        b = BartlettFactor(np.exp(logc), off)
        return bartlett_log_prior(b, self.dof) + float(np.sum(logc))  # + log-Jacobian

    def _fixed_prior(self, alpha, beta):
        return float(np.sum(log_normal(alpha, self.fprec)) + np.sum(log_normal(beta, self.fprec)))

    def _hyper_prior(self, j, h):
        return math.log(h) + math.log1p(-h)  # Unif(0,1) on the logit scale

    def logpost(self):
        hp = sum(self._hyper_prior(j, self.hyper[j]) for j in self.hyper_cols)
        return self.ll + self.lat.sum() + self.lp_bart + self.lp_fixed + hp

    def _accept(self, log_ratio):
        return log_ratio >= 0 or math.log(self.rng.random()) < log_ratio

    # ---- proposal set-up --------------------------------------------
    def _setup_adaptation(self):
        J, cfg = self.J, self.cfg
        tgt, lo, hi = cfg.adapt_target, cfg.min_step, cfg.max_step
        d1 = 2 * J
        if self.glm_cov is not None:
            C = np.zeros((d1, d1))
            for j in range(J):
                idx = [j, J + j]
                C[np.ix_(idx, idx)] = 4.0 * self.glm_cov[j]
        else:
            C = 0.01 * np.eye(d1)
        self.L_fixed = _chol_or_diag(C)
        self.ad_fixed = _Adaptive(2.38 / math.sqrt(d1), tgt, lo, hi)
        # column norms scaled by the max entry so huge covariates do not overflow
        zmax = np.maximum(np.abs(self.Zc).max(axis=0), 1e-300)
        scale_z = np.maximum(zmax * np.sqrt(np.sum((self.Zc / zmax) ** 2, axis=0)), 1e-12)
        self.ad_ridge = [_Adaptive(0.5 / s, tgt, lo * 1e-3, hi * 1e3) for s in scale_z]
        self.ad_phi = [_Adaptive(2.38 / math.sqrt(self.n), tgt, lo, hi) for _ in range(J)]
        self._phi_precond()
        d3 = J * (J + 1) // 2
        self.L_bart = 0.1 * np.eye(d3)
        self.ad_bart_theta = _Adaptive(2.38 / math.sqrt(d3), tgt, lo, hi)
        self.ad_bart_phi = _Adaptive(2.38 / math.sqrt(d3), tgt, lo, hi)
        self.ad_hyper = {j: _Adaptive(1.0, tgt, lo, hi) for j in self.hyper_cols}
        self.hist_fixed = []
        self.hist_bart = []

    def _phi_precond(self):
        mu = np.exp(self.eta)
        info = mu @ (self.M ** 2).T  # sum_l M_jl^2 mu_il, n x J
        self.R_phi = []
        for j in range(self.J):
            k = self.kernels[j]
            h = self.hyper[j]
            if k.family == "BYM2":
                P = (k.Ut.T / k._bym2_var(min(h, LAMBDA_MAX))) @ k.Ut
            elif k.family == "PCAR":
                P = np.diag(k.d) - h * k.W
            else:
                P = k.Q.copy()
            P[np.diag_indices(self.n)] += info[:, j] + 1e-8
            Lp = np.linalg.cholesky(0.5 * (P + P.T))
            self.R_phi.append(np.linalg.inv(Lp).T)  # R @ z ~ N(0, P^-1)

    def _refresh_covariances(self):
        for hist, attr in ((self.hist_fixed, "L_fixed"), (self.hist_bart, "L_bart")):
            if len(hist) >= 200:
                H = np.asarray(hist[len(hist) // 2:])
                setattr(self, attr, _chol_or_diag(np.cov(H, rowvar=False)))
                for ad in ((self.ad_fixed,) if attr == "L_fixed" else (self.ad_bart_theta, self.ad_bart_phi)):
                    ad.restart()

    # ---- block updates ------------------------------------------------
    def _step_fixed(self, ad):
        J = self.J
        d = ad.step * (self.L_fixed @ self.rng.standard_normal(2 * J))
        a_new, b_new = self.alpha + d[:J], self.beta + d[J:]
        eta_new = self.eta + d[:J] + self.Z * d[J:]
        ll_new = self.loglik_fn(eta_new, self.Y)
        lpf_new = self._fixed_prior(a_new, b_new)
        ok = self._accept(ll_new - self.ll + lpf_new - self.lp_fixed)
        if ok:
            self.alpha, self.beta, self.eta, self.ll, self.lp_fixed = a_new, b_new, eta_new, ll_new, lpf_new
        return ok

    def _step_ridge(self, j, ad):
        delta = ad.step * self.rng.standard_normal()
        zc = self.Zc[:, j]
        a_new, b_new = self.alpha.copy(), self.beta.copy()
        b_new[j] += delta
        a_new[j] -= delta * (self.Z[:, j].mean())
        phi_new = self.Phi - delta * np.outer(zc, self.Minv[j])
        lat_new = np.array([self._lat(l, phi_new[:, l], self.hyper[l]) for l in range(self.J)])
        lpf_new = self._fixed_prior(a_new, b_new)
        ok = self._accept(lat_new.sum() - self.lat.sum() + lpf_new - self.lp_fixed)
        if ok:
            self.alpha, self.beta, self.Phi, self.lat, self.lp_fixed = a_new, b_new, phi_new, lat_new, lpf_new
            self.theta = self.Phi @ self.M
        return ok

    def _step_phi(self, j, ad):
        dphi = ad.step * (self.R_phi[j] @ self.rng.standard_normal(self.n))
        if self.icar[j]:
            dphi -= dphi.mean()
        phi_new = self.Phi[:, j] + dphi
        eta_new = self.eta + np.outer(dphi, self.M[j])
        ll_new = self.loglik_fn(eta_new, self.Y)
        lat_new = self._lat(j, phi_new, self.hyper[j])
        ok = self._accept(ll_new - self.ll + lat_new - self.lat[j])
        if ok:
            self.Phi[:, j] = phi_new
            self.eta, self.ll = eta_new, ll_new
            self.lat[j] = lat_new
            self.theta = self.theta + np.outer(dphi, self.M[j])
        return ok

    def _propose_bartlett(self, ad):
        J = self.J
        d = ad.step * (self.L_bart @ self.rng.standard_normal(J * (J + 1) // 2))
        logc_new = self.logc + d[:J]
        off_new = self.off + d[J:]
        if np.any(logc_new < -30) or np.any(logc_new > 30):
            return None
        M_new = self._M(logc_new, off_new)
        if M_new is None:
            return None
        return logc_new, off_new, M_new

    def _step_bartlett_theta(self, ad):
        prop = self._propose_bartlett(ad)
        if prop is None:
            return False
        logc_new, off_new, M_new = prop
        Minv_new = np.linalg.inv(M_new)
        phi_new = self.theta @ Minv_new
        for j in np.flatnonzero(self.icar):
            phi_new[:, j] -= phi_new[:, j].mean()
        _, logdet_B = np.linalg.slogdet(self.M @ Minv_new)
        lat_new = np.array([self._lat(l, phi_new[:, l], self.hyper[l]) for l in range(self.J)])
        lpb_new = self._bart_prior(logc_new, off_new)
        log_ratio = lat_new.sum() - self.lat.sum() + lpb_new - self.lp_bart + self.n_eff * logdet_B
        ok = self._accept(log_ratio)
        if ok:
            self.logc, self.off, self.M, self.Minv = logc_new, off_new, M_new, Minv_new
            self.Phi, self.lat, self.lp_bart = phi_new, lat_new, lpb_new
        return ok

    def _step_bartlett_phi(self, ad):
        prop = self._propose_bartlett(ad)
        if prop is None:
            return False
        logc_new, off_new, M_new = prop
        theta_new = self.Phi @ M_new
        eta_new = self.eta - self.theta + theta_new
        ll_new = self.loglik_fn(eta_new, self.Y)
        lpb_new = self._bart_prior(logc_new, off_new)
        ok = self._accept(ll_new - self.ll + lpb_new - self.lp_bart)
        if ok:
            self.logc, self.off, self.M = logc_new, off_new, M_new
            self.Minv = np.linalg.inv(M_new)
            self.theta, self.eta, self.ll, self.lp_bart = theta_new, eta_new, ll_new, lpb_new
        return ok

    def _step_hyper(self, j, ad):
        h = self.hyper[j]
        x = math.log(h) - math.log1p(-h) + ad.step * self.rng.standard_normal()
        h_new = 1.0 / (1.0 + math.exp(-x)) if x > -700 else 0.0
        if not 0.0 < h_new < 1.0 or (self.bym2[j] and h_new > LAMBDA_MAX):
            return False
        lat_new = self._lat(j, self.Phi[:, j], h_new)
        log_ratio = lat_new - self.lat[j] + self._hyper_prior(j, h_new) - self._hyper_prior(j, h)
        ok = self._accept(log_ratio)
        if ok:
            self.hyper[j] = h_new
            self.lat[j] = lat_new
        return ok

    # ---- driver -------------------------------------------------------
    def _sweep(self, burning):
        b = self.blocks
        moves = []
        if "fixed" in b:
            moves.append((self.ad_fixed, self._step_fixed, ()))
        if "ridge" in b:
            moves.extend((self.ad_ridge[j], self._step_ridge, (j,)) for j in range(self.J))
        if "phi" in b:
            moves.extend((self.ad_phi[j], self._step_phi, (j,)) for j in range(self.J))
        if "bartlett" in b:
            if self.homogeneous:
                moves.append((self.ad_bart_theta, self._step_bartlett_theta, ()))
            moves.append((self.ad_bart_phi, self._step_bartlett_phi, ()))
        if "hyper" in b:
            moves.extend((self.ad_hyper[j], self._step_hyper, (j,)) for j in self.hyper_cols)
        for ad, fn, args in moves:
            ok = fn(*args, ad)
            if burning:
                ad.record(ok)
            else:
                ad.record_total(ok)

    def _adaptives(self):
        out = {"fixed": self.ad_fixed}
        out.update({f"ridge[{j + 1}]": a for j, a in enumerate(self.ad_ridge)})
        out.update({f"phi[{j + 1}]": a for j, a in enumerate(self.ad_phi)})
        out["bartlett_theta"] = self.ad_bart_theta
        out["bartlett_phi"] = self.ad_bart_phi
        out.update({f"hyper[{j + 1}]": a for j, a in self.ad_hyper.items()})
        return out

    def _active_adaptives(self):
        b = self.blocks
        keep = {}
        for name, ad in self._adaptives().items():
            head = name.split("[")[0]
            if head in ("fixed", "ridge", "phi", "hyper") and head not in b:
                continue
            if head.startswith("bartlett") and "bartlett" not in b:
                continue
            if name == "bartlett_theta" and not self.homogeneous:
                continue
            keep[name] = ad
        return keep

    def run(self):
        cfg = self.cfg
        self._setup_adaptation()
        ads = self._active_adaptives()
        interval = cfg.adapt_interval
        for it in range(cfg.n_burnin):
            self._sweep(True)
            if "fixed" in self.blocks:
                self.hist_fixed.append(np.concatenate([self.alpha, self.beta]))
            if "bartlett" in self.blocks:
                self.hist_bart.append(np.concatenate([self.logc, self.off]))
            if (it + 1) % interval == 0:
                for ad in ads.values():
                    ad.adapt()
                # proposal shapes are refreshed early enough that the step
                # sizes can re-adapt to them before burn-in ends
                if (it + 1) % (10 * interval) == 0 and it + 1 <= 0.8 * cfg.n_burnin:
                    self._refresh_covariances()
                    if "phi" in self.blocks:
                        self._phi_precond()
                        for ad in self.ad_phi:
                            ad.restart()
        self._refresh()
        for ad in ads.values():
            ad.reset_counts()
        n_keep = cfg.n_iterations // cfg.thin
        J, n = self.J, self.n
        out = {
            "alpha": np.empty((n_keep, J)),
            "beta": np.empty((n_keep, J)),
            "hyper": np.empty((n_keep, J)),
            "sigma": np.empty((n_keep, J, J)),
            "eta": np.empty((n_keep, n, J)),
            "logpost": np.empty(n_keep),
        }
        s = 0
        for it in range(cfg.n_iterations):
            self._sweep(False)
            if (it + 1) % cfg.thin == 0 and s < n_keep:
                A = np.diag(np.exp(self.logc))
                A[self.tril] = self.off
                out["alpha"][s] = self.alpha
                out["beta"][s] = self.beta
                out["hyper"][s] = self.hyper
                out["sigma"][s] = self.sigma2 * (A @ A.T)
                out["eta"][s] = self.eta
                out["logpost"][s] = self.logpost()
                s += 1
        if not np.isfinite(out["logpost"]).all():
            raise NonFiniteTarget("non-finite log-posterior during sampling")
        out["acceptance"] = {name: ad.rate for name, ad in ads.items()}
        return out


def _run_chain(spec, data, config, chain, replicate, loglik, blocks, init):
    rng = chain_rng(config.seed, chain, replicate)
    return _Chain(spec, data, config, rng, loglik=loglik, blocks=blocks, init=init).run()


def fit_mcmc(spec, data, config=None, replicate=0, loglik=None, blocks=None, init=None):
    """Sample the posterior of an M-model.

    Parameters
    ----------
    spec : MModelSpec
    data : CountData
    config : McmcConfig, optional
    replicate : int
        Extra RNG key so replicate fits in a simulation study get independent
        streams from one seed.
    loglik : callable, optional
        ``loglik(eta, Y) -> float`` replacing the Poisson likelihood (testing
        hook; ``eta`` is the n x J log-mean).
    blocks : set of str, optional
        Subset of ``{"fixed", "ridge", "phi", "bartlett", "hyper"}`` to update;
        the rest stay at their initial values (testing hook).
    init : LatentState, optional
        Starting state instead of the GLM-based default.

    Returns
    -------
    PosteriorSamples
    """
    config = config or McmcConfig()
    if data.shape != (spec.n, spec.J):
        raise ConfigError(f"data shape {data.shape} does not match model ({spec.n}, {spec.J})")
    blocks = ALL_BLOCKS if blocks is None else frozenset(blocks)
    if not blocks <= ALL_BLOCKS:
        raise ConfigError(f"unknown blocks: {sorted(blocks - ALL_BLOCKS)}")
    args = [(spec, data, config, c, replicate, loglik, blocks, init) for c in range(config.n_chains)]
    if config.n_jobs > 1 and config.n_chains > 1 and loglik is None:
        with ProcessPoolExecutor(max_workers=min(config.n_jobs, config.n_chains)) as pool:
            chains = list(pool.map(_run_chain, *zip(*args)))
    else:
        chains = [_run_chain(*a) for a in args]
    return PosteriorSamples.from_chains(chains, spec=spec, data=data)
