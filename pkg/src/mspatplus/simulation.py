"""Confounding simulation studies: data generation, batch fitting and metrics.

Study 1 draws counts from fixed covariates X1 (observed) and X2, X3
(unobserved, correlated with X1). Study 2 draws a fixed intrinsic
multivariate CAR field theta and a covariate X* correlated with it. In both
studies the design is generated once and only the Poisson noise changes
between replicates.
"""

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateX1,
    DimensionMismatch,
    InfeasibleTargets,
    LengthMismatch,
    MSpatPlusError,
    NonPositiveExpected,
    TargetNotPD,
    ValidationError,
)
from .graph import icar_structure, bym2_scaled_structure
from .mcmc import McmcConfig, fit_mcmc
from .mmodel import CountData, MModelSpec
from .posterior import correlation_summary, dic, summarize, waic
from .priors import SpatialPriorSpec
from .spectral import eigendecompose, k_from_model_name, large_scale_subspace, split_covariate

log = logging.getLogger(__name__)

# stream tags keep design, count and MCMC generators apart for one seed
_DESIGN_TAG = 1_000_002
_COUNTS_TAG = 1_000_003
EXACT_TOL = 1e-12


def stream(seed, *keys):
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), *map(int, keys)])
    return np.random.Generator(np.random.Philox(ss))


def _standardize(x):
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    return (x - x.mean()) / sd


def _unit(x):
    return x / np.linalg.norm(x)


# ---------------------------------------------------------------- study 1

@dataclass(frozen=True, eq=False)
class Scenario1Spec:
    """Study 1 design; ``targets`` are (cor(X1,X2), cor(X1,X3), cor(X2,X3))."""

    X1: np.ndarray
    e: np.ndarray
    alpha: tuple = (-0.12, -0.03)
    beta: tuple = (-0.15, -0.20)
    beta_star: tuple = (-0.30, -0.30)
    targets: tuple = (0.5, 0.7, 0.7)
    L: int = 300
    subspace_size: int | None = None
    e_synthetic: bool = True

    def __post_init__(self):
        X1 = np.asarray(self.X1, dtype=float)
        e = np.asarray(self.e, dtype=float)
        if e.ndim == 1:
            e = e.reshape(2, -1).T if e.size == 2 * X1.size else e
        if e.shape != (X1.size, 2):
            raise DimensionMismatch(f"expected counts {e.shape} vs n={X1.size}, J=2")
        if np.any(e <= 0):
            raise NonPositiveExpected("expected counts must be positive")
        object.__setattr__(self, "X1", X1)
        object.__setattr__(self, "e", e)
        correlation_matrix(self.targets)
        if self.L < 1:
            raise ValidationError("L must be at least 1")

    @property
    def n(self):
        return self.X1.size


def correlation_matrix(targets):
    """3 x 3 correlation matrix of (X1, X2, X3); raises TargetNotPD."""
    t12, t13, t23 = map(float, targets)
    R = np.array([[1.0, t12, t13], [t12, 1.0, t23], [t13, t23, 1.0]])
    if np.linalg.eigvalsh(R)[0] <= 0:
        raise TargetNotPD(f"target correlations {targets} are not positive definite")
    return R


def gen_correlated_covariates(X1, targets, rng, subspace=None):
    """Covariates X2, X3 with exact sample correlations to X1 and each other.

    Without ``subspace``, raw normals are orthogonalized against X1 and each
    other (Gram-Schmidt) and recombined with the Cholesky weights of the
    target matrix. With ``subspace`` (an n x m orthonormal basis of centred
    vectors), X2 and X3 are built inside that span: the anchor is the
    projection P X1 and the targets with X1 are divided by
    ``r = cor(P X1, X1)`` so the sample correlations with X1 itself are
    still exact.

    Parameters
    ----------
    X1 : (n,) array
    targets : (3,) sequence or (3, 3) array
        cor(X1,X2), cor(X1,X3), cor(X2,X3), or the full correlation matrix.
    rng : numpy Generator
    subspace : (n, m) array, optional

    Returns
    -------
    X2, X3 : standardized (n,) arrays
    """
    targets = np.asarray(targets, dtype=float)
    if targets.shape == (3, 3):
        if not np.allclose(targets, targets.T) or not np.allclose(np.diag(targets), 1.0):
            raise TargetNotPD("target matrix must be symmetric with unit diagonal")
        targets = (targets[0, 1], targets[0, 2], targets[1, 2])
    t12, t13, t23 = correlation_matrix(targets)[np.triu_indices(3, 1)]
    X1 = np.asarray(X1, dtype=float)
    n = X1.size
    x1c = X1 - X1.mean()
    if n < 4 or np.linalg.norm(x1c) <= 1e-12 * max(1.0, np.abs(X1).max()):
        raise DegenerateX1("X1 must be non-constant with n >= 4")
    if subspace is None:
        basis = np.eye(n) - 1.0 / n  # centring projector
        anchor = _unit(x1c)
        r = 1.0
    else:
        S = np.asarray(subspace, dtype=float)
        if S.shape[0] != n or S.shape[1] < 3:
            raise DimensionMismatch(f"subspace {S.shape} needs n={n} rows and >= 3 columns")
        basis = S @ S.T
        px = basis @ x1c
        if np.linalg.norm(px) <= 1e-8 * np.linalg.norm(x1c):
            raise DegenerateX1("X1 has no component in the subspace")
        anchor = _unit(px)
        r = float(np.linalg.norm(px) / np.linalg.norm(x1c))
    R = np.array([[1.0, t12 / r, t13 / r], [t12 / r, 1.0, t23], [t13 / r, t23, 1.0]])
    try:
        C = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise TargetNotPD(
            f"targets {tuple(targets)} are not attainable inside the subspace (r={r:.3f})") from None
    vecs = [anchor]
    for _ in range(2):
        v = basis @ rng.standard_normal(n)
        for u in vecs:
            v -= (u @ v) * u
        for u in vecs:  # second pass for numerical orthogonality
            v -= (u @ v) * u
        vecs.append(_unit(v))
    V = np.column_stack(vecs)
    X2 = V @ C[1]
    X3 = V @ C[2]
    return _standardize(X2), _standardize(X3)


@dataclass(frozen=True, eq=False)
class StudyDesign:
    """Fixed design shared by all replicates of a study."""

    log_risk: np.ndarray  # n x J
    e: np.ndarray
    X_obs: np.ndarray  # covariate seen by the fitted models
    truth: dict  # scalar parameter name -> true value
    extras: dict = field(default_factory=dict)

    @property
    def risk(self):
        return np.exp(self.log_risk)

    def counts(self, rng):
        return rng.poisson(self.e * self.risk)


def design_study1(spec, graph, seed):
    """Generate X2, X3 once and return the fixed risk surface."""
    rng = stream(seed, _DESIGN_TAG)
    subspace = None
    if spec.subspace_size:
        basis = eigendecompose(icar_structure(graph))
        subspace = large_scale_subspace(basis, spec.subspace_size)
    X2, X3 = gen_correlated_covariates(spec.X1, spec.targets, rng, subspace=subspace)
    a, b, bs = (np.asarray(v, dtype=float) for v in (spec.alpha, spec.beta, spec.beta_star))
    log_risk = a + spec.X1[:, None] * b + np.column_stack([X2, X3]) * bs
    truth = {"alpha[1]": a[0], "alpha[2]": a[1], "beta[1]": b[0], "beta[2]": b[1]}
    return StudyDesign(log_risk=log_risk, e=spec.e, X_obs=spec.X1, truth=truth,
                       extras={"X2": X2, "X3": X3})


def simulate_study1(spec, graph, seed, design=None):
    """Yield ``(replicate, CountData)`` for the L replicates of Study 1."""
    design = design or design_study1(spec, graph, seed)
    for l in range(spec.L):
        yield l, CountData(design.counts(stream(seed, _COUNTS_TAG, l)), design.e)


# ---------------------------------------------------------------- study 2

@dataclass(frozen=True, eq=False)
class Scenario2Spec:
    """Study 2 design; ``targets`` are (cor(X*,theta_1), cor(X*,theta_2))."""

    e: np.ndarray
    alpha: tuple = (0.12, 0.03)
    beta: tuple = (0.15, 0.20)
    sigma2: tuple = (0.9, 0.2)
    rho: float = 0.7
    targets: tuple = (0.5, 0.7)
    L: int = 300
    exact_field_covariance: bool = False
    e_synthetic: bool = True

    def __post_init__(self):
        e = np.asarray(self.e, dtype=float)
        if e.ndim != 2 or e.shape[1] != 2:
            raise DimensionMismatch(f"expected counts must be n x 2, got {e.shape}")
        if np.any(e <= 0):
            raise NonPositiveExpected("expected counts must be positive")
        object.__setattr__(self, "e", e)
        if not abs(self.rho) < 1:
            raise ValidationError("|rho| must be below 1")
        if min(self.sigma2) <= 0:
            raise ValidationError("variances must be positive")
        if self.L < 1:
            raise ValidationError("L must be at least 1")

    @property
    def sigma_b(self):
        s1, s2 = np.sqrt(self.sigma2)
        c = self.rho * s1 * s2
        return np.array([[self.sigma2[0], c], [c, self.sigma2[1]]])


def sample_intrinsic_mmcar(sigma_b, graph, rng, size=None):
    """Draw theta (n x J) with precision ``Sigma_b^-1 kron Q`` on centred fields.

    For each non-null eigenpair (delta_i, U_i) of Q a J-vector
    ``N(0, Sigma_b / delta_i)`` is drawn and accumulated along U_i.
    """
    Q = icar_structure(graph)
    basis = eigendecompose(Q)
    U = basis.U[:, :-1]
    delta = basis.eigenvalues[:-1]
    S = np.asarray(sigma_b, dtype=float)
    Lc = np.linalg.cholesky(S)
    J = S.shape[0]
    if size is None:
        z = rng.standard_normal((U.shape[1], J))
        theta = U @ ((z @ Lc.T) / np.sqrt(delta)[:, None])
        return theta - theta.mean(axis=0)
    z = rng.standard_normal((size, U.shape[1], J))
    theta = np.einsum("ik,skj->sij", U, (z @ Lc.T) / np.sqrt(delta)[None, :, None])
    return theta - theta.mean(axis=1, keepdims=True)


def recolor_field(theta, sigma_b):
    """Linearly remix centred ``theta`` so its sample covariance equals Sigma_b exactly."""
    n = theta.shape[0]
    theta = theta - theta.mean(axis=0)
    S = theta.T @ theta / (n - 1)
    Ls = np.linalg.cholesky(S)
    Lb = np.linalg.cholesky(sigma_b)
    return theta @ np.linalg.solve(Ls.T, Lb.T)


def gen_covariate_given_fields(theta1, theta2, targets, rng):
    """Standardized X* with exact sample correlations ``targets`` to both fields.

    ``X* = w1 t1 + w2 t2 + w3 eps`` with t1, t2 the standardized fields and
    eps standardized noise orthogonal to both and to the constant.
    """
    t = np.asarray(targets, dtype=float)
    th = np.column_stack([_standardize(theta1), _standardize(theta2)])
    n = th.shape[0]
    c = float(th[:, 0] @ th[:, 1] / (n - 1))
    R = np.array([[1.0, c], [c, 1.0]])
    try:
        w = np.linalg.solve(R, t)
    except np.linalg.LinAlgError:
        raise InfeasibleTargets("the two fields are collinear") from None
    resid = 1.0 - float(t @ w)
    if resid < -EXACT_TOL:
        raise InfeasibleTargets(
            f"targets {tuple(t)} incompatible with cor(theta1, theta2)={c:.4f}")
    w3 = math.sqrt(max(resid, 0.0))
    eps = rng.standard_normal(n)
    basis = np.column_stack([np.ones(n), th])
    eps -= basis @ np.linalg.lstsq(basis, eps, rcond=None)[0]
    eps = _standardize(eps)
    X = th @ w + w3 * eps
    return _standardize(X)


def design_study2(spec, graph, seed):
    rng = stream(seed, _DESIGN_TAG)
    S = spec.sigma_b
    theta = sample_intrinsic_mmcar(S, graph, rng)
    if spec.exact_field_covariance:
        theta = recolor_field(theta, S)
    X = gen_covariate_given_fields(theta[:, 0], theta[:, 1], spec.targets, rng)
    a, b = np.asarray(spec.alpha, float), np.asarray(spec.beta, float)
    log_risk = a + X[:, None] * b + theta
    truth = {"alpha[1]": a[0], "alpha[2]": a[1], "beta[1]": b[0], "beta[2]": b[1],
             "corr[1,2]": float(spec.rho)}
    return StudyDesign(log_risk=log_risk, e=spec.e, X_obs=X, truth=truth, extras={"theta": theta})


def simulate_study2(spec, graph, seed, design=None):
    """Yield ``(replicate, CountData)`` for the L replicates of Study 2."""
    design = design or design_study2(spec, graph, seed)
    for l in range(spec.L):
        yield l, CountData(design.counts(stream(seed, _COUNTS_TAG, l)), design.e)


# ---------------------------------------------------------------- fitting

@dataclass(frozen=True, eq=False)
class ReplicateFit:
    """What a fitter returns for one replicate."""

    rows: list  # SummaryRow-like objects (parameter, mean, sd, q025, q50, q975)
    risk: np.ndarray  # posterior mean relative risk, n x J
    dic: float = float("nan")
    waic: float = float("nan")


class McmcFitter:
    """Default fitter: one MCMC run per replicate and model."""

    def __init__(self, config=None):
        self.config = config or McmcConfig()

    def __call__(self, spec, data, replicate, design):
        s = fit_mcmc(spec, data, self.config, replicate=replicate)
        risk = np.exp(s.eta - data.log_e).mean(axis=0)
        return ReplicateFit(rows=summarize(s), risk=risk,
                            dic=dic(s, data)["dic"], waic=waic(s, data)["waic"])


class OracleFitter:
    """Returns the truth with zero-width intervals (plumbing check)."""

    def __call__(self, spec, data, replicate, design):
        from .posterior import SummaryRow
        rows = [SummaryRow(k, v, 0.0, v, v, v) for k, v in design.truth.items()]
        return ReplicateFit(rows=rows, risk=design.risk.copy(), dic=0.0, waic=0.0)


def model_spec_for(name, family, design, structure, basis, wishart_sigma2=1.0):
    """M-Spatial or M-SpatPlus<m> model for a study design (same k for all crimes)."""
    n = structure.n
    k = k_from_model_name(name, n)
    X = design.X_obs
    Z = X if k is None else split_covariate(X, basis, k).Z
    J = design.e.shape[1]
    return MModelSpec(structure, (SpatialPriorSpec(family),) * J, np.column_stack([Z] * J),
                      wishart_sigma2=wishart_sigma2, name=name)


REPLICATE_COLUMNS = ("replicate", "model", "parameter", "mean", "sd", "q025", "q50", "q975")


def _fmt(x):
    return "%.17g" % x


def _write_replicate(path, replicate, model, fit):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLICATE_COLUMNS)
        for r in fit.rows:
            w.writerow([replicate, model, r.parameter, *map(_fmt, (r.mean, r.sd, r.q025, r.q50, r.q975))])
        nan = _fmt(float("nan"))
        w.writerow([replicate, model, "DIC", _fmt(fit.dic), nan, nan, nan, nan])
        w.writerow([replicate, model, "WAIC", _fmt(fit.waic), nan, nan, nan, nan])
        n, J = fit.risk.shape
        for j in range(J):
            for i in range(n):
                w.writerow([replicate, model, f"risk[{i + 1},{j + 1}]", _fmt(fit.risk[i, j]),
                            nan, nan, nan, nan])
    os.replace(tmp, path)


def _read_replicate(path, n, J):
    from .posterior import SummaryRow
    rows, risk = [], np.empty((n, J))
    dic_v = waic_v = float("nan")
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            p = rec["parameter"]
            vals = [float(rec[c]) for c in ("mean", "sd", "q025", "q50", "q975")]
            if p == "DIC":
                dic_v = vals[0]
            elif p == "WAIC":
                waic_v = vals[0]
            elif p.startswith("risk["):
                i, j = map(int, p[5:-1].split(","))
                risk[i - 1, j - 1] = vals[0]
            else:
                rows.append(SummaryRow(p, *vals))
    return ReplicateFit(rows=rows, risk=risk, dic=dic_v, waic=waic_v)


def _fit_one(fitter, spec, data, replicate, design, path, label):
    if path is not None and os.path.exists(path):
        return _read_replicate(path, *data.shape), None
    try:
        fit = fitter(spec, data, replicate, design)
    except (MSpatPlusError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    if path is not None:
        _write_replicate(path, replicate, label, fit)
    return fit, None


def run_study(study, graph, models, families=("ICAR",), fitter=None, seed=0, out_dir=None,
              n_jobs=1, design=None):
    """Fit every (model, family) to every replicate and aggregate metrics.

    Parameters
    ----------
    study : Scenario1Spec or Scenario2Spec
    graph : ArealGraph
    models : sequence of str
        Names such as ``"M-Spatial"`` or ``"M-SpatPlus54"``.
    families : sequence of str
        Prior families to cross with ``models``.
    fitter : callable, optional
        ``fitter(spec, data, replicate, design) -> ReplicateFit``; defaults to
        :class:`McmcFitter`.
    out_dir : path, optional
        When given, each replicate result is written to its own CSV and
        existing files are reused, so an interrupted study can resume.
    n_jobs : int
        Worker processes for the replicate loop.

    Returns
    -------
    MetricsReport
    """
    fitter = fitter or McmcFitter()
    if isinstance(study, Scenario1Spec):
        design = design or design_study1(study, graph, seed)
        datasets = list(simulate_study1(study, graph, seed, design))
    elif isinstance(study, Scenario2Spec):
        design = design or design_study2(study, graph, seed)
        datasets = list(simulate_study2(study, graph, seed, design))
    else:
        raise ValidationError(f"unknown study spec {type(study).__name__}")
    structure = bym2_scaled_structure(graph)
    basis = eigendecompose(structure.Q)
    rep_dir = None
    if out_dir is not None:
        rep_dir = os.path.join(out_dir, "replicates")
        os.makedirs(rep_dir, exist_ok=True)
    jobs = []
    for fam in families:
        for name in models:
            spec = model_spec_for(name, fam, design, structure, basis)
            label = f"{name}/{fam}"
            for l, data in datasets:
                path = None if rep_dir is None else os.path.join(
                    rep_dir, f"{name}_{fam}_rep{l:04d}.csv")
                jobs.append(((name, fam), (fitter, spec, data, l, design, path, label)))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_fit_one, *zip(*(a for _, a in jobs))))
    else:
        results = [_fit_one(*a) for _, a in jobs]
    fits, failures = {}, []
    for (key, args), (fit, err) in zip(jobs, results):
        l = args[3]
        if err is not None:
            log.warning("replicate %d of %s/%s failed: %s", l, *key, err)
            failures.append((key[0], key[1], l, err))
            continue
        fits.setdefault(key, []).append(fit)
    report = MetricsReport(failures=failures, metadata={
        "L": study.L, "seed": seed, "synthetic_e": bool(study.e_synthetic),
        "marb_definition": "mean over areas and crimes of |mean_l (rhat - r) / r|",
        "mrrmse_definition": "mean over areas and crimes of sqrt(mean_l ((rhat - r) / r)^2)",
        "se_sim_divisor": "L",
    })
    for key, fl in fits.items():
        report.add(key, metrics(fl, design.truth, design.risk))
    return report


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class ParameterMetrics:
    truth: float
    mean: float
    bias: float
    se_sim: float
    se_est: float
    coverage: float
    mean_median: float
    mean_q025: float
    mean_q975: float


@dataclass
class MetricsReport:
    parameters: dict = field(default_factory=dict)  # (model, family) -> {param: ParameterMetrics}
    models: dict = field(default_factory=dict)  # (model, family) -> {"dic", "waic", "marb", "mrrmse", "L"}
    failures: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, key, result):
        params, model = result
        self.parameters[key] = params
        self.models[key] = model

    def get(self, model, family="ICAR"):
        return self.parameters[(model, family)]

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        p1 = os.path.join(out_dir, "parameter_metrics.csv")
        with open(p1, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = list(ParameterMetrics.__dataclass_fields__)
            w.writerow(["model", "prior", "parameter", *cols])
            for (m, fam), params in self.parameters.items():
                for name, pm in params.items():
                    w.writerow([m, fam, name, *(_fmt(getattr(pm, c)) for c in cols)])
        p2 = os.path.join(out_dir, "model_metrics.csv")
        with open(p2, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "prior", "L", "dic", "waic", "marb", "mrrmse"])
            for (m, fam), d in self.models.items():
                w.writerow([m, fam, d["L"], *(_fmt(d[c]) for c in ("dic", "waic", "marb", "mrrmse"))])
        p3 = os.path.join(out_dir, "failures.csv")
        with open(p3, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "prior", "replicate", "error"])
            w.writerows(self.failures)
        return [p1, p2, p3]


def _mean(x):
    # shifted mean: exact when all replicates agree
    x = np.asarray(x, dtype=float)
    return float(x[0] + np.mean(x - x[0]))


def standard_errors(estimates):
    """Across-replicate SD of point estimates with divisor L."""
    x = np.asarray(estimates, dtype=float)
    if x.size < 2:
        raise LengthMismatch("s.e._sim needs at least 2 replicates")
    return float(np.sqrt(np.mean((x - _mean(x)) ** 2)))


def coverage(lower, upper, truth):
    """Percentage (0-100) of intervals containing the truth."""
    lo, hi = np.asarray(lower, float), np.asarray(upper, float)
    if lo.shape != hi.shape:
        raise LengthMismatch("lower and upper bounds differ in length")
    return float(100.0 * np.mean((lo <= truth) & (truth <= hi)))


def relative_risk_errors(risk_hats, risk):
    """MARB and MRRMSE of estimated relative risks over replicates."""
    R = np.asarray(risk_hats, dtype=float)
    r = np.asarray(risk, dtype=float)
    if R.shape[1:] != r.shape:
        raise LengthMismatch(f"risk estimates {R.shape[1:]} vs truth {r.shape}")
    rel = (R - r) / r
    rel[R == r] = 0.0
    marb = float(np.mean(np.abs(rel.mean(axis=0))))
    mrrmse = float(np.mean(np.sqrt(np.mean(rel**2, axis=0))))
    return marb, mrrmse


def metrics(fits, truth, risk=None):
    """Aggregate per-replicate fits into per-parameter and per-model metrics.

    Parameters
    ----------
    fits : list of ReplicateFit
    truth : dict
        True value per scalar parameter; parameters missing from it are
        skipped.
    risk : (n, J) array, optional
        True relative risks for MARB/MRRMSE.
    """
    if not fits:
        raise LengthMismatch("no replicate results")
    L = len(fits)
    params = {}
    for name, tv in truth.items():
        rows = [next((r for r in f.rows if r.parameter == name), None) for f in fits]
        if any(r is None for r in rows):
            if all(r is None for r in rows):
                continue
            raise LengthMismatch(f"parameter {name} missing from some replicates")
        mean = np.array([r.mean for r in rows])
        sd = np.array([r.sd for r in rows])
        lo = np.array([r.q025 for r in rows])
        hi = np.array([r.q975 for r in rows])
        med = np.array([r.q50 for r in rows])
        params[name] = ParameterMetrics(
            truth=float(tv), mean=_mean(mean), bias=_mean(mean) - float(tv),
            se_sim=standard_errors(mean) if L >= 2 else float("nan"),
            se_est=_mean(sd), coverage=coverage(lo, hi, tv),
            mean_median=_mean(med), mean_q025=_mean(lo), mean_q975=_mean(hi))
    model = {"L": L, "dic": float(np.mean([f.dic for f in fits])),
             "waic": float(np.mean([f.waic for f in fits])),
             "marb": float("nan"), "mrrmse": float("nan")}
    if risk is not None:
        model["marb"], model["mrrmse"] = relative_risk_errors([f.risk for f in fits], risk)
    return params, model
