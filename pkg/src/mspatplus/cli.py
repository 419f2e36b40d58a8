"""Command line entry point: ``fit``, ``simulate``, ``eigen`` and ``compare``.

Every command reads a JSON config (paths inside it are relative to the
config file) and accepts ``--seed`` and ``--out-dir`` overrides. Exit codes:
0 success, 2 validation error, 3 runtime or numerical failure.
"""

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, KOutOfRange, MSpatPlusError, ValidationError
from .fixtures import synthetic_region
from .graph import bym2_scaled_structure, icar_structure, read_edge_list
from .io import (
    environment_versions,
    load_dataset,
    read_csv_rows,
    read_keyed_csv,
    standardize,
    write_csv,
    write_manifest,
)
from .mcmc import McmcConfig, fit_mcmc
from .mmodel import CountData, MModelSpec
from .posterior import SUMMARY_COLUMNS, diagnostics, dic, summarize, waic
from .priors import SpatialPriorSpec
from .simulation import McmcFitter, OracleFitter, Scenario1Spec, Scenario2Spec, run_study
from .spectral import eigendecompose, k_from_fraction, k_from_model_name, model_name, split_covariate

log = logging.getLogger("mspatplus")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
STUDY1_SUBSPACE_FRACTION = 0.2


# ---------------------------------------------------------------- config

def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg, path.parent.resolve()


def _path(base, value, what):
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{what} must be a path string")
    p = Path(value)
    return p if p.is_absolute() else base / p


def resolve_k(value, n):
    """Per-crime k from an integer or a percentage string such as ``"14%"``."""
    if isinstance(value, bool):
        raise ConfigError(f"invalid k {value!r}")
    if isinstance(value, int):
        if not 0 <= value <= n - 2:
            raise KOutOfRange(f"k={value} outside [0, {n - 2}]")
        return value
    if isinstance(value, str) and value.strip().endswith("%"):
        try:
            frac = float(value.strip()[:-1]) / 100.0
        except ValueError:
            raise ConfigError(f"invalid k {value!r}") from None
        return k_from_fraction(n, frac)
    raise ConfigError(f"k must be an integer or a percentage string, got {value!r}")


def _per_crime(value, J, what):
    if isinstance(value, list):
        if len(value) != J:
            raise ConfigError(f"{what} lists {len(value)} entries for {J} crimes")
        return list(value)
    return [value] * J


def parse_model(model_cfg, n, J):
    """Return (display name, list of per-crime k or None, list of prior specs)."""
    if not isinstance(model_cfg, dict):
        raise ConfigError("'model' must be an object")
    name = model_cfg.get("name", "M-Spatial")
    priors = [SpatialPriorSpec(f) for f in _per_crime(model_cfg.get("priors", "ICAR"), J, "priors")]
    if name == "M-Spatial":
        if model_cfg.get("k") is not None:
            raise ConfigError("M-Spatial takes no k")
        return name, [None] * J, priors
    if name == "M-SpatPlus":
        if "k" not in model_cfg:
            raise ConfigError("M-SpatPlus needs k (integer or percentage, per crime or shared)")
        ks = [resolve_k(v, n) for v in _per_crime(model_cfg["k"], J, "k")]
    elif isinstance(name, str) and name.startswith("M-SpatPlus"):
        ks = [k_from_model_name(name, n)] * J
    else:
        raise ConfigError(f"unknown model name {name!r}")
    if len(set(ks)) == 1:
        display = model_name(n, ks[0])
    else:
        display = "M-SpatPlus" + "/".join(str(n - (k + 1)) for k in ks)
    return display, ks, priors


def mcmc_config(cfg, seed):
    settings = cfg.get("mcmc", {})
    if isinstance(settings, str):
        settings = {"preset": settings}
    if not isinstance(settings, dict):
        raise ConfigError("'mcmc' must be an object or a preset name")
    settings = {**settings, "seed": seed}
    return McmcConfig.from_dict(settings)


def _seed(cfg, override):
    seed = override if override is not None else cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    return seed


def _out_dir(cfg, base, override):
    if override is not None:
        return Path(override)
    return _path(base, cfg.get("out_dir", "out"), "out_dir")


def _manifest(command, cfg, seed, out_dir, extra=None):
    payload = {"command": command, "config": cfg, "seed": seed, "versions": environment_versions()}
    payload.update(extra or {})
    write_manifest(out_dir / "manifest.json", payload)


# ---------------------------------------------------------------- commands

def _load_fit_data(cfg, base):
    data_cfg = cfg.get("data")
    if data_cfg == "synthetic" or data_cfg is None:
        region = synthetic_region()
        ids = tuple(str(i + 1) for i in range(region.graph.n))
        # synthetic counts from the expected counts and the covariate
        rng = np.random.default_rng(cfg.get("synthetic_counts_seed", 1))
        Y = rng.poisson(region.e * np.exp(0.15 * region.X1[:, None]))
        return (region.graph, Y, region.e, {"X1": region.X1}, ids,
                ("crime1", "crime2"), True)
    if not isinstance(data_cfg, dict):
        raise ConfigError("'data' must be an object or \"synthetic\"")
    for key in ("counts", "expected", "covariates", "graph"):
        if key not in data_cfg:
            raise ConfigError(f"data.{key} is required")
    b = load_dataset(*(_path(base, data_cfg[k], f"data.{k}")
                       for k in ("counts", "expected", "covariates", "graph")))
    return b.graph, b.Y, b.e, b.covariates, b.area_ids, b.crimes, False


def cmd_fit(cfg, base, seed=None, out_dir=None):
    seed = _seed(cfg, seed)
    out = _out_dir(cfg, base, out_dir)
    graph, Y, e, covs, ids, crimes, synthetic = _load_fit_data(cfg, base)
    n, J = Y.shape
    cov_names = _per_crime(cfg.get("covariate", "X1"), J, "covariate")
    for c in cov_names:
        if c not in covs:
            raise ConfigError(f"covariate {c!r} not found; available: {sorted(covs)}")
    X = [covs[c] for c in cov_names]
    if cfg.get("standardize", True):
        X = [standardize(x) for x in X]
    name, ks, priors = parse_model(cfg.get("model", {}), n, J)
    structure = bym2_scaled_structure(graph)
    basis = eigendecompose(structure.Q) if any(k is not None for k in ks) else None
    Z = np.column_stack([x if k is None else split_covariate(x, basis, k).Z for x, k in zip(X, ks)])
    spec = MModelSpec(structure, tuple(priors), Z, wishart_sigma2=float(cfg.get("wishart_sigma2", 1.0)),
                      name=name)
    data = CountData(Y, e)
    samples = fit_mcmc(spec, data, mcmc_config(cfg, seed))
    rows = summarize(samples)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, (r.as_tuple() for r in rows))
    diag_rows, acc = diagnostics(samples)
    write_csv(out / "diagnostics.csv", ["parameter", "ess", "rhat"], diag_rows)
    write_csv(out / "acceptance.csv", ["block", "rate"], sorted(acc.items()))
    d, w = dic(samples, data), waic(samples, data)
    prior_label = "/".join(p.family for p in priors)
    write_csv(out / "criteria.csv", ["model", "prior", "dic", "pd", "dbar", "waic", "p_waic", "lppd"],
              [(name, prior_label, d["dic"], d["pd"], d["dbar"], w["waic"], w["p_waic"], w["lppd"])])
    risk = np.exp(samples.eta - data.log_e)
    q = np.quantile(risk, [0.025, 0.5, 0.975], axis=0)
    write_csv(out / "risks.csv", ["area_id", "crime", "mean", "q025", "q50", "q975"],
              ((ids[i], crimes[j], risk[:, i, j].mean(), q[0, i, j], q[1, i, j], q[2, i, j])
               for j in range(J) for i in range(n)))
    _manifest("fit", cfg, seed, out, {"model": name, "prior": prior_label, "k": ks,
                                      "synthetic_data": synthetic})
    return out


def cmd_simulate(cfg, base, seed=None, out_dir=None):
    seed = _seed(cfg, seed)
    out = _out_dir(cfg, base, out_dir)
    study = cfg.get("study", 1)
    sc = dict(cfg.get("scenario", {}))
    data_cfg = cfg.get("data")
    if data_cfg in (None, "synthetic"):
        region = synthetic_region()
        graph, X1, e, synthetic_e = region.graph, region.X1, region.e, True
    else:
        graph = read_edge_list(_path(base, data_cfg["graph"], "data.graph"))
        ids, _, e = read_keyed_csv(_path(base, data_cfg["expected"], "data.expected"))
        synthetic_e = False
        X1 = None
        if "covariates" in data_cfg:
            c_ids, c_cols, C = read_keyed_csv(_path(base, data_cfg["covariates"], "data.covariates"))
            name = data_cfg.get("covariate", c_cols[0])
            if c_ids != ids or name not in c_cols:
                raise ConfigError("covariate file must list the same area_ids in order and the named column")
            X1 = standardize(C[:, c_cols.index(name)])
        if graph.n != e.shape[0]:
            raise ValidationError(f"graph has n={graph.n}, expected counts have {e.shape[0]} rows")
    if "L" in cfg:
        sc["L"] = cfg["L"]
    try:
        if study == 1:
            if X1 is None:
                raise ConfigError("study 1 needs an observed covariate (data.covariates)")
            sc.setdefault("subspace_size", k_from_fraction(graph.n, STUDY1_SUBSPACE_FRACTION))
            spec = Scenario1Spec(X1=X1, e=e, e_synthetic=synthetic_e, **_tuples(sc))
        elif study == 2:
            spec = Scenario2Spec(e=e, e_synthetic=synthetic_e, **_tuples(sc))
        else:
            raise ConfigError(f"study must be 1 or 2, got {study!r}")
    except TypeError as exc:
        raise ConfigError(f"bad scenario settings: {exc}") from None
    fitter_name = cfg.get("fitter", "mcmc")
    if fitter_name == "oracle":
        fitter = OracleFitter()
    elif fitter_name == "mcmc":
        fitter = McmcFitter(mcmc_config(cfg, seed))
    else:
        raise ConfigError(f"unknown fitter {fitter_name!r}")
    models = cfg.get("models", ["M-Spatial"])
    for m in models:
        k_from_model_name(m, graph.n)
    families = [SpatialPriorSpec(f).family for f in cfg.get("priors", ["ICAR"])]
    report = run_study(spec, graph, models, families=families, fitter=fitter, seed=seed,
                       out_dir=out, n_jobs=int(cfg.get("n_jobs", 1)))
    report.write(out)
    _manifest("simulate", cfg, seed, out, {"study": study, "synthetic_e": synthetic_e,
                                           "report_metadata": report.metadata,
                                           "failed_replicates": len(report.failures)})
    return out


def _tuples(d):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def cmd_eigen(cfg, base, seed=None, out_dir=None, graph_path=None, out_path=None):
    gp = graph_path or cfg.get("graph")
    if gp is None:
        raise ConfigError("eigen needs a graph file (--graph or 'graph' in the config)")
    graph = read_edge_list(_path(base, gp, "graph") if graph_path is None else Path(gp))
    basis = eigendecompose(icar_structure(graph))
    if out_path is not None:
        target = Path(out_path)
    else:
        target = _out_dir(cfg, base, out_dir) / cfg.get("out", "eigenvalues.csv")
    write_csv(target, ["index", "eigenvalue"], enumerate(basis.eigenvalues.tolist(), start=1))
    if cfg.get("vectors", False):
        vec_path = target.with_name(target.stem + "_vectors.csv")
        header = ["area"] + [f"U{j + 1}" for j in range(graph.n)]
        write_csv(vec_path, header, ([i, *row] for i, row in enumerate(basis.U.tolist())))
    return target


def cmd_compare(cfg, base, seed=None, out_dir=None):
    fits = cfg.get("fits")
    if not isinstance(fits, list) or not fits:
        raise ConfigError("compare needs a non-empty 'fits' list of fit output directories")
    out = _out_dir(cfg, base, out_dir)
    table, crit = [], []
    for f in fits:
        d = _path(base, f, "fits entry")
        try:
            manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
            summary = read_csv_rows(d / "summary.csv")
            criteria = read_csv_rows(d / "criteria.csv")[0]
        except (OSError, IndexError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{d}: not a complete fit output ({exc})") from None
        model, prior = manifest.get("model", criteria["model"]), manifest.get("prior", criteria["prior"])
        for r in summary:
            table.append((model, prior, r["parameter"], *(float(r[c]) for c in SUMMARY_COLUMNS[1:]),
                          float(criteria["dic"]), float(criteria["waic"])))
        crit.append((model, prior, float(criteria["dic"]), float(criteria["waic"])))
    write_csv(out / "comparison.csv",
              ["model", "prior", "parameter", *SUMMARY_COLUMNS[1:], "dic", "waic"], table)
    write_csv(out / "criteria.csv", ["model", "prior", "dic", "waic"], crit)
    _manifest("compare", cfg, cfg.get("seed", 0), out)
    return out


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "eigen": cmd_eigen, "compare": cmd_compare}


def build_parser():
    p = argparse.ArgumentParser(prog="mspatplus", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=(name != "eigen"), help="JSON config file")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--out-dir", default=None)
        if name == "eigen":
            s.add_argument("--graph", default=None, help="edge-list file")
            s.add_argument("--out", default=None, help="output CSV path")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is not None:
            cfg, base = load_config(args.config)
        else:
            cfg, base = {}, Path.cwd()
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg_copy = copy.deepcopy(cfg)
        if args.command == "eigen":
            cmd_eigen(cfg_copy, base, args.seed, args.out_dir, graph_path=args.graph, out_path=args.out)
        else:
            COMMANDS[args.command](cfg_copy, base, args.seed, args.out_dir)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (MSpatPlusError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
