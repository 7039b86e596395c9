"""Command-line front end: ``sfgof fit | test | simulate | efficiency | replicate``.

Every command prints one JSON document (keys sorted) to stdout or ``--out``.
Exit status is 0 on success, 2 for invalid input and 3 for numerical
failures.
"""

import argparse
import csv
import itertools
import json
import logging
import math
import sys
import time
import warnings
from importlib import resources

import numpy as np

from . import __version__
from .efficiency import efficiency_scores
from .errors import ConfigurationError, DataError, NumericalError, SfgofError
from .estimation import GridSpec, cols_fit, mle_fit
from .models import (
    MixtureErrors,
    NormalGammaParams,
    Sample,
    StableGammaParams,
    StudentTGammaParams,
)
from .resampling import (
    BootstrapConfig,
    WarpSpeedConfig,
    bootstrap_pvalue,
    fit_and_test,
    lloyd_correction,
    warp_speed,
)

__all__ = [
    "ingest_csv",
    "parse_generator",
    "run_fit",
    "run_test",
    "run_simulate",
    "run_efficiency",
    "run_replicate",
    "TABLES",
    "main",
]

log = logging.getLogger(__name__)

BUILTIN = {"christensen_greene": "christensen_greene_1970_model.csv"}
ROLES = ("y", "x", "id")


def _resolve_path(path):
    if str(path).startswith("builtin:"):
        name = str(path).split(":", 1)[1]
        if name not in BUILTIN:
            raise ConfigurationError(f"unknown builtin dataset {name!r}; have {sorted(BUILTIN)}")
        return resources.files("sfgof") / "data" / BUILTIN[name]
    return path


def parse_column_map(items):
    """['log_q=x', 'log_cost_pf=y'] -> list of (column, role) in order."""
    out = []
    for item in items or ():
        name, sep, role = item.rpartition("=")
        if not sep or not name or role not in ROLES:
            raise ConfigurationError(f"--col expects name=role with role in {ROLES}, got {item!r}")
        out.append((name, role))
    return out


def ingest_csv(path, column_map, cost_flag=False, intercept=True):
    """Read a CSV with a header row into a Sample.

    ``column_map`` is a sequence of (column, role) pairs or a dict; roles are
    ``y`` (exactly one), ``x`` (any number, kept in order) and ``id``.  An
    intercept column is prepended unless ``intercept`` is false, and the
    cost convention negates Y and every column of X.  Returns
    ``(sample, ids)``.
    """
    pairs = list(column_map.items()) if isinstance(column_map, dict) else list(column_map)
    ys = [c for c, r in pairs if r == "y"]
    xs = [c for c, r in pairs if r == "x"]
    ids = [c for c, r in pairs if r == "id"]
    if len(ys) != 1:
        raise ConfigurationError("exactly one column must have role y")
    if len(ids) > 1:
        raise ConfigurationError("at most one column may have role id")
    if not xs and not intercept:
        raise ConfigurationError("no regressors: map an x column or keep the intercept")
    path = _resolve_path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise DataError(f"{path}: empty file or missing header row")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in ys + xs + ids if c not in header]
    if missing:
        raise DataError(f"{path}: columns not in header: {missing}")
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise DataError(f"{path}: no data rows")
    idx = {h: i for i, h in enumerate(header)}
    numeric = ys + xs
    values = np.empty((len(body), len(numeric)))
    bad = []
    for i, r in enumerate(body, start=1):
        if len(r) != len(header):
            bad.append(f"row {i}: expected {len(header)} fields, found {len(r)}")
            continue
        for j, col in enumerate(numeric):
            cell = r[idx[col]].strip()
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                bad.append(f"row {i}, column {col!r}: {cell!r} is not a finite number")
            values[i - 1, j] = v
    if bad:
        shown = "; ".join(bad[:10]) + (f"; ... {len(bad) - 10} more" if len(bad) > 10 else "")
        raise DataError(f"{path}: {shown}")
    Y = values[:, 0]
    X = values[:, 1:]
    if intercept:
        X = np.column_stack([np.ones(len(body)), X])
    if cost_flag:
        Y, X = -Y, -X
    if np.linalg.matrix_rank(X) < X.shape[1]:
        warnings.warn(f"{path}: design matrix is rank deficient", stacklevel=2)
    labels = tuple(r[idx[ids[0]]].strip() for r in body) if ids else tuple(str(i) for i in range(1, len(body) + 1))
    return Sample(X, Y), labels


def _floats(text, k, what):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigurationError(f"{what}: expected {k} comma-separated numbers, got {text!r}") from None
    if len(vals) != k:
        raise ConfigurationError(f"{what}: expected {k} numbers, got {len(vals)}")
    return vals


def parse_generator(spec):
    """Error law from text.

    ``ng:SIGMA_V2,P,C``, ``sg:KAPPA,ALPHA,P,C``, ``tg:DF,P,C`` or a mixture
    ``mix:0.7*ng:1,1,1+0.3*ng:1,3,1``.
    """
    spec = spec.strip()
    kind, sep, rest = spec.partition(":")
    if not sep:
        raise ConfigurationError(f"generator {spec!r} lacks a 'kind:' prefix")
    if kind == "ng":
        return NormalGammaParams(*_floats(rest, 3, spec))
    if kind == "sg":
        return StableGammaParams(*_floats(rest, 4, spec))
    if kind == "tg":
        return StudentTGammaParams(*_floats(rest, 3, spec))
    if kind == "mix":
        weights, comps = [], []
        for part in rest.split("+"):
            w, star, comp = part.partition("*")
            if not star:
                raise ConfigurationError(f"mixture component {part!r} must read weight*law")
            weights.append(float(w))
            comps.append(parse_generator(comp))
        return MixtureErrors(tuple(weights), tuple(comps))
    raise ConfigurationError(f"unknown generator kind {kind!r}")


def describe_generator(g):
    if isinstance(g, NormalGammaParams):
        return f"ng:{g.sigma_v2!r},{g.p!r},{g.c!r}"
    if isinstance(g, StableGammaParams):
        return f"sg:{g.kappa!r},{float(g.alpha)!r},{g.p!r},{g.c!r}"
    if isinstance(g, StudentTGammaParams):
        return f"tg:{g.df!r},{g.p!r},{g.c!r}"
    if isinstance(g, MixtureErrors):
        return "mix:" + "+".join(f"{w!r}*{describe_generator(c)}" for w, c in zip(g.weights, g.components))
    raise ConfigurationError(f"cannot describe {g!r}")


def _errors_dict(errors):
    if isinstance(errors, NormalGammaParams):
        return {
            "family": "normal_gamma",
            "sigma_v": math.sqrt(errors.sigma_v2),
            "sigma_v2": errors.sigma_v2,
            "p": errors.p,
            "c": errors.c,
            "lambda": errors.lam,
        }
    return {
        "family": "stable_gamma",
        "kappa": errors.kappa,
        "alpha": float(errors.alpha),
        "p": errors.p,
        "c": errors.c,
        "lambda": errors.lam,
    }


def _estimate_dict(estimate, model):
    out = {"beta": [float(b) for b in model.beta], "errors": _errors_dict(model.errors)}
    if hasattr(estimate, "sigma_clamped"):
        out.update(estimator="cols", boundary=bool(estimate.sigma_clamped), converged=True)
    else:
        out.update(
            estimator="mle",
            log_likelihood=estimate.log_likelihood,
            converged=estimate.converged,
            iterations=estimate.iterations,
        )
    return out


def _grid(cfg):
    if cfg.get("grid_n") is None and cfg.get("grid_span") is None:
        return None
    return GridSpec(N=cfg.get("grid_n"), span=cfg.get("grid_span"))


def _fit(sample, cfg):
    family, estimator = cfg["family"], cfg["estimator"]
    if family == "normal_gamma" and estimator == "cols":
        est = cols_fit(sample)
        return est, est.model
    if family == "stable_gamma" and estimator != "mle":
        raise ConfigurationError("the stable/gamma model is fitted by maximum likelihood only")
    est = mle_fit(family, sample, grid=_grid(cfg), fixed_alpha=cfg.get("fixed_alpha"))
    return est, est.params


def _load(cfg):
    cols = cfg.get("columns") or []
    return ingest_csv(cfg["data"], cols, cfg.get("cost", False), not cfg.get("no_intercept", False))


def _base_report(command, cfg):
    return {
        "command": command,
        "config": {k: v for k, v in sorted(cfg.items()) if v is not None},
        "software": {"package": "sfgof", "version": __version__},
    }


def run_fit(cfg):
    sample, _ = _load(cfg)
    est, model = _fit(sample, cfg)
    rep = _base_report("fit", cfg)
    rep["n"], rep["k"] = sample.n, sample.k
    rep["estimate"] = _estimate_dict(est, model)
    return rep


def run_test(cfg):
    """Ingest, fit, compute the statistic and its parametric-bootstrap p-value."""
    sample, _ = _load(cfg)
    bc = BootstrapConfig(
        B=cfg["B"],
        gamma=cfg["gamma"],
        seed=cfg["seed"],
        estimator=cfg["estimator"],
        family=cfg["family"],
        fixed_alpha=cfg.get("fixed_alpha"),
    )
    p, stat, est = bootstrap_pvalue(sample, bc)
    model = est.model if hasattr(est, "sigma_clamped") else est.params
    rep = _base_report("test", cfg)
    rep.update(n=sample.n, k=sample.k, statistic=stat, p_value=p, estimate=_estimate_dict(est, model))
    return rep


def _report_experiment(r):
    c = r.config
    return {
        "rejection_rate": r.rejection_rate,
        "mc_se": r.mc_se,
        "critical_point": r.critical_point,
        "failures": r.failures,
        "M": c.M,
        "n": c.n,
        "gamma": c.gamma,
        "level": c.level,
        "seed": c.seed,
        "null_family": c.null_family,
        "estimator": c.estimator,
        "fixed_alpha": c.fixed_alpha,
        "generator": describe_generator(c.generator),
    }


def run_simulate(cfg, workers=1):
    """One warp-speed cell."""
    wc = WarpSpeedConfig(
        M=cfg["M"],
        n=cfg["n"],
        generator=parse_generator(cfg["generator"]),
        null_family=cfg["family"],
        gamma=cfg["gamma"],
        level=cfg["level"],
        seed=cfg["seed"],
        estimator=cfg.get("estimator"),
        fixed_alpha=cfg.get("fixed_alpha"),
    )
    r = warp_speed(wc, workers=workers)
    rep = _base_report("simulate", cfg)
    rep["result"] = _report_experiment(r)
    rep["statistic_values"] = [float(v) for v in r.statistic_values]
    rep["bootstrap_values"] = [float(v) for v in r.bootstrap_values]
    return rep


def run_efficiency(cfg):
    sample, ids = _load(cfg)
    est, model = _fit(sample, cfg)
    scores = efficiency_scores(model, sample, firm_ids=ids)
    rep = _base_report("efficiency", cfg)
    rep["estimate"] = _estimate_dict(est, model)
    rep["scores"] = [
        {"id": i, "bc": float(b), "jlms": float(j)} for i, b, j in zip(ids, scores.bc, scores.jlms)
    ]
    rep["summary"] = {
        "bc_mean": float(np.mean(scores.bc)),
        "jlms_mean": float(np.mean(scores.jlms)),
    }
    return rep


def _ng(p):
    return NormalGammaParams(1.0, p, 1.0)


def _sg(alpha):
    return StableGammaParams(1.0, alpha, 1.0, 1.0)


def _t1_cells():
    for p, n, g in itertools.product((0.25, 0.5, 1.0, 2.0, 3.0), (50, 100, 200, 400), (4.0, 6.0, 8.0)):
        yield {"p": p, "n": n, "gamma": g}, _ng(p), "normal_gamma", None


def _t2_cells():
    for p, n, g in itertools.product((0.25, 0.4, 0.5, 2.0, 3.0), (50, 100, 200), (4.0, 6.0, 8.0)):
        gen = MixtureErrors((0.7, 0.3), (_ng(1.0), _ng(p)))
        yield {"p": p, "n": n, "gamma": g}, gen, "normal_gamma", None


def _t3_cells():
    for df, n, g in itertools.product((5.0, 6.0), (50, 100, 200), (0.5, 1.0, 2.0, 4.0, 6.0, 8.0)):
        yield {"nu": df, "n": n, "gamma": g}, StudentTGammaParams(df, 3.0, 1.0), "normal_gamma", None


def _t4_cells():
    for a, n, g in itertools.product((1.8, 1.9, 1.95), (200, 400, 500), (2.0, 4.0, 6.0, 8.0)):
        yield {"alpha": a, "n": n, "gamma": g}, _sg(a), "stable_gamma", None


_T5_ALTERNATIVES = (1.5, 1.7, 1.8, 1.9, 1.95, "t2")


def _t5_cells():
    for a0, n in itertools.product((1.8, 1.95), (200, 500)):
        yield {"alpha0": a0, "n": n, "gamma": 6.0, "alternative": "size"}, _sg(a0), "stable_gamma", a0
        for alt in _T5_ALTERNATIVES:
            if alt == a0:
                continue
            gen = StudentTGammaParams(2.0, 1.0, 1.0) if alt == "t2" else _sg(alt)
            yield {"alpha0": a0, "n": n, "gamma": 6.0, "alternative": alt}, gen, "stable_gamma", a0


# table id -> (cell generator, full-scale M)
TABLES = {
    "T1": (_t1_cells, 1000),
    "T2": (_t2_cells, 1000),
    "T3": (_t3_cells, 1000),
    "T4": (_t4_cells, 10000),
    "T5": (_t5_cells, 10000),
}


def _matches(key, only):
    for k, v in (only or {}).items():
        if k not in key:
            return False
        kv = key[k]
        if isinstance(kv, str) or isinstance(v, str):
            if str(kv) != str(v):
                return False
        elif float(kv) != float(v):
            return False
    return True


def run_replicate(table_id, scale, seed, workers=1, level=0.05, only=None):
    """Warp-speed runs over every cell of a simulation table, M shrunk by ``scale``."""
    if table_id not in TABLES:
        raise ConfigurationError(f"table must be one of {sorted(TABLES)}, got {table_id!r}")
    if not 0.0 < scale <= 1.0:
        raise ConfigurationError("scale must lie in (0, 1]")
    cells_fn, m_full = TABLES[table_id]
    M = max(1, round(m_full * scale))
    if M * level < 10:
        raise ConfigurationError(
            f"scale {scale} gives M={M}; need M * level >= 10 (scale >= {10 / level / m_full:g})"
        )
    cells = []
    sizes = {}
    for i, (key, gen, family, fixed_alpha) in enumerate(cells_fn()):
        if not _matches(key, only):
            continue
        wc = WarpSpeedConfig(
            M=M,
            n=key["n"],
            generator=gen,
            null_family=family,
            gamma=key["gamma"],
            level=level,
            seed=seed * 1000 + i,
            fixed_alpha=fixed_alpha,
        )
        row = dict(key)
        try:
            r = warp_speed(wc, workers=workers)
            row.update(_report_experiment(r))
        except (NumericalError, ConfigurationError) as exc:
            row.update(error=str(exc), rejection_rate=None, M=M, seed=wc.seed)
        if table_id == "T5":
            k = (key["alpha0"], key["n"])
            if key["alternative"] == "size":
                sizes[k] = row.get("rejection_rate")
            else:
                s, pw = sizes.get(k), row.get("rejection_rate")
                ok = s is not None and pw is not None and 0 < s < 1 and 0 < pw < 1
                row["corrected_power"] = lloyd_correction(pw, s, level) if ok else None
        cells.append(row)
    return {
        "command": "replicate",
        "config": {"table": table_id, "scale": scale, "seed": seed, "level": level, "M": M, "only": only or {}},
        "software": {"package": "sfgof", "version": __version__},
        "cells": cells,
    }


def _write_table(rows, path):
    keys = sorted({k for r in rows for k in r})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in keys})


def _parse_only(items):
    out = {}
    for item in items or ():
        k, sep, v = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--only expects key=value, got {item!r}")
        try:
            out[k] = float(v)
        except ValueError:
            out[k] = v
    return out


def _build_parser():
    ap = argparse.ArgumentParser(prog="sfgof", description="Goodness-of-fit tests for stochastic frontier models.")
    ap.add_argument("--version", action="version", version=f"sfgof {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common_out(p):
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--no-timing", action="store_true", help="omit wall-clock timing from the report")
        p.add_argument("-v", "--verbose", action="store_true")

    def data_args(p):
        p.add_argument("--data", required=True, help="CSV path or builtin:christensen_greene")
        p.add_argument("--col", action="append", default=[], metavar="NAME=ROLE", help="column role: y, x or id")
        p.add_argument("--cost", action="store_true", help="cost frontier: negate Y and X")
        p.add_argument("--no-intercept", action="store_true")
        p.add_argument("--family", choices=("normal_gamma", "stable_gamma"), default="normal_gamma")
        p.add_argument("--estimator", choices=("cols", "mle"))
        p.add_argument("--fixed-alpha", type=float)
        p.add_argument("--grid-n", type=int)
        p.add_argument("--grid-span", type=float)

    p = sub.add_parser("fit", help="estimate a frontier model")
    data_args(p)
    common_out(p)

    p = sub.add_parser("test", help="goodness-of-fit statistic with bootstrap p-value")
    data_args(p)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--B", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    common_out(p)

    p = sub.add_parser("efficiency", help="Battese-Coelli and JLMS scores")
    data_args(p)
    p.add_argument("--csv-out", help="also write per-firm scores as CSV")
    common_out(p)

    p = sub.add_parser("simulate", help="one warp-speed Monte Carlo cell")
    p.add_argument("--generator", required=True, help="e.g. ng:1,1,1 or mix:0.7*ng:1,1,1+0.3*ng:1,3,1")
    p.add_argument("--family", choices=("normal_gamma", "stable_gamma"), default="normal_gamma")
    p.add_argument("--estimator", choices=("cols", "mle"))
    p.add_argument("--fixed-alpha", type=float)
    p.add_argument("--M", type=int, default=1000)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gamma", type=float, default=4.0)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    common_out(p)

    p = sub.add_parser("replicate", help="re-run a simulation table at reduced Monte Carlo size")
    p.add_argument("--table", required=True, choices=sorted(TABLES))
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--only", action="append", metavar="KEY=VALUE", help="restrict to matching cells")
    p.add_argument("--csv-out", help="also write the table as CSV")
    common_out(p)
    return ap


def _data_cfg(a):
    family = a.family
    estimator = a.estimator or ("cols" if family == "normal_gamma" else "mle")
    return {
        "data": a.data,
        "columns": parse_column_map(a.col),
        "cost": a.cost,
        "no_intercept": a.no_intercept,
        "family": family,
        "estimator": estimator,
        "fixed_alpha": a.fixed_alpha,
        "grid_n": a.grid_n,
        "grid_span": a.grid_span,
    }


def dispatch(a):
    if a.command == "fit":
        return run_fit(_data_cfg(a))
    if a.command == "test":
        cfg = _data_cfg(a)
        cfg.update(gamma=a.gamma, B=a.B, seed=a.seed)
        return run_test(cfg)
    if a.command == "efficiency":
        rep = run_efficiency(_data_cfg(a))
        if a.csv_out:
            _write_table(rep["scores"], a.csv_out)
        return rep
    if a.command == "simulate":
        cfg = {
            "generator": a.generator,
            "family": a.family,
            "estimator": a.estimator,
            "fixed_alpha": a.fixed_alpha,
            "M": a.M,
            "n": a.n,
            "gamma": a.gamma,
            "level": a.level,
            "seed": a.seed,
        }
        return run_simulate(cfg, workers=a.workers)
    if a.command == "replicate":
        rep = run_replicate(a.table, a.scale, a.seed, a.workers, a.level, _parse_only(a.only))
        if a.csv_out:
            _write_table(rep["cells"], a.csv_out)
        return rep
    raise ConfigurationError(f"unknown command {a.command!r}")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        rep = dispatch(args)
    except (ConfigurationError, DataError) as exc:
        print(f"sfgof: error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, SfgofError) as exc:
        print(f"sfgof: numerical failure: {exc}", file=sys.stderr)
        return 3
    if not args.no_timing:
        rep["timing_seconds"] = round(time.perf_counter() - start, 3)
    text = json.dumps(rep, sort_keys=True, indent=2, default=_jsonable, allow_nan=False) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
