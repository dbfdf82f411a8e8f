"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 file or parse error, 4 numerical
failure (including a failed self-test or Monte Carlo harness).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, models, montecarlo, robust, selftest, sequential, spatial
from .core import Dataset, information
from .errors import RaoScoreError, UnknownName
from .estimate import Restriction, fit_both, fit_unrestricted
from .trinity import TestResult, lm_form_test, lr_test, rao_score_test, wald_test

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class InputError(Exception):
    """Unreadable or malformed input file."""


# ingestion

def ingest_csv(path, schema: Optional[Sequence[str]] = None) -> Dataset:
    """Read a headed CSV of decimal reals into a :class:`Dataset`.

    ``schema`` lists columns that must be present. Blank or non-numeric
    cells are rejected with their line number and column name.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows or not any(c.strip() for c in rows[0]):
        raise InputError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise InputError(f"{path}, line 1: header has blank or repeated column names")
    for name in schema or ():
        if name not in header:
            raise InputError(f"{path}: missing required column {name!r}")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"{path}, line {lineno}: expected {len(header)} cells, found {len(row)}")
        parsed = []
        for col, cell in zip(header, row):
            cell = cell.strip()
            if not cell:
                raise InputError(f"{path}, line {lineno}, column {col!r}: blank cell")
            try:
                parsed.append(float(cell))
            except ValueError:
                raise InputError(f"{path}, line {lineno}, column {col!r}: not a number: {cell!r}") from None
        values.append(parsed)
    if not values:
        raise InputError(f"{path}: no data rows")
    arr = np.array(values, dtype=float)
    return Dataset({h: arr[:, j] for j, h in enumerate(header)})


# configuration

@dataclass
class RunConfig:
    subcommand: str
    model: Optional[str] = None
    data: Optional[str] = None
    files: dict = field(default_factory=dict)
    null: Optional[str] = None
    stats: list = field(default_factory=list)
    info: Optional[str] = None
    output: Optional[str] = None
    fmt: str = "table"
    seed: Optional[int] = None
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# aliases: model name -> (likelihood model, default statistic)
MODEL_ALIASES = {"ols": ("regression", None), "jb": ("regression", "jb"), "bp": ("regression", "bp"),
                 "koenker": ("regression", "koenker"), "skew-robust": ("regression", "robust-skewness")}
TEST_MODELS = ("normal", "normal-known", "cauchy", "bernoulli", "multinomial", "regression",
               "hetero-regression") + tuple(MODEL_ALIASES)
TEST_STATS = ("RS", "Wald", "LR", "LM", "RS*D", "W*", "jb", "robust-skewness", "bp", "koenker", "all")
SPATIAL_STATS = ("psi", "psi-star", "phi", "phi-star", "joint", "all")


def _kv(text: str) -> tuple:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        val = json.loads(v)
    except json.JSONDecodeError:
        val = v
    return k.strip(), val


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="raoscore", description="Score, Wald and LR tests with robust variants.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--output", help="write the JSON report to this path")
        sp.add_argument("--format", dest="fmt", choices=("table", "json"), default="table")

    sp = sub.add_parser("fit", help="maximum likelihood fit")
    sp.add_argument("--model", required=True, choices=TEST_MODELS)
    sp.add_argument("--data", required=True)
    sp.add_argument("--sigma2", type=float, default=1.0, help="known variance for normal-known")
    common(sp)

    sp = sub.add_parser("test", help="score, Wald, LR and robust tests of a restriction")
    sp.add_argument("--model", required=True, choices=TEST_MODELS)
    sp.add_argument("--data", required=True)
    sp.add_argument("--null", help="'uniform' for multinomial or name=value[,name=value]")
    sp.add_argument("--stat", action="append", choices=TEST_STATS)
    sp.add_argument("--info", choices=("expected", "observed", "opg"))
    sp.add_argument("--sigma2", type=float, default=1.0, help="known variance for normal-known")
    sp.add_argument("--no-intercept", action="store_true", help="do not add a constant to X")
    common(sp)

    sp = sub.add_parser("spatial-test", help="score diagnostics for spatial dependence")
    sp.add_argument("--y", required=True)
    sp.add_argument("--x", required=True)
    sp.add_argument("--w", required=True)
    sp.add_argument("--stat", choices=SPATIAL_STATS, default="all")
    sp.add_argument("--row-standardize", action="store_true")
    sp.add_argument("--no-intercept", action="store_true")
    common(sp)

    sp = sub.add_parser("sequential", help="sequential one-sided score test")
    sp.add_argument("--model", required=True, choices=("normal-known", "bernoulli"))
    sp.add_argument("--theta0", type=float, required=True)
    sp.add_argument("--n-max", type=int, required=True)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--calibrate-reps", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--data", help="observations in arrival order")
    sp.add_argument("--theta-alt", type=float, action="append", help="compare with fixed-N power here")
    sp.add_argument("--compare-reps", type=int, default=10000)
    sp.add_argument("--workers", type=int)
    common(sp)

    for name in ("mc-size", "mc-power"):
        sp = sub.add_parser(name, help="Monte Carlo rejection rates")
        sp.add_argument("--dgp", required=True)
        sp.add_argument("--stat", required=True)
        sp.add_argument("--n", type=int, required=True)
        sp.add_argument("--reps", type=int, default=1000)
        sp.add_argument("--alpha", type=float, action="append")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--dgp-param", type=_kv, action="append", default=[])
        sp.add_argument("--stat-param", type=_kv, action="append", default=[])
        sp.add_argument("--workers", type=int)
        common(sp)

    sp = sub.add_parser("selftest", help="run the identity checks")
    common(sp)
    return p


def parse_args(argv: Sequence[str]) -> RunConfig:
    """Validated configuration; raises UsageError or InputError."""
    ns = build_parser().parse_args(list(argv))
    cfg = RunConfig(ns.subcommand, output=ns.output, fmt=ns.fmt)
    cfg.model = getattr(ns, "model", None)
    cfg.data = getattr(ns, "data", None)
    cfg.seed = getattr(ns, "seed", None)
    default_stat = None
    if ns.subcommand in ("fit", "test"):
        cfg.options = {"sigma2": ns.sigma2, "intercept": not getattr(ns, "no_intercept", False)}
        if cfg.model in MODEL_ALIASES:
            cfg.options["alias"] = cfg.model
            cfg.model, default_stat = MODEL_ALIASES[cfg.model]
    if ns.subcommand == "test":
        cfg.null = ns.null
        cfg.stats = ns.stat or [default_stat or "all"]
        cfg.info = ns.info
        if ns.null is None and not set(cfg.stats) <= {"jb", "robust-skewness", "bp", "koenker"}:
            raise UsageError("test: --null is required for restriction tests")
    elif ns.subcommand == "spatial-test":
        cfg.files = {"y": ns.y, "x": ns.x, "w": ns.w}
        cfg.stats = [ns.stat]
        cfg.options = {"row_standardize": ns.row_standardize, "intercept": not ns.no_intercept}
    elif ns.subcommand == "sequential":
        if ns.n_max < 1:
            raise UsageError("sequential: --n-max must be >= 1")
        if not 0 < ns.alpha <= 0.5:
            raise UsageError("sequential: --alpha must lie in (0, 0.5]")
        if ns.calibrate_reps < sequential.MIN_CALIBRATION_REPS:
            raise UsageError(f"sequential: --calibrate-reps must be >= {sequential.MIN_CALIBRATION_REPS}")
        cfg.options = {"theta0": ns.theta0, "n_max": ns.n_max, "alpha": ns.alpha,
                       "calibrate_reps": ns.calibrate_reps, "sigma2": ns.sigma2,
                       "theta_alt": ns.theta_alt or [], "compare_reps": ns.compare_reps,
                       "workers": ns.workers}
    elif ns.subcommand in ("mc-size", "mc-power"):
        if ns.dgp not in montecarlo.DGPS:
            raise UsageError(f"unknown dgp {ns.dgp!r}; known: {', '.join(sorted(montecarlo.DGPS))}")
        if ns.stat not in montecarlo.STATISTICS:
            raise UsageError(f"unknown statistic {ns.stat!r}; known: {', '.join(sorted(montecarlo.STATISTICS))}")
        if ns.reps < 100:
            raise UsageError("--reps must be >= 100")
        cfg.stats = [ns.stat]
        cfg.options = {"dgp": ns.dgp, "n": ns.n, "reps": ns.reps, "alphas": ns.alpha or [0.05],
                       "dgp_params": dict(ns.dgp_param), "stat_params": dict(ns.stat_param),
                       "workers": ns.workers}
    for key in ("data",):
        path = getattr(cfg, key)
        if path is not None and not Path(path).is_file():
            raise InputError(f"{path}: no such file")
    for path in cfg.files.values():
        if not Path(path).is_file():
            raise InputError(f"{path}: no such file")
    return cfg


# model construction

def _design(data: Dataset, prefix: str, intercept: bool) -> np.ndarray:
    cols = [data[c] for c in data.names if c.lower().startswith(prefix)]
    mats = ([np.ones(data.n)] if intercept else []) + cols
    if not mats:
        return np.empty((data.n, 0))
    return np.column_stack(mats)


def _build_model(cfg: RunConfig, raw: Dataset):
    """(model, dataset) for the CLI model names."""
    name = cfg.model
    if name == "normal":
        return models.NormalModel(), Dataset({"y": raw["y"]})
    if name == "normal-known":
        return models.NormalModel(sigma2=cfg.options["sigma2"]), Dataset({"y": raw["y"]})
    if name == "cauchy":
        return models.CauchyModel(), Dataset({"y": raw["y"]})
    if name == "bernoulli":
        return models.BernoulliModel(), Dataset({"x": raw["x"]})
    if name == "multinomial":
        if "count" in raw:
            data = models.multinomial_data(raw["count"])
            return models.MultinomialModel(raw.n), data
        cats = raw["category"].astype(int)
        k = int(cats.max()) + 1
        return models.MultinomialModel(k), models.multinomial_data(np.bincount(cats, minlength=k))
    if name in ("regression", "hetero-regression"):
        X = _design(raw, "x", cfg.options.get("intercept", True))
        if name == "regression":
            return models.RegressionModel(X.shape[1]), models.regression_data(raw["y"], X)
        Z = _design(raw, "z", False)
        return (models.HeteroskedasticRegressionModel(X.shape[1], Z.shape[1]),
                models.regression_data(raw["y"], X, Z))
    raise UnknownName(f"unknown model {name!r}")


def _parse_null(text: str, model) -> Restriction:
    if text == "uniform":
        if not isinstance(model, models.MultinomialModel):
            raise UsageError("--null uniform applies to the multinomial model only")
        k = model.n_classes
        return Restriction.subset(np.arange(k - 1), np.full(k - 1, 1.0 / k))
    idx, vals = [], []
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"--null: expected name=value, got {part!r}")
        k, v = (s.strip() for s in part.split("=", 1))
        if k in model.names:
            i = model.names.index(k)
        elif k.isdigit() and int(k) < model.dim:
            i = int(k)
        else:
            raise UsageError(f"--null: unknown parameter {k!r}; parameters are {', '.join(model.names)}")
        try:
            vals.append(float(v))
        except ValueError:
            raise UsageError(f"--null: {v!r} is not a number") from None
        idx.append(i)
    return Restriction.subset(idx, vals)


# subcommands

def _cmd_fit(cfg):
    model, data = _build_model(cfg, ingest_csv(cfg.data))
    fit = fit_unrestricted(model, data)
    mat = information(model, data, fit.values, "observed")
    se = np.sqrt(np.diag(np.linalg.inv(mat)))
    rows = [{"parameter": n, "estimate": float(v), "std_error": float(s)}
            for n, v, s in zip(model.names, fit.values, se)]
    return rows, {"loglik": fit.loglik, "iterations": fit.iterations, "converged": fit.converged}


def _cmd_test(cfg):
    raw = ingest_csv(cfg.data)
    model, data = _build_model(cfg, raw)
    stats = list(cfg.stats)
    results = []
    spec_tests = [s for s in stats if s in ("jb", "robust-skewness", "bp", "koenker")]
    if spec_tests:
        if cfg.model not in ("regression", "hetero-regression"):
            raise UsageError("jb/robust-skewness/bp/koenker need a regression model")
        X = np.asarray(data["X"]).reshape(data.n, -1)
        resid = data["y"] - X @ np.linalg.lstsq(X, data["y"], rcond=None)[0]
        Z = _design(raw, "z", False)
        for s in spec_tests:
            if s == "jb":
                results.append(models.jarque_bera(resid))
            elif s == "robust-skewness":
                results.extend(models.robust_skewness_test(resid))
            else:
                if Z.shape[1] == 0:
                    raise UsageError(f"{s} needs z-prefixed variance regressors")
                fn = models.breusch_pagan if s == "bp" else models.koenker
                results.append(fn(data["y"], X, Z))
    wanted = [s for s in stats if s not in spec_tests]
    if wanted:
        restriction = _parse_null(cfg.null, model)
        if "all" in wanted:
            wanted = ["RS", "Wald", "LR", "LM", "RS*D", "W*"]
        fits = fit_both(model, data, restriction)
        table = {
            "RS": lambda: rao_score_test(model, data, restriction, fits, cfg.info),
            "Wald": lambda: wald_test(model, data, restriction, fits, cfg.info),
            "LR": lambda: lr_test(model, data, restriction, fits),
            "LM": lambda: lm_form_test(model, data, restriction, fits, cfg.info),
            "RS*D": lambda: robust.rs_star_D(model, data, restriction, fits),
            "W*": lambda: robust.wald_star(model, data, restriction, fits),
        }
        for s in wanted:
            results.append(table[s]())
    return results, {}


def _read_matrix(path, intercept) -> np.ndarray:
    data = ingest_csv(path)
    X = np.column_stack([data[c] for c in data.names])
    if intercept and not np.any(np.all(X == 1.0, axis=0)):
        X = np.column_stack([np.ones(data.n), X])
    return X


def _cmd_spatial(cfg):
    y_data = ingest_csv(cfg.files["y"])
    y = y_data["y"] if "y" in y_data else y_data[y_data.names[0]]
    X = _read_matrix(cfg.files["x"], cfg.options["intercept"])
    try:
        W = spatial.load_weights(cfg.files["w"], n=y.size)
    except ValueError as exc:
        raise InputError(f"{cfg.files['w']}: {exc}") from None
    if cfg.options["row_standardize"]:
        W = spatial.row_standardize(W)
    fx = spatial.SarFixture(y, X, W)
    which = cfg.stats[0]
    if which == "all":
        res = spatial.all_spatial(fx)
        resid = res.pop("identity_residual")
        return list(res.values()), {"identity_residual": resid}
    fn = {"psi": spatial.rs_psi_spatial, "psi-star": spatial.rs_star_psi_spatial,
          "phi": spatial.rs_phi_spatial, "phi-star": spatial.rs_star_phi_spatial,
          "joint": spatial.rs_joint_spatial}[which]
    return [fn(fx)], {}


def _cmd_sequential(cfg):
    o = cfg.options
    model = models.NormalModel(sigma2=o["sigma2"]) if cfg.model == "normal-known" else models.BernoulliModel()
    plan = sequential.SequentialPlan(o["theta0"], o["n_max"], o["alpha"])
    plan = sequential.calibrate(plan, model, o["calibrate_reps"], cfg.seed, o["workers"])
    rows = [{"quantity": "boundary", "value": plan.boundary}]
    diag = {"boundary": plan.boundary}
    if cfg.data:
        raw = ingest_csv(cfg.data)
        column = model.columns[0]
        if column not in raw:
            raise InputError(f"{cfg.data}: missing required column {column!r}")
        out = sequential.run_sequential(model, Dataset({column: raw[column]}), plan)
        rows += [{"quantity": "decision", "value": out.decision},
                 {"quantity": "stopping_time", "value": out.stopping_time}]
        diag["trajectory"] = out.trajectory.tolist()
    for theta in o["theta_alt"]:
        rep = sequential.compare_fixed_vs_sequential(model, theta, plan, o["compare_reps"],
                                                     cfg.seed + 1, o["workers"])
        rows.append({"quantity": f"comparison theta={theta:g}", "value": rep.to_dict()})
    return rows, diag


def _cmd_mc(cfg):
    o = cfg.options
    conf = montecarlo.McConfig(o["dgp"], cfg.stats[0], o["n"], o["reps"], tuple(o["alphas"]),
                               cfg.seed, o["dgp_params"], o["stat_params"])
    report = montecarlo.run_mc(conf, o["workers"])
    return [report.to_dict()], {"failed": report.failed, "table": montecarlo.format_report(report)}


def _cmd_selftest(cfg):
    checks = selftest.run_all()
    return [c.to_dict() for c in checks], {"passed": all(c.passed for c in checks)}


COMMANDS = {"fit": _cmd_fit, "test": _cmd_test, "spatial-test": _cmd_spatial,
            "sequential": _cmd_sequential, "mc-size": _cmd_mc, "mc-power": _cmd_mc,
            "selftest": _cmd_selftest}


# reporting

def _result_dict(r):
    return r.to_dict() if isinstance(r, TestResult) else r


def build_report(cfg: RunConfig, results, diagnostics=None) -> dict:
    report = {
        "run_config_echo": cfg.to_dict(),
        "results": [_result_dict(r) for r in results],
        "provenance": {"version": __version__, "seed": cfg.seed,
                       "timestamp": datetime.now(timezone.utc).isoformat()},
    }
    if diagnostics:
        report["diagnostics"] = {k: v for k, v in diagnostics.items() if k != "table"}
    return report


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    if v is None:
        return "-"
    return str(v)


def format_table(results, diagnostics=None) -> str:
    rows = [_result_dict(r) for r in results]
    lines = []
    if rows and "statistic" in rows[0] and "variant" in rows[0]:
        cols = ["variant", "statistic", "df", "p_value", "info_kind"]
        body = [[_fmt(r.get(c)) for c in cols] for r in rows]
        widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
        lines.extend("  ".join(x.rjust(w) if i else x.ljust(w) for i, (x, w) in enumerate(zip(b, widths)))
                     for b in body)
    elif diagnostics and "table" in diagnostics:
        lines.append(diagnostics["table"])
    else:
        for r in rows:
            lines.append("  ".join(f"{k}={_fmt(v)}" for k, v in r.items()))
    for k, v in (diagnostics or {}).items():
        if k in ("table", "trajectory"):
            continue
        lines.append(f"# {k}: {_fmt(v)}")
    return "\n".join(lines)


def emit_report(report: dict, fmt: str, results, diagnostics=None, stream=None) -> str:
    stream = stream or sys.stdout
    text = json.dumps(report, indent=2) if fmt == "json" else format_table(results, diagnostics)
    print(text, file=stream)
    return text


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        # degenerate inputs end in an exception and exit code 4; keep numpy quiet on the way
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            results, diagnostics = COMMANDS[cfg.subcommand](cfg)
    except (UsageError, UnknownName) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, KeyError) as exc:
        # KeyError: a required column is missing from an ingested file
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except (RaoScoreError, np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    report = build_report(cfg, results, diagnostics)
    if cfg.output:
        Path(cfg.output).write_text(json.dumps(report, indent=2))
    emit_report(report, cfg.fmt, results, diagnostics)
    failed = diagnostics.get("failed") or diagnostics.get("passed") is False
    return EXIT_NUMERIC if failed else EXIT_OK
