"""``rsa-ensemble`` command-line interface.

Exit codes: 0 success, 2 input or schema error, 3 numerical or degenerate data.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft7Validator
from referencing import Registry, Resource

from rsa_ensemble import io as rio
from rsa_ensemble import risk_oracle as ro
from rsa_ensemble import simlab, tuning
from rsa_ensemble.errors import DegenerateSampleError, InvalidInputError, RsaError
from rsa_ensemble.linalg import Dataset
from rsa_ensemble.rsa import RsaConfig, fit_rsa, predict

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
DEFAULT_WINDOW = 252
DEFAULT_HORIZONS = tuple(range(1, 23))


class SchemaError(InvalidInputError):
    pass


# -- config loading ---------------------------------------------------------

def _schema_text(name):
    return resources.files("rsa_ensemble").joinpath("schemas", name).read_text(encoding="utf-8")


def _registry():
    names = ["method.schema.json"]
    return Registry().with_resources(
        (n, Resource.from_contents(json.loads(_schema_text(n)))) for n in names
    )


def _field_path(err):
    path = "$"
    for part in err.absolute_path:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def validate(doc, schema_name):
    """Validate ``doc`` against a shipped schema; the first error names its field path."""
    schema = json.loads(_schema_text(schema_name))
    v = Draft7Validator(schema, registry=_registry())
    errs = sorted(v.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errs:
        e = errs[0]
        raise SchemaError(f"{schema_name}: {_field_path(e)}: {e.message}")
    return doc


def load_json(path, schema_name):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return validate(doc, schema_name)


def load_preset(name):
    path = resources.files("rsa_ensemble").joinpath("presets", f"{name}.json")
    if not path.is_file():
        known = sorted(p.name[:-5] for p in resources.files("rsa_ensemble").joinpath("presets").iterdir()
                       if p.name.endswith(".json"))
        raise InvalidInputError(f"unknown preset {name!r}; known: {known}")
    return validate(json.loads(path.read_text(encoding="utf-8")), "experiment.schema.json")


def _sigma2_arg(val):
    if val is None or val == "estimate":
        return None
    return float(val)


def _horizons(text):
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            out = list(range(int(lo), int(hi) + 1))
        else:
            out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizons {text!r}; use 'a..b' or 'h1,h2,...'") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"horizons must be positive integers, got {text!r}")
    return out


def _fmt_horizons(hs):
    hs = sorted(hs)
    if len(hs) > 1 and hs == list(range(hs[0], hs[-1] + 1)):
        return f"{hs[0]}..{hs[-1]}"
    return ",".join(str(h) for h in hs)


def _design(table, y_col, exclude=()):
    if y_col not in table.columns:
        raise InvalidInputError(f"response column {y_col!r} not found; header is {table.header}")
    cols = [c for c in table.header if c != y_col and c not in exclude]
    if not cols:
        raise InvalidInputError("no covariate columns besides the response")
    X = table.numeric(cols)
    y = table.numeric([y_col])[:, 0]
    if X.shape[0] == 0:
        raise InvalidInputError("data file has a header but no rows")
    return Dataset(X, y), cols


def _check_seed(seed, where):
    if seed is None:
        raise InvalidInputError(f"a seed is required ({where})")
    return int(seed)


# -- subcommands ------------------------------------------------------------

def cmd_fit(args):
    cfg = load_json(args.config, "fit.schema.json") if args.config else {"schema_version": 1}
    for key, val in (("p", args.p), ("M", args.M), ("L", args.L), ("first_round", args.first_round),
                     ("sigma2", args.sigma2), ("seed", args.seed), ("y", args.y)):
        if val is not None:
            cfg[key] = val
    if isinstance(cfg.get("sigma2"), str) and cfg["sigma2"] != "estimate":
        cfg["sigma2"] = float(cfg["sigma2"])
    validate(cfg, "fit.schema.json")
    seed = _check_seed(cfg.get("seed"), "set 'seed' in the config or pass --seed")
    y_col = cfg.get("y", "y")
    data, cols = _design(rio.read_table(args.data), y_col)
    rc = RsaConfig(probs=cfg.get("p", 0.1), M=cfg.get("M", 30), L=cfg.get("L", 30),
                   first_round=cfg.get("first_round", "mallows"),
                   sigma2=_sigma2_arg(cfg.get("sigma2")), seed=seed)
    model = fit_rsa(data, rc, threads=args.threads)
    text = rio.dump_json(rio.model_to_dict(model, cols, y_col))
    Path(args.output).write_text(text, encoding="utf-8")
    dims = " ".join(f"{g.effective_dim:.4g}" for g in model.groups)
    p = rc.probs if isinstance(rc.probs, float) else f"vector(K={len(rc.probs)})"
    print(f"fit: N={data.N} K={data.K} L={rc.L} M={rc.M} p={p} first_round={rc.first_round}")
    print(f"sigma2={model.sigma2!r} effective_dim={model.effective_dim:.6g}")
    print(f"group effective dims: {dims}")
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_predict(args):
    model = rio.load_model(args.model)
    table = rio.read_table(args.data)
    covs = [c for c in table.header if c != model.y_column]
    if len(covs) != len(model.columns):
        raise InvalidInputError(
            f"model has K={len(model.columns)} covariates, data has {len(covs)}: {covs}"
        )
    missing = [c for c in model.columns if c not in table.columns]
    if missing:
        raise InvalidInputError(f"data is missing model covariates {missing}")
    X = table.numeric(model.columns)
    yhat = predict(model, X)
    rio.write_csv(args.output, ["prediction"], [(float(v),) for v in yhat])
    print(f"wrote {yhat.shape[0]} predictions to {args.output}")
    return EXIT_OK


def _experiment_doc(args):
    if (args.experiment is None) == (args.preset is None):
        raise InvalidInputError("give exactly one of an experiment file or --preset")
    doc = load_preset(args.preset) if args.preset else load_json(args.experiment, "experiment.schema.json")
    if args.reps is not None:
        doc["reps"] = args.reps
    doc["seed"] = _check_seed(doc.get("seed"), "experiment config")
    return validate(doc, "experiment.schema.json")


def cmd_simulate(args):
    doc = _experiment_doc(args)
    d = dict(doc["dgp"])
    if "eig_range" in d:
        d["eig_range"] = tuple(d["eig_range"])
    dgp = simlab.DgpConfig(**d)
    methods = [simlab.Method.from_dict(m) for m in doc["methods"]]
    results = simlab.run_experiment(dgp, methods, doc["reps"], doc["seed"], threads=args.threads)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comments = [f"config {json.dumps(doc, sort_keys=True, separators=(',', ':'))}",
                f"seed {doc['seed']}"]
    rows = []
    for r in results:
        n_ok = int(np.isfinite(r.msfe).sum())
        rows.append((r.method, "msfe", r.msfe_mean, r.msfe_sd, n_ok))
        rows.append((r.method, "mse", r.mse_mean, r.mse_sd, n_ok))
    rio.write_csv(out / "results.csv", ["method", "metric", "mean", "sd", "reps"], rows, comments)
    per = [(r.method, i, float(r.msfe[i]), float(r.mse[i])) for r in results for i in range(r.reps)]
    rio.write_csv(out / "per-rep.csv", ["method", "rep", "msfe", "mse"], per, comments)

    for r in results:
        print(f"{r.method}: msfe={r.msfe_mean:.6g} (sd {r.msfe_sd:.3g}) "
              f"mse={r.mse_mean:.6g} reps={r.reps}")
        for e in r.errors:
            print(f"  failed {e}", file=sys.stderr)
    by_name = {r.method: r for r in results}
    verdict_ok = True
    for a, b in doc.get("expect_order", []):
        if a not in by_name or b not in by_name:
            raise InvalidInputError(f"expect_order names unknown method in {[a, b]}")
        ok = by_name[a].msfe_mean < by_name[b].msfe_mean
        verdict_ok &= ok
        print(f"ordering {a} < {b}: {'PASS' if ok else 'FAIL'} "
              f"({by_name[a].msfe_mean:.6g} vs {by_name[b].msfe_mean:.6g})")
    if doc.get("expect_order"):
        print(f"ordering verdict: {'PASS' if verdict_ok else 'FAIL'}")
    print(f"wrote {out / 'results.csv'} and {out / 'per-rep.csv'}")
    return EXIT_OK


def risk_report(spec: ro.RiskSpec, M: int) -> list:
    """Text lines of the closed-form risk report."""
    P = ro.optimal_P(spec)
    fixed = ro.rsa_risk_fixed_p(spec)
    varying = ro.rsa_risk_varying_p(spec)
    rsr = ro.rsr_risk(spec, P)
    lines = [
        f"K={spec.K} N={spec.N} sigma2={spec.sigma2!r} M={M}",
        f"rsa_risk_fixed_p {fixed!r}",
        f"rsa_risk_varying_p {varying!r}",
        f"ma_risk {ro.ma_risk(spec)!r}",
        f"rsr_risk {rsr!r}",
        f"rpr_risk {rsr!r}",
        f"optimal_p {ro.optimal_p_fixed(spec, M)!r}",
        f"optimal_P {P!r}",
        "optimal_eta " + " ".join(repr(float(v)) for v in ro.optimal_eta(spec, M)),
    ]
    tol = 1e-12 * max(1.0, fixed)
    ok = varying <= fixed + tol and abs(fixed - rsr) <= tol
    lines.append(f"jensen rsa_risk_varying_p <= rsa_risk_fixed_p = rsr_risk(optimal_P): "
                 f"{'true' if ok else 'false'}")
    return lines


def cmd_risk(args):
    doc = load_json(args.spec, "risk.schema.json")
    spec = ro.RiskSpec(np.asarray(doc["beta"], dtype=float), doc["sigma2"], doc["N"])
    for line in risk_report(spec, int(doc.get("M", 50))):
        print(line)
    return EXIT_OK


def _grid_from_doc(doc):
    folds = doc.get("folds", 5)
    if "preset" in doc:
        g = tuning.preset_grid(doc["preset"], folds=folds, seed=doc["seed"])
        if "L_values" in doc:
            g = tuning.CvGrid(g.p_values, g.M_values, tuple(doc["L_values"]), folds, doc["seed"])
        return g
    return tuning.CvGrid(tuple(doc["p_values"]), tuple(doc["M_values"]),
                         tuple(doc.get("L_values", (30,))), folds, doc["seed"])


def cmd_cv(args):
    doc = load_json(args.grid, "grid.schema.json")
    grid = _grid_from_doc(doc)
    data, cols = _design(rio.read_table(args.data), args.y)
    if grid.folds > data.N:
        raise InvalidInputError(f"folds={grid.folds} exceeds N={data.N}")
    best, table = tuning.cv_grid_search(data, grid, first_round=doc.get("first_round", "mallows"),
                                        sigma2=_sigma2_arg(doc.get("sigma2")), threads=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(float(p), int(M), int(L), float(e)) for p, M, L, e in tuning.heatmap_rows(table)]
    rio.write_csv(out / "heatmap.csv", ["p", "M", "L", "mean_cv_error"], rows)
    cell = next(c for c in table if (c.p, c.M, c.L) == (best.probs, best.M, best.L))
    best_doc = {"schema_version": 1, "p": best.probs, "M": best.M, "L": best.L,
                "first_round": best.first_round, "seed": best.seed, "y": args.y,
                "sigma2": "estimate" if best.sigma2 is None else best.sigma2}
    (out / "best.json").write_text(rio.dump_json(best_doc), encoding="utf-8")
    n_failed = sum(c.error is not None for c in table)
    print(f"cv: {len(table)} cells, {grid.folds} folds, {n_failed} failed")
    print(f"best p={best.probs!r} M={best.M} L={best.L} mean_cv_error={cell.mean_error!r}")
    print(f"wrote {out / 'heatmap.csv'} and {out / 'best.json'}")
    return EXIT_OK


def cmd_rolling(args):
    doc = load_json(args.config, "rolling.schema.json")
    seed = _check_seed(doc.get("seed"), "rolling config")
    window = args.window if args.window is not None else doc.get("window", DEFAULT_WINDOW)
    horizons = args.horizons if args.horizons is not None else doc.get("horizons", list(DEFAULT_HORIZONS))
    print(f"window={window} horizons={_fmt_horizons(horizons)}")
    table = rio.read_table(args.data)
    if args.date_column not in table.columns:
        raise InvalidInputError(f"date column {args.date_column!r} not found; header is {table.header}")
    data, cols = _design(table, args.y, exclude=(args.date_column,))
    method = simlab.Method.from_dict(doc["method"])
    if method.kind == "oracle" or method.params.get("sigma2") == "true":
        raise InvalidInputError("rolling forecasts have no known DGP; use an estimable method")
    scores = simlab.rolling_forecast(data, window, horizons, method, seed=seed, threads=args.threads)
    rows = [(s.horizon, s.msfe, s.sd, s.n_forecasts) for s in scores]
    rio.write_csv(args.output, ["horizon", "msfe", "sd", "n_forecasts"], rows,
                  [f"config {json.dumps(doc, sort_keys=True, separators=(',', ':'))}",
                   f"window {window}"])
    for s in scores:
        print(f"h={s.horizon} msfe={s.msfe:.6g} n={s.n_forecasts}")
    print(f"wrote {args.output}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="rsa-ensemble",
                                 description="Random subset averaging for linear prediction.")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker pool bound; results do not depend on it")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit an RSA model to a CSV file")
    f.add_argument("data")
    f.add_argument("--config", help="fit config JSON (schema fit.schema.json)")
    f.add_argument("-o", "--output", default="model.json")
    f.add_argument("--y", help="response column (default 'y')")
    f.add_argument("--p", type=float)
    f.add_argument("--M", type=int)
    f.add_argument("--L", type=int)
    f.add_argument("--first-round", choices=["mallows", "uniform"])
    f.add_argument("--sigma2", help="positive number or 'estimate'")
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict new rows with a saved model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("-o", "--output", default="predictions.csv")
    p.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    s.add_argument("experiment", nargs="?")
    s.add_argument("--preset", help="shipped experiment preset, e.g. scaled_ordering")
    s.add_argument("--reps", type=int, help="override the replication count")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("risk", help="closed-form orthogonal-design risks")
    r.add_argument("spec")
    r.set_defaults(func=cmd_risk)

    c = sub.add_parser("cv", help="k-fold grid search over (p, M, L)")
    c.add_argument("data")
    c.add_argument("grid")
    c.add_argument("--y", default="y")
    c.add_argument("--out-dir", default=".")
    c.set_defaults(func=cmd_cv)

    w = sub.add_parser("rolling", help="rolling-window forecast evaluation")
    w.add_argument("data")
    w.add_argument("--config", required=True, help="rolling config JSON with seed and method")
    w.add_argument("--window", type=int)
    w.add_argument("--horizons", type=_horizons, help="'a..b' or comma list (default 1..22)")
    w.add_argument("--y", default="y")
    w.add_argument("--date-column", default="date")
    w.add_argument("-o", "--output", default="rolling.csv")
    w.set_defaults(func=cmd_rolling)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (DegenerateSampleError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
