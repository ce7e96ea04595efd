"""Command-line driver.

Commands: ``simulate``, ``fit``, ``tune``, ``eval``, ``kappa`` and
``replicate``. Settings come from built-in defaults, then an optional
JSON or YAML file (``--config``), then flags. Every run writes the fully
resolved settings to ``resolved_config.json`` next to its outputs.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import io
import json
import math
import os
import sys

import numpy as np
import yaml

from . import formats
from ._validation import make_basis
from .bases import GridSpec, basis_matrix
from .design import center, design_matrix, quadrature_weights
from .diffops import assemble_A, difference_scale, pseudoinverse
from .gds import GdsConfig, evaluate_surface, fit, refit
from .lp import LPError
from .metrics import SurfacePair, mse, nonzero_recovery, rise, rmse_mae, zero_recovery
from .simulation import (SimScenario, calibrate_noise, generate_dataset,
                         run_replicated)
from .theory import estimate_kappas, fixture_transform, load_fixture
from .tuning import (TuneGrid, TunedDantzigSelector, TuningError, default_weights,
                     kfold_cv, lambda_grid, select_aic, select_validation)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


DEFAULTS = {
    "seed": 0,
    "out": "out",
    "scenario": {"beta": "beta2", "process": "P1", "n": 400, "snr_target": 4.0,
                 "m1": 20, "m2": 20, "n_test": 0, "n_pilot": 10000, "sigma": None},
    "data": {"dir": None, "images": None, "responses": None, "grid": None,
             "val_images": None, "val_responses": None,
             "test_images": None, "test_responses": None, "truth": None},
    "model": {"basis": "piecewise", "pieces": [20, 20], "spline_order": [3, 3],
              "interior_knots": [7, 7], "variant": "separable", "orders": [3, 3],
              "w": 1.0, "lambda": None, "refit": False, "refit_lambda": None,
              "zero_threshold": 1e-8, "solver": "highs"},
    "tuning": {"criterion": "aic", "multipliers": None, "ws": None,
               "orders": None, "folds": 10},
    "eval": {"fit": None, "surface": None, "mode": "auto"},
    "kappa": {"fixture": None, "design": None, "S": 1, "S_prime": 1,
              "trials": 10000,
              "transform": {"m1": 2, "m2": 2, "delta1": 1.0, "delta2": 1.0,
                            "t0": 0.0, "s0": 0.0, "w": 1.0, "orders": [1, 1],
                            "variant": "joint", "basis": "piecewise"}},
    "replicate": {"n_reps": 5, "n_test": 10000, "criterion": "aic", "refit": True},
}


# ---------------------------------------------------------------------------
# configuration

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        text = fh.read()
    cfg = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a mapping")
    return cfg


def _pair(text):
    try:
        a, b = (int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected two integers like 3,3") from None
    return [a, b]


def resolve(args) -> dict:
    cfg = _merge(DEFAULTS, _load_config(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    model = cfg["model"]
    if args.lam is not None:
        model["lambda"] = args.lam
    if args.w is not None:
        model["w"] = args.w
    if args.orders is not None:
        model["orders"] = args.orders
    if args.basis is not None:
        model["basis"] = args.basis
    if args.variant is not None:
        model["variant"] = args.variant
    if args.refit:
        model["refit"] = True
        cfg["replicate"]["refit"] = True
    if args.criterion is not None:
        cfg["tuning"]["criterion"] = args.criterion
        cfg["replicate"]["criterion"] = args.criterion
    if args.trials is not None:
        cfg["kappa"]["trials"] = args.trials
    if args.fixture is not None:
        cfg["kappa"]["fixture"] = args.fixture
    if args.data is not None:
        cfg["data"]["dir"] = args.data
    cfg["command"] = args.command
    return cfg


def _data_path(cfg, key, default_name):
    data = cfg["data"]
    if data.get(key):
        return data[key]
    if data.get("dir") and default_name:
        return os.path.join(data["dir"], default_name)
    return None


# ---------------------------------------------------------------------------
# commands

def _scenario(cfg) -> SimScenario:
    sc = cfg["scenario"]
    try:
        return SimScenario(beta=sc["beta"], process=sc["process"], n=int(sc["n"]),
                           snr_target=float(sc["snr_target"]),
                           grid=GridSpec.midpoints(int(sc["m1"]), int(sc["m2"])),
                           seed=int(cfg["seed"]), n_test=int(sc["n_test"]),
                           n_pilot=int(sc["n_pilot"]), sigma=sc.get("sigma"))
    except ValueError as err:
        raise UsageError(str(err)) from None


def cmd_simulate(cfg, out):
    sc = _scenario(cfg)
    sigma = sc.sigma if sc.sigma is not None else calibrate_noise(sc)
    train = generate_dataset(sc, sigma=sigma)
    formats.write_grid(os.path.join(out, "grid.json"), sc.grid)
    formats.write_images(os.path.join(out, "images.csv"), train.images)
    formats.write_responses(os.path.join(out, "responses.csv"), train.y)
    beta = sc.beta_grid
    trunc = np.where(np.abs(beta) < 1e-8, 0.0, beta)
    formats.write_surface(os.path.join(out, "truth_surface.csv"), sc.grid, beta, trunc)
    if sc.n_test > 0:
        test = generate_dataset(sc, n=sc.n_test, sigma=sigma, stream=(3,))
        formats.write_images(os.path.join(out, "test_images.csv"), test.images)
        formats.write_responses(os.path.join(out, "test_responses.csv"), test.y)
    formats.write_json(os.path.join(out, "simulation.json"),
                       {"sigma": sigma, "n": sc.n, "n_test": sc.n_test})


def _load_xy(cfg, img_key="images", resp_key="responses",
             img_name="images.csv", resp_name="responses.csv"):
    grid_path = _data_path(cfg, "grid", "grid.json")
    img_path = _data_path(cfg, img_key, img_name)
    resp_path = _data_path(cfg, resp_key, resp_name)
    if not (grid_path and img_path and resp_path):
        raise UsageError("need image, response and grid files "
                         "(--data DIR or data.* entries in the config)")
    grid, mask = formats.read_grid(grid_path)
    ids, images = formats.read_images(img_path, grid)
    y = formats.read_responses(resp_path, ids)
    return grid, mask, images, y


def _model_setup(cfg, grid, mask, images, y):
    m = cfg["model"]
    try:
        basis = make_basis(m["basis"], m["pieces"], m["spline_order"],
                           m["interior_knots"])
    except ValueError as err:
        raise UsageError(str(err)) from None
    Bt = basis_matrix(basis, grid)
    weights = quadrature_weights(grid, mask)
    ds = center(design_matrix(images, Bt, weights), y, weights)
    return basis, Bt, weights, ds


def _base_config(cfg, basis, grid, lam=1.0):
    m = cfg["model"]
    d1, d2 = m["orders"]
    try:
        return GdsConfig(basis, grid, m["variant"], int(d1), int(d2), float(m["w"]),
                         float(lam), float(m["zero_threshold"]), m["solver"])
    except ValueError as err:
        raise UsageError(str(err)) from None


def cmd_fit(cfg, out):
    grid, mask, images, y = _load_xy(cfg)
    basis, Bt, weights, ds = _model_setup(cfg, grid, mask, images, y)
    m = cfg["model"]
    lam = m["lambda"]
    if lam is None:
        lam = math.sqrt(math.log(ds.p) / ds.n)
        m["lambda"] = lam
    gcfg = _base_config(cfg, basis, grid, lam)
    result = fit(ds, gcfg, Bt)
    if m["refit"]:
        result = refit(result, ds, m["refit_lambda"])
    _write_fit(out, result, weights)


def _write_fit(out, result, weights):
    c = result.config
    diag = result.diagnostics
    header = ["alpha_hat", "lambda", "w", "d1", "d2", "active_count", "objective",
              "primal_residual", "constraint_max", "refit", "vacuous_refit"]
    row = [result.alpha_hat, c.lam, c.w, c.d1, c.d2, result.df, diag["objective"],
           diag["primal_residual"], diag["constraint_max"], int(result.refitted),
           int(bool(diag.get("vacuous_refit", False)))]
    formats.write_rows(os.path.join(out, "fit_summary.csv"), header, [row])
    formats.write_rows(os.path.join(out, "eta.csv"), ["index", "eta"],
                       enumerate(result.eta_hat))
    surf = evaluate_surface(result)
    formats.write_surface(os.path.join(out, "surface.csv"), surf.grid, surf.raw,
                          surf.truncated)
    formats.write_json(os.path.join(out, "fit.json"), {
        "alpha_hat": result.alpha_hat,
        "eta_hat": result.eta_hat.tolist(),
        "basis": c.basis.to_dict(),
        "grid": c.grid.to_dict(),
        "weights": np.asarray(weights).tolist(),
        "zero_threshold": c.zero_threshold,
        "lambda": c.lam, "w": c.w, "d1": c.d1, "d2": c.d2, "variant": c.variant,
        "refit": result.refitted,
    })


def cmd_tune(cfg, out):
    grid, mask, images, y = _load_xy(cfg)
    basis, Bt, weights, ds = _model_setup(cfg, grid, mask, images, y)
    t = cfg["tuning"]
    base = _base_config(cfg, basis, grid)
    orders = [tuple(o) for o in (t["orders"] or [cfg["model"]["orders"]])]
    if t["multipliers"] is None:
        lams = lambda_grid(ds.n, ds.p)
    else:
        lams = np.asarray(t["multipliers"], float) * math.sqrt(math.log(ds.p) / ds.n)
    if t["ws"] is None:
        d1, d2 = orders[0]
        L = assemble_A(base.variant, 1.0, d1, d2, grid, Bt).L
        ws = default_weights(L, difference_scale(base.variant, d1, d2, grid))
    else:
        ws = tuple(t["ws"])
    tg = TuneGrid(tuple(lams), ws, tuple(orders))
    crit = t["criterion"]
    try:
        if crit in ("aic", "bic"):
            res = select_aic((images, y), base, tg, weights, crit)
        elif crit == "cv":
            res = kfold_cv((images, y), base, tg, int(t["folds"]), int(cfg["seed"]),
                           weights)
        elif crit == "val":
            _, _, vimg, vy = _load_xy(cfg, "val_images", "val_responses",
                                      "val_images.csv", "val_responses.csv")
            res = select_validation((images, y), (vimg, vy), base, tg, weights)
        else:
            raise UsageError(f"unknown criterion {crit!r}")
    except ValueError as err:
        raise UsageError(str(err)) from None
    buf = io.StringIO()
    res.to_csv(buf)
    with open(os.path.join(out, "tune_scores.csv"), "w") as fh:
        fh.write(buf.getvalue())
    b = res.best_config
    formats.write_json(os.path.join(out, "tune_selected.json"), {
        "criterion": res.criterion, "lambda": b.lam, "w": b.w, "d1": b.d1,
        "d2": b.d2, "score": res.best_score})


def _estimate_from_fit(path):
    with open(path) as fh:
        d = json.load(fh)
    from .bases import basis_from_dict
    grid = GridSpec.from_dict(d["grid"])
    basis = basis_from_dict(d["basis"])
    Bt = basis_matrix(basis, grid)
    eta = np.asarray(d["eta_hat"])
    raw = Bt.values @ eta
    trunc = np.where(np.abs(raw) < d["zero_threshold"], 0.0, raw)
    return d, grid, Bt, eta, trunc


def cmd_eval(cfg, out):
    e = cfg["eval"]
    fit_path = e["fit"] or (os.path.join(cfg["data"]["dir"], "fit.json")
                            if cfg["data"].get("dir") else None)
    truth_path = _data_path(cfg, "truth", None)
    mode = e["mode"]
    if mode == "simulation" and not truth_path:
        raise UsageError("simulation metrics need a truth surface (data.truth)")
    rows = []
    if e["surface"]:
        pts, _, est = formats.read_surface(e["surface"])
        fit_d = None
    elif fit_path:
        fit_d, grid, Bt, eta, est = _estimate_from_fit(fit_path)
    else:
        raise UsageError("eval needs a fit (eval.fit) or a surface (eval.surface)")
    if truth_path and mode in ("auto", "simulation"):
        _, truth, _ = formats.read_surface(truth_path)
        if truth.shape != est.shape:
            raise UsageError("truth and estimate surfaces have different sizes")
        weights = (np.asarray(fit_d["weights"]) if fit_d is not None else None)
        pair = SurfacePair(truth, est, weights)
        rows += [("rise", rise(pair)), ("r1", zero_recovery(pair)),
                 ("r2", nonzero_recovery(pair))]
    test_img = _data_path(cfg, "test_images", None)
    test_resp = _data_path(cfg, "test_responses", None)
    if test_img and test_resp:
        if fit_d is None:
            raise UsageError("prediction metrics need a fit file")
        ids, images = formats.read_images(test_img, grid)
        y = formats.read_responses(test_resp, ids)
        X = design_matrix(images, Bt, np.asarray(fit_d["weights"]))
        y_hat = fit_d["alpha_hat"] + X @ eta
        rmse, mae = rmse_mae(y_hat, y)
        rows += [("mse", mse(y_hat, y)), ("rmse", rmse), ("mae", mae)]
    if not rows:
        raise UsageError("nothing to evaluate: give a truth surface or test data")
    formats.write_rows(os.path.join(out, "metrics.csv"), ["metric", "value"], rows)


def cmd_kappa(cfg, out):
    k = cfg["kappa"]
    if k["fixture"]:
        try:
            X = load_fixture(k["fixture"])
        except ValueError as err:
            raise UsageError(str(err)) from None
        A = fixture_transform()
    elif k["design"]:
        X = np.loadtxt(k["design"], ndmin=2)
        tr = k["transform"]
        grid = GridSpec(int(tr["m1"]), int(tr["m2"]), float(tr["delta1"]),
                        float(tr["delta2"]), float(tr["t0"]), float(tr["s0"]))
        m = cfg["model"]
        basis = make_basis(tr["basis"], (tr["m1"], tr["m2"]) if tr["basis"] == "piecewise"
                           else m["pieces"], m["spline_order"], m["interior_knots"])
        d1, d2 = tr["orders"]
        A = assemble_A(tr["variant"], float(tr["w"]), int(d1), int(d2), grid,
                       basis_matrix(basis, grid))
    else:
        raise UsageError("kappa needs --fixture NAME or kappa.design")
    V = X @ pseudoinverse(A)
    S, Sp, trials, seed = int(k["S"]), k["S_prime"], int(k["trials"]), int(cfg["seed"])
    try:
        k1, k2 = estimate_kappas(V, S, None if Sp is None else int(Sp), trials, seed)
    except ValueError as err:
        raise UsageError(str(err)) from None
    rows = [("kappa1", k1.S, "", k1.value, k1.trials, k1.seed)]
    if k2 is not None:
        rows.append(("kappa2", k2.S, str(k2.S_prime), k2.value, k2.trials, k2.seed))
    formats.write_rows(os.path.join(out, "kappa.csv"),
                       ["which", "S", "S_prime", "value", "trials", "seed"], rows)


def cmd_replicate(cfg, out):
    r = cfg["replicate"]
    sc = _scenario(cfg)
    sc = SimScenario(**{**sc.__dict__, "n_test": int(r["n_test"])})
    m = cfg["model"]
    t = cfg["tuning"]
    est = TunedDantzigSelector(
        criterion=r["criterion"], multipliers=t["multipliers"], ws=t["ws"],
        orders=[tuple(o) for o in (t["orders"] or [m["orders"]])],
        variant=m["variant"], basis=m["basis"], pieces=tuple(m["pieces"]),
        spline_order=tuple(m["spline_order"]),
        interior_knots=tuple(m["interior_knots"]), refit=bool(r["refit"]),
        zero_threshold=m["zero_threshold"], solver=m["solver"], cv=int(t["folds"]),
        random_state=int(cfg["seed"]))
    rep = run_replicated(sc, {"gds": est}, int(r["n_reps"]))
    with open(os.path.join(out, "replicates.csv"), "w") as fh:
        rep.to_csv(fh)
    with open(os.path.join(out, "summary.csv"), "w") as fh:
        rep.summary_csv(fh)


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "tune": cmd_tune,
            "eval": cmd_eval, "kappa": cmd_kappa, "replicate": cmd_replicate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="imagedantzig", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON or YAML settings file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--data", help="dataset directory written by 'simulate'")
    ap.add_argument("--lambda", dest="lam", type=float)
    ap.add_argument("--w", type=float)
    ap.add_argument("--orders", type=_pair, help="difference orders as d1,d2")
    ap.add_argument("--basis", choices=["bspline", "piecewise"])
    ap.add_argument("--variant", choices=["joint", "separable"])
    ap.add_argument("--refit", action="store_true")
    ap.add_argument("--criterion", choices=["val", "aic", "bic", "cv"])
    ap.add_argument("--trials", type=int)
    ap.add_argument("--fixture")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = resolve(args)
        out = cfg["out"]
        os.makedirs(out, exist_ok=True)
        COMMANDS[args.command](cfg, out)
        formats.write_json(os.path.join(out, "resolved_config.json"), cfg)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (LPError, TuningError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, yaml.YAMLError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
