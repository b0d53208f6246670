"""``stvar`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .detrend import detrend_panel, filter_slots, slot_index
from .evaluation import classify_network, dm_test, estimation_errors, support_metrics
from .model import VarModel, build_design, forecast, is_stationary, one_step_forecasts, simulate
from .scenarios import DEFAULT_ESTIMATORS, Estimator, ScenarioSpec, StudyConfig, generate_truth, holdout_rmsfe, run_study
from .selection import LASSO, CvPlan, forward_cv, make_weights, rmsfe
from .solver import WeightedLassoProblem
from .spatial import canonical_kind

log = logging.getLogger("stvar")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# arguments that never enter the config hash
_NOT_HASHED = {"command", "handler", "seed", "threads", "output", "output_dir", "verbose"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _slot_set(text: str) -> tuple:
    """``"1-5,9"`` -> ``(1, 2, 3, 4, 5, 9)``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = (int(v) for v in part.split("-", 1))
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad slot range {part!r}") from None
    return tuple(out)


def _bandwidth(text: str):
    if text in ("cv", "silverman"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be a number, 'cv' or 'silverman', got {text!r}") from None


def _weight_kind(text: str) -> str:
    if text == LASSO:
        return text
    try:
        return canonical_kind(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _resolve_seed(args, fallback=None) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("STVAR_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"STVAR_SEED must be an integer, got {env!r}") from None
    if fallback is not None:
        return int(fallback)
    raise UsageError("a seed is required: pass --seed or set STVAR_SEED")


def _prov(args, seed=None, extra: dict | None = None) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_HASHED}
    for k, v in list(cfg.items()):
        if isinstance(v, Path):
            cfg[k] = str(v)
    if extra:
        cfg.update(extra)
    return sio.provenance(args.command, cfg, seed)


def _out_dir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_panel(args):
    ids, values, times = sio.read_panel(args.input)
    return ids, values, times


def _load_geometry(args, site_ids):
    if getattr(args, "distances", None):
        geom = sio.read_distance_matrix(args.distances, unreachable=args.unreachable)
    elif getattr(args, "geometry", None):
        geom = sio.read_geometry(args.geometry)
    else:
        return None
    return sio.align_geometry(geom, site_ids)


def _add_geometry_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--geometry", type=Path, help="site table CSV (site_id,x,y)")
    g.add_argument("--distances", type=Path, help="distance matrix CSV; overrides coordinates")
    p.add_argument("--unreachable", choices=("dmax", "inf"), default="dmax",
                   help="treatment of inf distances: cap at the largest distance or forbid the edge")


# ---------------------------------------------------------------- handlers

def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    model, ids = sio.read_model(args.model)
    if not is_stationary(model):
        raise sio.DataError(f"{args.model}: model is not stationary")
    panel = simulate(model, args.length, args.burn_in, seed)
    ids = ids or tuple(f"s{i}" for i in range(model.m))
    sio.write_panel(args.output, ids, panel, prov=_prov(args, seed))
    return EXIT_OK


def cmd_generate_scenario(args) -> int:
    seed = _resolve_seed(args)
    spec = ScenarioSpec(order=args.order, setting=args.setting, scenario=args.scenario, m=args.sites,
                        sigma_scale=args.sigma_scale, seed=seed, max_attempts=args.max_attempts)
    geometry, model = generate_truth(spec)
    out = _out_dir(args.output_dir)
    prov = _prov(args, seed)
    sio.write_geometry(out / "sites.csv", geometry, prov)
    sio.write_model(out / "model.json", model, geometry.site_ids, prov)
    if args.length:
        panel = simulate(model, args.length, args.burn_in, seed)
        sio.write_panel(out / "panel.csv", geometry.site_ids, panel, prov=prov)
    return EXIT_OK


def cmd_fit(args) -> int:
    ids, panel, _ = _load_panel(args)
    geometry = _load_geometry(args, ids)
    reg = build_design(panel, args.p)
    weights = make_weights(args.weights, args.c, geometry, args.p, len(ids))
    problem = WeightedLassoProblem(reg, weights)
    res = problem.path([args.lam], threads=args.threads)[0]
    extra = {"weights": args.weights, "c": args.c, "lambda_max": problem.lambda_max()}
    sio.write_fit(args.output, res, ids, _prov(args), extra)
    if not res.all_converged:
        log.error("coordinate descent did not converge for %d column(s)", int(np.sum(~res.converged)))
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_cv(args) -> int:
    ids, panel, _ = _load_panel(args)
    geometry = _load_geometry(args, ids)
    plan = CvPlan(weight_kind=args.weights, p_candidates=args.p_candidates, c_candidates=args.c_candidates,
                  lambda_count=args.lambda_count, lambda_ratio=args.lambda_ratio, train_end=args.train_end)
    cv = forward_cv(panel, geometry, plan, threads=args.threads)
    out = _out_dir(args.output_dir)
    prov = _prov(args)
    sio.write_table(out / "cv_table.csv", [{"p": p, "c": c, "lambda": lam, "rmsfe": e} for p, c, lam, e in cv.table],
                    ["p", "c", "lambda", "rmsfe"], prov)
    selected = {"weights": args.weights, "p": cv.p, "c": cv.c, "lambda": cv.lam, "rmsfe": cv.rmsfe,
                "train_end": plan.resolve_train_end(panel.shape[0]), "degenerate": cv.degenerate}
    sio._write_json(out / "selected.json", selected, prov)
    sio.write_fit(out / "fit.json", cv.fit, ids, prov, {"weights": args.weights, "c": cv.c})
    if not cv.fit.all_converged:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_forecast(args) -> int:
    coeffs, payload = sio.read_fit(args.fit)
    ids, panel, _ = _load_panel(args)
    if coeffs.m != len(ids):
        raise sio.DataError("fit and panel have different numbers of sites")
    if "site_ids" in payload and tuple(payload["site_ids"]) != tuple(ids):
        raise sio.DataError("fit and panel site ids differ")
    origin = panel.shape[0] if args.origin is None else args.origin
    if not coeffs.p <= origin <= panel.shape[0]:
        raise sio.DataError(f"origin must lie in [{coeffs.p}, {panel.shape[0]}]")
    pred = forecast(coeffs, panel[:origin], args.horizon)
    rows = [[h] + list(v) for h, v in enumerate(pred, start=1)]
    sio._write_csv(args.output, ["horizon"] + list(ids), rows, _prov(args))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    coeffs, _ = sio.read_fit(args.fit)
    out = _out_dir(args.output_dir)
    prov = _prov(args)
    wrote = False
    if args.truth:
        truth, _ = sio.read_model(args.truth)
        if truth.m != coeffs.m:
            raise sio.DataError("fit and truth have different numbers of sites")
        p = max(truth.p, coeffs.p)
        est = _padded(coeffs.phis, p)
        tru = _padded(truth.phis, p)
        row = {"replicate": 0}
        row.update(estimation_errors(est, tru))
        row.update(support_metrics(est, tru))
        sio.write_table(out / "metrics.csv", [row], prov=prov)
        wrote = True
    if args.input:
        ids, panel, _ = _load_panel(args)
        if coeffs.m != len(ids):
            raise sio.DataError("fit and panel have different numbers of sites")
        start = args.start if args.start is not None else coeffs.p
        if not coeffs.p <= start < panel.shape[0]:
            raise sio.DataError(f"start must lie in [{coeffs.p}, {panel.shape[0] - 1}]")
        errs = holdout_rmsfe(coeffs, panel, start, args.horizons)
        sio.write_table(out / "rmsfe.csv", [{"horizon": h, "rmsfe": e} for h, e in enumerate(errs, start=1)],
                        prov=prov)
        if args.compare:
            other, _ = sio.read_fit(args.compare)
            if other.m != coeffs.m:
                raise sio.DataError("compared fits have different numbers of sites")
            start = max(start, other.p)
            actual = panel[start:]
            ea = one_step_forecasts(coeffs, panel, start) - actual
            eb = one_step_forecasts(other, panel, start) - actual
            # per-step root mean square over sites, so the test compares site-averaged squared errors
            res = dm_test(np.sqrt(np.mean(ea ** 2, axis=1)), np.sqrt(np.mean(eb ** 2, axis=1)), h=1)
            sio._write_json(out / "dm_test.json", {"statistic": res.statistic, "p_value": res.p_value,
                                                   "degenerate": res.degenerate,
                                                   "rmsfe_a": rmsfe(ea + actual, actual),
                                                   "rmsfe_b": rmsfe(eb + actual, actual)}, prov)
        wrote = True
    if not wrote:
        raise UsageError("evaluate needs --truth and/or --input")
    return EXIT_OK


def _padded(phis, p):
    if phis.shape[0] < p:
        phis = np.concatenate([phis, np.zeros((p - phis.shape[0],) + phis.shape[1:])])
    return phis


def _study_config(raw: dict, seed: int) -> StudyConfig:
    sc = dict(raw.get("scenario", {}))
    st = dict(raw.get("study", {}))
    try:
        spec = ScenarioSpec(order=int(sc.get("order", 1)), setting=int(sc.get("setting", 1)),
                            scenario=str(sc.get("scenario", "a")), m=int(sc.get("m", 30)),
                            sigma_scale=float(sc.get("sigma_scale", 0.01)), seed=int(sc.get("seed", seed)),
                            max_attempts=int(sc.get("max_attempts", 10_000)))
        ests = raw.get("estimators")
        if ests:
            estimators = tuple(
                Estimator(str(e["name"]), _weight_kind(str(e.get("weights", LASSO))),
                          tuple(float(c) for c in e.get("c_candidates", Estimator.c_candidates)))
                for e in ests)
        else:
            estimators = DEFAULT_ESTIMATORS
        known = {"replicates", "t_len", "train", "validation", "horizons", "burn_in", "p_candidates", "lambda_count"}
        unknown = set(st) - known
        if unknown:
            raise sio.DataError(f"unknown study keys: {', '.join(sorted(unknown))}")
        if "p_candidates" in st:
            st["p_candidates"] = tuple(int(p) for p in st["p_candidates"])
        return StudyConfig(scenario=spec, estimators=estimators, master_seed=seed, **st)
    except (KeyError, TypeError, argparse.ArgumentTypeError) as exc:
        raise sio.DataError(f"malformed study config: {exc}") from exc


def cmd_study(args) -> int:
    raw = sio.read_config(args.config)
    seed = _resolve_seed(args, raw.get("seed"))
    config = _study_config(raw, seed)
    if args.replicates is not None:
        config = dataclasses.replace(config, replicates=args.replicates)
    result = run_study(config, threads=args.threads)
    out = _out_dir(args.output_dir)
    prov = _prov(args, seed, {"config": raw, "replicates": config.replicates})
    sio.write_geometry(out / "sites.csv", result.geometry, prov)
    sio.write_model(out / "truth.json", result.truth, result.geometry.site_ids, prov)
    sio.write_table(out / "replicates.csv", result.rows, prov=prov)
    sio.write_table(out / "ratios.csv", result.ratios, prov=prov)
    sio.write_table(out / "summary.csv", result.summary, ["metric", "estimator", "mean", "se", "n"], prov)
    sio.write_table(out / "ratio_table.csv", _wide_table(result.summary, config), prov=prov)
    horizon_rows = [
        {"estimator": r["estimator"], "horizon": int(r["metric"].split("_h")[1]), "mean": r["mean"], "se": r["se"]}
        for r in result.summary if r["metric"].startswith("rmsfe_h")
    ]
    sio.write_table(out / "rmsfe_ratio_by_horizon.csv", horizon_rows, prov=prov)
    return EXIT_OK


def _wide_table(summary, config: StudyConfig) -> list[dict]:
    """Rows per metric, ``<estimator>_mean`` and ``<estimator>_se`` columns for non-baseline estimators."""
    names = [e.name for e in config.estimators[1:]]
    metrics = list(dict.fromkeys(r["metric"] for r in summary))
    look = {(r["metric"], r["estimator"]): r for r in summary}
    rows = []
    for k in metrics:
        row = {"metric": k}
        for n in names:
            row[f"{n}_mean"] = look[(k, n)]["mean"]
            row[f"{n}_se"] = look[(k, n)]["se"]
        rows.append(row)
    return rows


def cmd_detrend(args) -> int:
    ids, panel, times = sio.read_panel(args.input, allow_nan=True)
    start = int(times[0]) if times is not None else args.start
    if times is not None and np.any(np.diff(times) != 1):
        raise sio.DataError("detrend needs consecutive time stamps")
    t = np.arange(start, start + panel.shape[0])
    x, trends, masks = detrend_panel(panel, args.period, args.bandwidth, start)
    out = _out_dir(args.output_dir)
    prov = _prov(args)
    sio.write_trends(out / "trends.json", ids, trends, prov)
    x = np.where(masks, np.nan, x)
    if args.slots:
        bad = [d for d in args.slots if not 1 <= d <= args.period]
        if bad:
            raise sio.DataError(f"slots out of range: {bad[:5]}")
        x, t = filter_slots(x, args.slots, args.period, start)
    sio.write_panel(out / "standardized.csv", ids, x, times=t, prov=prov)
    outliers = [{"time": int(tt), "slot": int(slot_index(int(tt), args.period)), "site": ids[s]}
                for tt, s in zip(*_nonzero_times(masks, start))]
    sio.write_table(out / "outliers.csv", outliers, ["time", "slot", "site"], prov)
    return EXIT_OK


def _nonzero_times(masks, start):
    r, c = np.nonzero(masks)
    return r + start, c


def cmd_network(args) -> int:
    coeffs, payload = sio.read_fit(args.fit)
    ids = payload.get("site_ids") or [f"s{i}" for i in range(coeffs.m)]
    est = coeffs.phis
    if args.threshold > 0:
        est = np.where(np.abs(est) > args.threshold, est, 0.0)
    if args.truth:
        truth, _ = sio.read_model(args.truth)
        if truth.m != coeffs.m:
            raise sio.DataError("fit and truth have different numbers of sites")
        p = max(truth.p, coeffs.p)
        cls = classify_network(_padded(est, p), _padded(truth.phis, p))
    else:
        cls = classify_network(est, np.zeros_like(est))
    prov = _prov(args)
    if args.collapse:
        codes = cls.collapsed()[None]
        cls = type(cls)(codes)
    if args.truth:
        sio.write_edges(args.output, cls, ids, prov)
    else:
        rows = [(a, b, lag, "estimated") for a, b, lag, _ in cls.rows(ids)]
        sio._write_csv(args.output, ["from_site", "to_site", "lag", "class"], rows, prov)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stvar", description="Spatio-temporal sparse VAR estimation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p, stochastic=False):
        p.add_argument("--threads", type=int, default=1, help="maximum worker threads")
        if stochastic:
            p.add_argument("--seed", type=int, default=None, help="master seed (falls back to STVAR_SEED)")

    p = sub.add_parser("simulate", help="simulate a panel from a model JSON")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--output", type=Path, required=True)
    common(p, True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("generate-scenario", help="draw a lattice scenario truth")
    p.add_argument("--order", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--setting", type=int, choices=(1, 2), default=1)
    p.add_argument("--scenario", choices=("a", "b", "c"), default="a")
    p.add_argument("--sites", type=int, default=30)
    p.add_argument("--sigma-scale", type=float, default=0.01)
    p.add_argument("--max-attempts", type=int, default=10_000)
    p.add_argument("--length", type=int, default=0, help="also simulate a panel of this length")
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--output-dir", type=Path, required=True)
    common(p, True)
    p.set_defaults(handler=cmd_generate_scenario)

    p = sub.add_parser("fit", help="weighted lasso fit at one lambda")
    p.add_argument("--input", type=Path, required=True)
    _add_geometry_args(p)
    p.add_argument("--weights", type=_weight_kind, default=LASSO)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--output", type=Path, required=True)
    common(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("cv", help="forward cross-validation over (p, c, lambda)")
    p.add_argument("--input", type=Path, required=True)
    _add_geometry_args(p)
    p.add_argument("--weights", type=_weight_kind, default="exp-lag-dist")
    p.add_argument("--p-candidates", type=_int_list, default=(1, 2, 3, 4))
    p.add_argument("--c-candidates", type=_float_list, default=(0.5, 5, 10, 15, 20, 25, 30))
    p.add_argument("--lambda-count", type=int, default=30)
    p.add_argument("--lambda-ratio", type=float, default=1000.0)
    p.add_argument("--train-end", type=int, default=None)
    p.add_argument("--output-dir", type=Path, required=True)
    common(p)
    p.set_defaults(handler=cmd_cv)

    p = sub.add_parser("forecast", help="recursive h-step forecasts from a fit")
    p.add_argument("--fit", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--origin", type=int, default=None, help="number of leading rows used as history")
    p.add_argument("--output", type=Path, required=True)
    common(p)
    p.set_defaults(handler=cmd_forecast)

    p = sub.add_parser("evaluate", help="estimation and forecast metrics")
    p.add_argument("--fit", type=Path, required=True)
    p.add_argument("--truth", type=Path)
    p.add_argument("--input", type=Path, help="panel for forecast evaluation")
    p.add_argument("--start", type=int, default=None, help="first evaluated target row (0-based)")
    p.add_argument("--horizons", type=int, default=5)
    p.add_argument("--compare", type=Path, help="second fit for a Diebold-Mariano comparison")
    p.add_argument("--output-dir", type=Path, required=True)
    common(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("study", help="replicate simulation study from a TOML/JSON config")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--replicates", type=int, default=None, help="override the configured replicate count")
    p.add_argument("--output-dir", type=Path, required=True)
    common(p, True)
    p.set_defaults(handler=cmd_study)

    p = sub.add_parser("detrend", help="periodic trend and variance standardisation")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--period", type=int, default=168)
    p.add_argument("--bandwidth", type=_bandwidth, default=None, help="kernel bandwidth in slots, 'cv' (default) or 'silverman'")
    p.add_argument("--start", type=int, default=1, help="time of the first row when the panel has no time column")
    p.add_argument("--slots", type=_slot_set, default=None, help="keep only these slots, e.g. 7-9,31-33")
    p.add_argument("--output-dir", type=Path, required=True)
    common(p)
    p.set_defaults(handler=cmd_detrend)

    p = sub.add_parser("network", help="edge list of an estimated network")
    p.add_argument("--fit", type=Path, required=True)
    p.add_argument("--truth", type=Path)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--collapse", action="store_true", help="merge lags: an edge exists if present at any lag")
    p.add_argument("--output", type=Path, required=True)
    common(p)
    p.set_defaults(handler=cmd_network)
    return parser


def _check_args(args):
    if getattr(args, "threads", 1) < 1:
        raise UsageError("--threads must be >= 1")
    for name in ("input", "geometry", "distances", "model", "fit", "truth", "config", "compare"):
        path = getattr(args, name, None)
        if path is not None and not Path(path).is_file():
            raise UsageError(f"file not found: {path}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _check_args(args)
        return args.handler(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except sio.NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (sio.DataError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RuntimeError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
