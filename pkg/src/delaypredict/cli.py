"""Command-line front end.

Every subcommand reads an optional JSON config, writes CSV data plus a JSON
summary and a manifest into the output directory, and exits with 0 on
success, 2 when a checked assertion fails and 3 on configuration or input
errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._balls import set_workers
from .core import (DelayParams, TimeSeries, delay_vectors, read_series_csv, write_cloud_csv,
                   write_rows_csv)
from .errors import ConfigurationError, DelayPredictError, InvalidInputError, NoNeighborsError

OUT_ENV = "DELAYPREDICT_OUT"
DEFAULT_OUT = "delaypredict-out"

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG = 0, 2, 3

DEFAULTS = {
    "embed": {"input": None, "k": 2, "header": None},
    "predict": {"input": None, "k": 2, "eps": 0.05, "header": None, "queries": None},
    "error-scaling": {
        "system": {"name": "interval_pair", "parameters": {}},
        "observable": {"index": 1, "alpha_seed": 0, "alpha_radius": 0.02, "order": 4},
        "measure": {"kind": "uniform_interval_pair", "n_per_branch": 50000},
        "k": 2, "delta": 0.1, "theta": 0.1, "d_est": 1.0,
        "eps_grid": {"eps_max": 0.1, "eps_min": 0.001, "points": 9, "geometric": True},
    },
    "counterexample": {"n_min": 7, "n_max": 12, "n_max_truncation": 16, "delta": None,
                       "observable": "h0", "alpha_radius": 0.02},
    "dimension": {
        "input": None, "k": 2, "header": None,
        "system": {"name": "henon", "parameters": {"a": 1.4, "b": 0.3}},
        "x0": [0.0, 0.0], "n": 20000, "burn_in": 1000, "observable_index": 0,
        "eps_grid": {"eps_max": 0.1, "eps_min": 0.001, "points": 11, "geometric": True},
    },
    "fnn": {
        "input": None, "header": None,
        "system": {"name": "henon", "parameters": {"a": 1.4, "b": 0.3}},
        "x0": [0.0, 0.0], "n": 10000, "burn_in": 1000, "observable_index": 0,
        "k_max": 6, "r_tol": 10.0, "rate": 0.01,
    },
    "verify-comb": {"max_states": 12, "ks": [2, 3, 4, 5], "trials": 100},
    "check-lemmas": {"mc_trials": 100000, "mc_eps": {"eps_max": 0.1, "eps_min": 0.01, "points": 5},
                     "deviation_cases": 1000, "interpolation_draws": 200, "interpolation_k": 3},
}


# ----------------------------------------------------------- helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n")


def _grid(grid_cfg) -> np.ndarray:
    if isinstance(grid_cfg, list):
        return np.asarray(grid_cfg, dtype=np.float64)
    try:
        hi, lo, n = float(grid_cfg["eps_max"]), float(grid_cfg["eps_min"]), int(grid_cfg["points"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad eps grid config {grid_cfg!r}: {exc}") from None
    if not (hi > lo > 0) or n < 2:
        raise ConfigurationError("eps grid needs eps_max > eps_min > 0 and points >= 2")
    return np.geomspace(hi, lo, n) if grid_cfg.get("geometric", True) else np.linspace(hi, lo, n)


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if k not in base:
            raise ConfigurationError(f"unknown config key {k!r}")
        out[k] = v
    return out


def _series(cfg) -> TimeSeries:
    from .systems import builtin_system, iterate

    if cfg.get("input"):
        return read_series_csv(cfg["input"], header=cfg.get("header"))
    try:
        sysm = builtin_system(cfg["system"]["name"], cfg["system"].get("parameters", {}))
        orbit = iterate(sysm, cfg["x0"], int(cfg["n"]), int(cfg.get("burn_in", 0)))
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"series source incomplete: {exc}") from None
    return TimeSeries(orbit[:, int(cfg.get("observable_index", 0))], source_tag=sysm.name)


# ------------------------------------------------------- subcommands


def cmd_embed(cfg, seed, out, header):
    if not cfg["input"]:
        raise ConfigurationError("embed needs an input CSV")
    cloud = delay_vectors(read_series_csv(cfg["input"], header=cfg["header"]), DelayParams(cfg["k"]))
    write_cloud_csv(out / "points.csv", cloud, header=header)
    return {"n_points": len(cloud), "k": cloud.dim, "columns": [f"z{i}" for i in range(cloud.dim)]}, True


def cmd_predict(cfg, seed, out, header):
    from .predict import PredictionQuery, fs_predict, fs_variance

    if not cfg["input"]:
        raise ConfigurationError("predict needs an input CSV")
    cloud = delay_vectors(read_series_csv(cfg["input"], header=cfg["header"]), DelayParams(cfg["k"]))
    if cfg["queries"]:
        q = np.loadtxt(cfg["queries"], delimiter=",", ndmin=2)
    else:
        q = cloud.points
    k = cloud.dim
    cols = [f"y{i}" for i in range(k)] + [f"pred{i}" for i in range(k)] + ["variance"]
    rows, empty = [], 0
    for y in q:
        query = PredictionQuery(y, cfg["eps"])
        try:
            pred = fs_predict(cloud, query).tolist()
            var = fs_variance(cloud, query)
        except NoNeighborsError:
            pred, var, empty = [math.nan] * k, math.nan, empty + 1
        rows.append([float(v) for v in y] + pred + [var])
    write_rows_csv(out / "predictions.csv", cols, rows, header=header)
    return {"n_queries": len(q), "empty_balls": empty, "eps": cfg["eps"], "columns": cols}, True


def cmd_error_scaling(cfg, seed, out, header):
    from .experiments import interval_pair_observable, scaling_experiment
    from .systems import coordinate, measure_from_config, perturb_observable, \
        polynomial_probe_family, sample_alpha, system_from_config

    system = system_from_config(cfg["system"])
    ob = cfg["observable"]
    if system.name == "interval_pair" and ob.get("index", 1) == 1:
        h = interval_pair_observable(ob.get("alpha_seed"), ob.get("alpha_radius", 0.02),
                                     ob.get("order", 2 * cfg["k"]))
    else:
        h = coordinate(int(ob.get("index", 0)))
        if ob.get("alpha_seed") is not None:
            fam = polynomial_probe_family(system.state_dim, int(ob.get("order", 2 * cfg["k"])))
            h = perturb_observable(h, fam, sample_alpha(int(ob["alpha_seed"]), len(fam),
                                                        float(ob.get("alpha_radius", 0.1))))
    measure = measure_from_config(cfg["measure"])
    res = scaling_experiment(system, h, int(cfg["k"]), measure, float(cfg["delta"]),
                             _grid(cfg["eps_grid"]), float(cfg["theta"]), cfg.get("d_est"))
    write_rows_csv(out / "scaling.csv", ["epsilon", "fraction", "exceedance_atoms"],
                   ([e, f, c] for e, f, c in res.rows), header=header)
    return res.summary(), res.verdict == "pass"


def cmd_counterexample(cfg, seed, out, header):
    from .experiments import (COUNTEREXAMPLE_COLUMNS, counterexample_experiment,
                              interval_pair_observable)
    from .systems import coordinate

    ob = cfg["observable"]
    if ob == "h0":
        h = None
    elif ob == "x":
        h = coordinate(0, "x")
    elif isinstance(ob, dict) and "alpha_seed" in ob:
        h = interval_pair_observable(int(ob["alpha_seed"]), float(cfg["alpha_radius"]))
    else:
        raise ConfigurationError(f"unknown observable {ob!r}")
    res = counterexample_experiment(range(int(cfg["n_min"]), int(cfg["n_max"]) + 1),
                                    int(cfg["n_max_truncation"]), cfg["delta"], h)
    write_rows_csv(out / "counterexample.csv", COUNTEREXAMPLE_COLUMNS,
                   (r.row() for r in res.rows), header=header)
    return res.summary(), res.passed


def cmd_dimension(cfg, seed, out, header):
    from .dimension import box_counting_dim, correlation_dim, information_dim, write_estimate_csv
    from .systems import EmpiricalMeasure

    cloud = delay_vectors(_series(cfg), DelayParams(cfg["k"]))
    grid = _grid(cfg["eps_grid"])
    n = len(cloud)
    ests = {
        "box_counting": box_counting_dim(cloud, grid),
        "correlation": correlation_dim(cloud, grid),
        "information": information_dim(EmpiricalMeasure(cloud.points, np.full(n, 1.0 / n)), grid),
    }
    for name, e in ests.items():
        write_estimate_csv(out / f"{name}.csv", e, header=header)
    return {name: e.summary() for name, e in ests.items()}, True


def cmd_fnn(cfg, seed, out, header):
    from .fnn import embedding_dimension, write_profile_csv

    prof = embedding_dimension(_series(cfg), int(cfg["k_max"]), float(cfg["r_tol"]), float(cfg["rate"]))
    write_profile_csv(out / "fnn.csv", prof, header=header)
    return prof.summary(), True


def cmd_verify_comb(cfg, seed, out, header):
    from .orbitcomb import verify_rank_predict, verify_sigma_k_positive

    ks = tuple(int(k) for k in cfg["ks"])
    a = verify_rank_predict(int(cfg["max_states"]), ks, int(cfg["trials"]), seed)
    b = verify_sigma_k_positive(int(cfg["max_states"]), ks, int(cfg["trials"]), seed)
    rows = [[c, v["structures"], v["rank_deficient"], v["max_observed_ratio"], v["max_exact_ratio"]]
            for c, v in a["per_case"].items()]
    write_rows_csv(out / "cases.csv", ["case", "structures", "rank_deficient", "max_observed_ratio",
                                       "max_exact_ratio"], rows, header=header)
    summary = {"rank_predict": a, "sigma_k": b, "violations": a["n_violations"] + b["n_violations"]}
    return summary, summary["violations"] == 0


def cmd_check_lemmas(cfg, seed, out, header):
    from .experiments import deviation_bound_check, interpolation_certificate, random_two_cluster
    from .orbitcomb import mc_slope
    from .systems import polynomial_probe_family

    grid = _grid(cfg["mc_eps"])
    mc_rows, mc = [], {}
    ok = True
    for p in (1, 2):
        r = mc_slope(np.eye(p), np.zeros(p), 1.0, grid, int(cfg["mc_trials"]), seed)
        good = abs(r["slope"] - p) <= 0.1 and r["bound_holds"]
        ok &= good
        mc[str(p)] = {"slope": r["slope"], "C_cal": r["C_cal"], "bound_holds": r["bound_holds"],
                      "pass": good}
        mc_rows += [[p, row.eps, row.fraction, row.bound_term] for row in r["rows"]]
    write_rows_csv(out / "mc_measure.csv", ["p", "epsilon", "fraction", "bound_term"], mc_rows,
                   header=header)
    rng = np.random.default_rng(seed)
    dev_rows, dev_fail = [], 0
    for i in range(int(cfg["deviation_cases"])):
        m, in_a, gamma, pp = random_two_cluster(rng)
        d = deviation_bound_check(m, in_a, gamma, pp)
        dev_fail += int(not d.passed)
        dev_rows.append([i, d.std, d.floor, int(d.passed)])
    write_rows_csv(out / "deviation.csv", ["case", "std", "floor", "pass"], dev_rows, header=header)
    ok &= dev_fail == 0
    kk = int(cfg["interpolation_k"])
    fam = polynomial_probe_family(2, 2 * kk)
    pts = np.random.default_rng(seed + 1).random((500, 2))
    cert = interpolation_certificate(fam, pts, 2 * kk, int(cfg["interpolation_draws"]), seed)
    ok &= cert.passed
    summary = {"mc_measure": mc, "deviation": {"cases": len(dev_rows), "failures": dev_fail},
               "interpolation": {"passed": cert.passed, "worst_ratio": cert.worst_ratio,
                                 "draws": cert.draws, "order": 2 * kk}}
    return summary, ok


COMMANDS = {
    "embed": cmd_embed,
    "predict": cmd_predict,
    "error-scaling": cmd_error_scaling,
    "counterexample": cmd_counterexample,
    "dimension": cmd_dimension,
    "fnn": cmd_fnn,
    "verify-comb": cmd_verify_comb,
    "check-lemmas": cmd_check_lemmas,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delaypredict", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with parameters for the subcommand")
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--workers", type=int, default=None, help="cap on worker threads")
    common.add_argument("--out", default=None,
                        help=f"output directory (else ${OUT_ENV}, else ./{DEFAULT_OUT})")
    common.add_argument("--csv-no-header", action="store_true", help="omit CSV header rows")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def run(command: str, config: dict, seed: int = 0, out=None, header: bool = True,
        workers=None) -> int:
    """Execute one subcommand; returns the exit status."""
    set_workers(workers)
    out = Path(out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    if seed < 0 or seed >= 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    cfg = _merge(DEFAULTS[command], config)
    summary, ok = COMMANDS[command](cfg, seed, out, header)
    summary = dict(summary)
    summary["passed"] = bool(ok)
    dump_json(out / "summary.json", summary)
    dump_json(out / "manifest.json", {"command": command, "config": cfg, "seed": seed,
                                      "version": __version__, "csv_header": header})
    return EXIT_OK if ok else EXIT_ASSERT


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = {}
        if args.config:
            try:
                config = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
            if not isinstance(config, dict):
                raise ConfigurationError("config must be a JSON object")
        return run(args.command, config, args.seed, args.out, not args.csv_no_header, args.workers)
    except (ConfigurationError, InvalidInputError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except DelayPredictError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
