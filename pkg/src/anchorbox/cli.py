"""Command line: explain, bench, audit.

Exit codes: 0 ok, 1 usage error, 2 runtime error, 3 certification impossible.
"""
from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from .anchor import AnchorNotFaithful, AnchorParams, explain
from .data import DataError, data_bounding_box, generate_signal_dataset, load_csv
from .experiments import (ExperimentError, run_cluster_bench, run_expansion_ablation,
                          run_honesty, run_hyperparam_sweep, run_volume_bench, write_outputs)
from .geometry import Box, GeometryError
from .models import SurrogateFitError, fit_surrogate, load_model, save_model, train_forest
from .oracle import (ClassificationRule, ExternalOracle, HalfL1Ball, ModelFaithfulness,
                     OracleError)
from .seeding import derive_rng
from .solver import PositivesTooRare, RunTimeout

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_IMPOSSIBLE = 0, 1, 2, 3

# explain flags that may also come from a config file; None means "not given"
EXPLAIN_KEYS = {
    "data": None, "label": None, "binarize": False, "anchor_row": None, "anchor": None,
    "surrogate": "linear", "n_estimators": 100, "oracle_cmd": None, "bounds": None,
    "builtin_oracle": None, "dim": None, "rho": 0.99, "delta": 0.01, "n_positives": 100,
    "node_budget": 100, "expansion_order": "largest_gain_first", "seed": 0,
    "audit_samples": 10_000, "time_limit": None, "reuse_samples": True,
}


class UsageError(Exception):
    pass


def _parse_vector(text, what):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _parse_bounds(text):
    lo, hi = [], []
    for part in text.split(","):
        try:
            a, b = part.split(":")
            lo.append(float(a))
            hi.append(float(b))
        except ValueError:
            raise UsageError(f"--bounds: expected lo:hi,lo:hi,..., got {text!r}") from None
    return lo, hi


def load_config(path) -> dict:
    """Flat key-value JSON; a report file contributes its embedded flags."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    if "config" in cfg and isinstance(cfg["config"], dict) and "cli" in cfg["config"]:
        cfg = cfg["config"]["cli"]
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def resolve_explain(args) -> dict:
    cfg = dict(EXPLAIN_KEYS)
    if args.config:
        extra = load_config(args.config)
        unknown = set(extra) - set(EXPLAIN_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(extra)
    for k in EXPLAIN_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["data"] is not None:
        cfg["data"] = str(Path(cfg["data"]).resolve())
    return cfg


def params_from(cfg) -> AnchorParams:
    try:
        return AnchorParams(rho=float(cfg["rho"]), delta=float(cfg["delta"]),
                            n_positives=int(cfg["n_positives"]), node_budget=int(cfg["node_budget"]),
                            expansion_order=cfg["expansion_order"], seed=int(cfg["seed"]),
                            audit_samples=int(cfg["audit_samples"]),
                            time_limit=None if cfg["time_limit"] is None else float(cfg["time_limit"]),
                            reuse_samples=bool(cfg["reuse_samples"]))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def build_problem(cfg, stored=None):
    """(anchor, space, oracle, closers, fitted models) for an explain config.

    ``stored`` maps "model"/"surrogate" to JSON files to load instead of
    retraining.
    """
    sources = [cfg["data"] is not None, cfg["oracle_cmd"] is not None, cfg["builtin_oracle"] is not None]
    if sum(sources) == 0:
        raise UsageError("one of --data, --oracle-cmd or --builtin-oracle is required")
    if cfg["data"] is not None and cfg["builtin_oracle"] is not None:
        raise UsageError("--data and --builtin-oracle are exclusive")
    anchor = None if cfg["anchor"] is None else np.asarray(
        cfg["anchor"] if isinstance(cfg["anchor"], list) else _parse_vector(cfg["anchor"], "--anchor"))
    space = None
    ds = None
    if cfg["data"] is not None:
        if cfg["label"] is None:
            raise UsageError("--data needs --label")
        ds = load_csv(cfg["data"], cfg["label"], binarize=bool(cfg["binarize"]))
        space = data_bounding_box(ds)
        if cfg["anchor_row"] is not None:
            row = int(cfg["anchor_row"])
            if not 0 <= row < ds.n:
                raise UsageError(f"--anchor-row {row} out of range for {ds.n} rows")
            anchor = ds.X[row]
    if cfg["bounds"] is not None:
        b = cfg["bounds"]
        lo, hi = (b["lower"], b["upper"]) if isinstance(b, dict) else _parse_bounds(b)
        space = Box(lo, hi)
    if cfg["builtin_oracle"] is not None:
        if cfg["builtin_oracle"] != "half_l1":
            raise UsageError(f"unknown builtin oracle {cfg['builtin_oracle']!r}")
        D = cfg["dim"] if cfg["dim"] is not None else (len(anchor) if anchor is not None else None)
        if D is None:
            raise UsageError("--builtin-oracle needs --dim or --anchor")
        oracle = HalfL1Ball(int(D))
        space = space or Box(np.full(D, -5.0), np.full(D, 5.0))
        anchor = np.zeros(D) if anchor is None else anchor
        return anchor, space, oracle, [], {}
    if anchor is None:
        raise UsageError("an anchor is required: --anchor-row (with --data) or --anchor")
    if space is None:
        raise UsageError("a search space is required: --data or --bounds")
    if cfg["oracle_cmd"] is not None:
        cmd = cfg["oracle_cmd"]
        oracle = ExternalOracle(shlex.split(cmd) if isinstance(cmd, str) else cmd, dim=len(anchor))
        return anchor, space, oracle, [oracle], {}
    y = np.asarray(ds.y).astype(np.int64)
    fitted = {}
    if stored:
        f = load_model(stored["model"])
        g = load_model(stored["surrogate"])
    else:
        f = train_forest(ds.X, y, n_estimators=int(cfg["n_estimators"]),
                         rng=derive_rng(int(cfg["seed"]), "forest"), n_classes=int(y.max()) + 1)
        fit = fit_surrogate(f, anchor, cfg["surrogate"], ClassificationRule(),
                            derive_rng(int(cfg["seed"]), "surrogate"))
        g = fit.surrogate
        fitted = {"model": f, "surrogate": g, "sigma": fit.sigma}
    oracle = ModelFaithfulness(f, g, ClassificationRule(), len(anchor))
    return anchor, space, oracle, [], fitted


def cmd_explain(args):
    cfg = resolve_explain(args)
    params = params_from(cfg)
    anchor, space, oracle, closers, models = build_problem(cfg)
    try:
        report = explain(anchor, space, oracle, params, {"cli": cfg})
    finally:
        for c in closers:
            c.close()
    out = report.to_dict()
    if models:
        out["sigma"] = models["sigma"]
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        if models:
            names = {k: f"{path.stem}.{k}.json" for k in ("model", "surrogate")}
            for k, name in names.items():
                save_model(models[k], path.parent / name)
            out["models"] = names
        with open(path, "w") as fh:
            json.dump(out, fh, indent=1)
    print(json.dumps({"log10_volume": out["log10_volume"], "evals": out["evals"],
                      "purity_audit": out["purity_audit"], "out": args.out}))
    return EXIT_OK


def cmd_audit(args):
    try:
        with open(args.report) as fh:
            rep = json.load(fh)
        box = Box.from_dict(rep["box"])
        cfg = dict(EXPLAIN_KEYS)
        cfg.update(rep["config"]["cli"])
    except (OSError, KeyError, json.JSONDecodeError, GeometryError) as exc:
        raise UsageError(f"cannot read report {args.report}: {exc}") from None
    here = Path(args.report).parent
    stored = {k: here / v for k, v in rep.get("models", {}).items()}
    _, _, oracle, closers, _ = build_problem(cfg, stored)
    try:
        X = box.sample(args.samples, derive_rng(args.seed, "audit-cli"))
        frac = float(np.mean(oracle.evaluate_many(X)))
    finally:
        for c in closers:
            c.close()
    rho = float(cfg["rho"])
    passed = frac >= rho
    print(json.dumps({"samples": args.samples, "fraction": frac, "rho": rho, "passed": passed}))
    if not passed:
        print(f"warning: audited purity {frac:.5f} is below rho={rho}", file=sys.stderr)
    return EXIT_OK


def _bench_dataset(cfg):
    if "generator" in cfg:
        gen = cfg["generator"]
        if gen.get("name") != "signal":
            raise UsageError(f"unknown generator {gen.get('name')!r}")
        return generate_signal_dataset(int(gen.get("n", 500)), int(gen.get("D", 4)),
                                       int(gen.get("k", 0)), derive_rng(int(cfg.get("seed", 0)), "signal"),
                                       float(gen.get("noise", 0.3)))
    if "data" not in cfg or "label" not in cfg:
        raise UsageError("config needs 'data' and 'label' (or a 'generator')")
    return load_csv(cfg["data"], cfg["label"], binarize=bool(cfg.get("binarize", False)))


def cmd_bench(args):
    cfg = load_config(args.config) if args.config else {}
    base = dict(EXPLAIN_KEYS)
    base.update({k: v for k, v in cfg.items() if k in EXPLAIN_KEYS})
    params = params_from(base)
    seed = int(cfg.get("seed", 0))
    workers = args.workers if args.workers is not None else cfg.get("workers", os.cpu_count() or 1)
    n = int(cfg.get("n_anchors", 20))
    family = cfg.get("surrogate", "linear")
    methods = tuple(cfg.get("methods", ("anchor", "greedy", "radial")))
    Ds = cfg.get("D", [10])
    Ds = Ds if isinstance(Ds, list) else [Ds]
    recs, rows, extra = [], [], {}
    if args.kind == "volume":
        recs, rows = run_volume_bench(_bench_dataset(cfg), family, methods, n, params, seed, workers)
    elif args.kind == "clusters":
        for D in Ds:
            r, t, plot = run_cluster_bench(int(D), family, methods, n, params, seed, workers)
            recs += r
            rows += t
            if plot is not None:
                extra["clusters_plot_D2.json"] = plot
    elif args.kind == "honesty":
        recs, rows = run_honesty(_bench_dataset(cfg), cfg.get("k", "auto"), n, params, seed, workers)
    elif args.kind == "hyperparams":
        for D in Ds:
            r, t = run_hyperparam_sweep(int(D), cfg.get("N_grid", [100]), cfg.get("T_grid", [100]),
                                        n, params, seed, workers, cfg.get("timeout"))
            recs += r
            rows += t
    elif args.kind == "expansion":
        source = cfg.get("source", "half_l1")
        ds = _bench_dataset(cfg) if source == "dataset" else None
        recs, rows = run_expansion_ablation(source, params, seed, workers, n, int(Ds[0]), ds, family)
    cfg_out = {"kind": args.kind, "config": cfg, "params": params.to_dict()}
    extra["config.json"] = cfg_out
    write_outputs(args.kind, recs, rows, args.out, extra)
    for row in rows:
        print(json.dumps(row, default=str))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="anchorbox", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("explain", help="certify a box around one anchor")
    e.add_argument("--config", help="JSON file of flag values (or a report to replay)")
    e.add_argument("--data", help="CSV with a header row")
    e.add_argument("--label", help="label column of --data")
    e.add_argument("--binarize", action="store_true", default=None,
                   help="split a real label at its median")
    e.add_argument("--anchor-row", type=int, help="row of --data used as the anchor")
    e.add_argument("--anchor", help="comma-separated anchor coordinates")
    e.add_argument("--surrogate", choices=("linear", "tree"))
    e.add_argument("--n-estimators", type=int)
    e.add_argument("--oracle-cmd", help="child process answering faithfulness queries")
    e.add_argument("--bounds", help="search space as lo:hi,lo:hi,...")
    e.add_argument("--builtin-oracle", choices=("half_l1",))
    e.add_argument("--dim", type=int)
    e.add_argument("--rho", type=float)
    e.add_argument("--delta", type=float)
    e.add_argument("--n-positives", type=int)
    e.add_argument("--node-budget", type=int)
    e.add_argument("--expansion-order", choices=("largest_gain_first", "random"))
    e.add_argument("--seed", type=int)
    e.add_argument("--audit-samples", type=int)
    e.add_argument("--time-limit", type=float)
    e.add_argument("--out", help="report JSON path")
    e.set_defaults(func=cmd_explain)

    b = sub.add_parser("bench", help="run an experiment family")
    b.add_argument("kind", choices=("volume", "clusters", "honesty", "hyperparams", "expansion"))
    b.add_argument("--config", help="JSON experiment config")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("audit", help="re-estimate the purity of a stored box")
    a.add_argument("--report", required=True)
    a.add_argument("--samples", type=int, default=100_000)
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AnchorNotFaithful, SurrogateFitError, PositivesTooRare) as exc:
        print(f"certification impossible: {exc}", file=sys.stderr)
        return EXIT_IMPOSSIBLE
    except (OracleError, RunTimeout, ExperimentError, GeometryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
