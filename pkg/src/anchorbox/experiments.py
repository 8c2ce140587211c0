"""Experiment drivers: honesty check, volume and cluster-coverage benchmarks,
hyperparameter sweep and expansion-order ablation.

Every driver returns ``(records, rows)``: one record per run and aggregated
table rows.  Work items are independent (own seed, scheduler and sample
store) and may run in a process pool; results are ordered by item index, so
output does not depend on the number of workers.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .anchor import AnchorNotFaithful, AnchorParams, AnchorRun, audit_purity, find_anchor
from .baselines import RadialRegion, fit_greedy_anchor, fit_radial
from .data import (Dataset, cluster_coverage, data_bounding_box, generate_clusters,
                   train_test_split)
from .geometry import Box, log10_volume
from .models import (SurrogateFitError, fit_surrogate, mask_feature, train_forest,
                     train_logistic)
from .oracle import ClassificationRule, HalfL1Ball, ModelFaithfulness
from .seeding import child_seed, derive_rng
from .solver import PositivesTooRare, RunTimeout

METHODS = ("anchor", "greedy", "radial")


class ExperimentError(RuntimeError):
    pass


# -- plumbing -------------------------------------------------------------------------

def map_items(fn, items, workers: int = 1):
    items = list(items)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def item_seed(seed: int, *names) -> int:
    return child_seed(derive_rng(seed, *names))


def summarize(values):
    """(mean, std, count) over finite values; -inf volumes are counted apart."""
    v = np.asarray([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if len(v) == 0:
        return None, None, 0
    return float(v.mean()), float(v.std()), int(len(v))


def aggregate(records, keys, fields):
    groups = {}
    for r in records:
        groups.setdefault(tuple(r.get(k) for k in keys), []).append(r)
    rows = []
    for gk, rs in groups.items():
        row = dict(zip(keys, gk))
        row["runs"] = len(rs)
        row["failed"] = sum(1 for r in rs if r.get("error"))
        for f in fields:
            mean, std, n = summarize([r.get(f) for r in rs if not r.get("error")])
            row[f"{f}_mean"] = mean
            row[f"{f}_std"] = std
            if f == "log10_volume":
                row["degenerate"] = sum(1 for r in rs if not r.get("error") and r.get(f) is None)
        rows.append(row)
    return rows


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_jsonl(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(_jsonable(r), sort_keys=True) + "\n")


def write_csv(rows, path):
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in _jsonable(r).items()})


def write_outputs(name, records, rows, out_dir, extra: dict | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(records, out / f"{name}.jsonl")
    write_csv(rows, out / f"{name}.csv")
    for fname, obj in (extra or {}).items():
        with open(out / fname, "w") as fh:
            json.dump(_jsonable(obj), fh, indent=1)


# -- one method on one anchor ---------------------------------------------------------

def _region_volume(region):
    if isinstance(region, RadialRegion):
        return region.log10_volume()
    return log10_volume(region)


def _volume_or_none(v):
    return v if math.isfinite(v) else None


def run_method(method, anchor, space: Box, oracle, params: AnchorParams) -> dict:
    """Run one method; evals are read before the audit draws any samples."""
    t0 = time.perf_counter()
    run = AnchorRun(anchor, space, oracle, params)
    certified = True
    if method == "anchor":
        lo, hi = find_anchor(range(run.dim), space.lower, space.upper, run)
        region = Box(lo, hi)
    elif method == "greedy":
        res = fit_greedy_anchor(run)
        region, certified = res.region, res.certified
    elif method == "radial":
        res = fit_radial(run)
        region, certified = res.region, res.certified
    else:
        raise ValueError(f"unknown method {method!r}")
    evals = run.evals
    wall = time.perf_counter() - t0
    rng = derive_rng(params.seed, "audit")
    if isinstance(region, RadialRegion):
        n = params.audit_samples
        frac = float(np.mean(oracle.evaluate_many(region.sample(n, rng)))) if n > 0 else None
        audit = {"samples": n, "fraction": frac}
    else:
        audit = audit_purity(region, oracle, params.audit_samples, rng)
    return {
        "method": method,
        "region": region,
        "log10_volume": _volume_or_none(_region_volume(region)),
        "evals": evals,
        "tests": run.scheduler.tests_issued,
        "delta_spent": run.scheduler.spent,
        "certified": certified,
        "audit_fraction": audit["fraction"],
        "wall_time": wall,
    }


def _region_record(r):
    region = r.pop("region")
    r["region"] = region.to_dict()
    return r


def _failure(method, exc):
    return {"method": method, "error": f"{type(exc).__name__}: {exc}"}


# -- volume / cluster benchmarks ------------------------------------------------------

def _bench_item(task):
    f = task["f"]
    anchor = np.asarray(task["anchor"])
    params = task["params"]
    rule = ClassificationRule()
    base = {"anchor_index": task["index"], "row": task.get("row"), "surrogate": task["family"]}
    base.update(task.get("tags", {}))
    try:
        fit = fit_surrogate(f, anchor, task["family"], rule, derive_rng(params.seed, "surrogate"))
    except SurrogateFitError as exc:
        return [dict(base, **_failure(m, exc)) for m in task["methods"]]
    out = []
    for m in task["methods"]:
        oracle = ModelFaithfulness(f, fit.surrogate, rule, len(anchor))
        try:
            r = run_method(m, anchor, task["space"], oracle, params)
        except (AnchorNotFaithful, PositivesTooRare, RunTimeout) as exc:
            out.append(dict(base, **_failure(m, exc)))
            continue
        r["sigma"] = fit.sigma
        if "points" in task:
            r["coverage"] = cluster_coverage(r["region"], task["points"], task["assignments"],
                                             task["cluster"])
        out.append(dict(base, **_region_record(r)))
    return out


def _prepare_forest(ds: Dataset, seed, n_estimators):
    train, test = train_test_split(ds.n, derive_rng(seed, "split-data"))
    y = np.asarray(ds.y).astype(np.int64)
    f = train_forest(ds.X[train], y[train], n_estimators=n_estimators,
                     rng=derive_rng(seed, "forest"), n_classes=int(y.max()) + 1)
    order = derive_rng(seed, "anchors").permutation(test)
    return f, order


def _bench_tasks(f, ds, rows, family, methods, params, seed, extra=None):
    space = data_bounding_box(ds)
    tasks = []
    for i, row in enumerate(rows):
        t = {"index": i, "row": int(row), "f": f, "anchor": ds.X[row], "space": space,
             "family": family, "methods": list(methods),
             "params": replace(params, seed=item_seed(seed, "run", i))}
        t.update(extra(row) if extra else {})
        tasks.append(t)
    return tasks


def run_volume_bench(ds: Dataset, family="linear", methods=METHODS, n_anchors=20,
                     params: AnchorParams | None = None, seed=0, workers=1, n_estimators=100):
    params = params or AnchorParams()
    f, order = _prepare_forest(ds, seed, n_estimators)
    tasks = _bench_tasks(f, ds, order[:n_anchors], family, methods, params, seed)
    records = [r for rs in map_items(_bench_item, tasks, workers) for r in rs]
    for r in records:
        r["experiment"] = "volume"
    return records, aggregate(records, ["method", "surrogate"], ["log10_volume", "evals"])


def run_cluster_bench(D, family="linear", methods=METHODS, n_anchors=20,
                      params: AnchorParams | None = None, seed=0, workers=1, n_estimators=100):
    """Returns (records, rows, plot) where plot holds points and regions for D=2."""
    params = params or AnchorParams()
    ds, ids = generate_clusters(D, derive_rng(seed, "clusters", D))
    f, order = _prepare_forest(ds, seed, n_estimators)

    def extra(row):
        return {"points": ds.X, "assignments": ids, "cluster": int(ids[row]),
                "tags": {"D": D, "cluster": int(ids[row])}}

    tasks = _bench_tasks(f, ds, order[:n_anchors], family, methods, params, seed, extra)
    records = [r for rs in map_items(_bench_item, tasks, workers) for r in rs]
    for r in records:
        r["experiment"] = "clusters"
    rows = aggregate(records, ["method", "surrogate", "D"], ["coverage", "log10_volume", "evals"])
    plot = None
    if D == 2:
        first = [r for r in records if r["anchor_index"] == 0]
        plot = {"points": ds.X, "clusters": ids, "anchor": ds.X[order[0]],
                "bounding_box": data_bounding_box(ds).to_dict(),
                "regions": {r["method"]: r.get("region") for r in first}}
    return records, rows, plot


# -- honesty ------------------------------------------------------------------------

def select_feature(ds: Dataset) -> int:
    """Feature with the largest absolute weight in a logistic fit on all rows."""
    y = np.asarray(ds.y).astype(np.int64)
    model = train_logistic(ds.X, y)
    w = np.abs(np.asarray(model.weights)).reshape(ds.dim, -1)  # (D, classes)
    return int(np.argmax(w.max(axis=1)))


def unfaithful_nearby(g, f, anchor, k, space: Box, rule, span=0.3, n=100) -> bool:
    """True if g disagrees with f at one of n points along k within +-span of the box width."""
    half = span * (space.upper[k] - space.lower[k])
    ts = np.linspace(max(anchor[k] - half, space.lower[k]), min(anchor[k] + half, space.upper[k]), n)
    X = np.tile(anchor, (n, 1))
    X[:, k] = ts
    return not bool(np.all(rule.agree(f(X), g(X))))


def _honesty_item(task):
    f, g, k = task["f"], task["g"], task["k"]
    anchor = np.asarray(task["anchor"])
    rule = ClassificationRule()
    rec = {"anchor_index": task["index"], "row": task["row"], "k": k, "experiment": "honesty"}
    for name, model in (("honest", mask_feature(f, k, anchor)), ("dishonest", f)):
        oracle = ModelFaithfulness(model, g, rule, len(anchor))
        try:
            r = run_method("anchor", anchor, task["space"], oracle, task["params"])
        except (AnchorNotFaithful, PositivesTooRare, RunTimeout) as exc:
            rec[f"{name}_error"] = f"{type(exc).__name__}: {exc}"
            rec[f"width_{name}"] = None
            continue
        box = r["region"]
        rec[f"width_{name}"] = float(box.upper[k] - box.lower[k])
        rec[f"{name}_box"] = box.to_dict()
        rec[f"{name}_evals"] = r["evals"]
        rec[f"{name}_delta_spent"] = r["delta_spent"]
        rec[f"{name}_audit"] = r["audit_fraction"]
    return rec


def run_honesty(ds: Dataset, k="auto", n_anchors=20, params: AnchorParams | None = None, seed=0,
                workers=1, n_estimators=100, max_confidence=0.8, span=0.3):
    params = params or AnchorParams()
    k = select_feature(ds) if k == "auto" else int(k)
    f, order = _prepare_forest(ds, seed, n_estimators)
    space = data_bounding_box(ds)
    rule = ClassificationRule()
    tasks = []
    skipped = {"confidence": 0, "faithful_along_k": 0, "surrogate": 0}
    for row in order:
        if len(tasks) == n_anchors:
            break
        a = ds.X[row]
        if float(np.max(f.predict_proba(a[None, :]))) > max_confidence:
            skipped["confidence"] += 1
            continue
        i = len(tasks)
        try:
            fit = fit_surrogate(f, a, "linear", rule, derive_rng(seed, "surrogate", int(row)))
        except SurrogateFitError:
            skipped["surrogate"] += 1
            continue
        g = mask_feature(fit.surrogate, k, a)
        if not unfaithful_nearby(g, f, a, k, space, rule, span):
            skipped["faithful_along_k"] += 1
            continue
        tasks.append({"index": i, "row": int(row), "f": f, "g": g, "k": k, "anchor": a,
                      "space": space, "params": replace(params, seed=item_seed(seed, "run", i))})
    if not tasks:
        raise ExperimentError(
            f"no test anchor passed the filters {skipped}; raise max_confidence or span")
    records = map_items(_honesty_item, tasks, workers)
    wh = [r["width_honest"] for r in records if r["width_honest"] is not None]
    wd = [r["width_dishonest"] for r in records if r["width_dishonest"] is not None]
    row = {"k": k, "anchors": len(records), "skipped": json.dumps(skipped),
           "median_width_honest": float(np.median(wh)) if wh else None,
           "median_width_dishonest": float(np.median(wd)) if wd else None,
           "honest_wider": sum(1 for r in records
                               if r["width_honest"] is not None and r["width_dishonest"] is not None
                               and r["width_honest"] > r["width_dishonest"])}
    return records, [row]


# -- hyperparameter sweep -------------------------------------------------------------

def _sweep_item(task):
    D = task["D"]
    params = task["params"]
    oracle = HalfL1Ball(D)
    space = Box(np.full(D, -5.0), np.full(D, 5.0))
    rec = {"experiment": "hyperparams", "D": D, "N": params.n_positives, "T": params.node_budget,
           "run": task["index"], "seed": params.seed}
    try:
        r = run_method("anchor", np.zeros(D), space, oracle, params)
    except RunTimeout:
        rec["error"] = "Timeout"
        return rec
    r["optimum_rho1"] = oracle.optimal_log10_volume(space.lower, space.upper)
    rec.update(_region_record(r))
    return rec


def run_hyperparam_sweep(D, N_grid=(100,), T_grid=(100,), n_anchors=20,
                         params: AnchorParams | None = None, seed=0, workers=1, timeout=None):
    params = params or AnchorParams()
    tasks = []
    for N in N_grid:
        for T in T_grid:
            for i in range(n_anchors):
                p = replace(params, n_positives=int(N), node_budget=int(T), time_limit=timeout,
                            seed=item_seed(seed, "sweep", D, N, T, i))
                tasks.append({"D": D, "index": i, "params": p})
    records = map_items(_sweep_item, tasks, workers)
    rows = []
    for row in aggregate(records, ["D", "N", "T"], ["log10_volume", "evals", "wall_time"]):
        if row["failed"]:
            row["status"] = "Timeout"
        row["optimum_rho1"] = HalfL1Ball(D).optimal_log10_volume(np.full(D, -5.0), np.full(D, 5.0))
        rows.append(row)
    return records, rows


# -- expansion ablation ---------------------------------------------------------------

def run_expansion_ablation(source="half_l1", params: AnchorParams | None = None, seed=0,
                           workers=1, n_anchors=10, D=10, ds: Dataset | None = None,
                           family="linear"):
    """Same seeds, both expansion orders; ``source`` is half_l1, clusters or a dataset."""
    params = params or AnchorParams()
    records = []
    for order in ("largest_gain_first", "random"):
        p = replace(params, expansion_order=order)
        if source == "half_l1":
            recs, _ = run_hyperparam_sweep(D, (p.n_positives,), (p.node_budget,), n_anchors, p,
                                           seed, workers)
            for r in recs:
                r["anchor_index"] = r["run"]
        elif source == "clusters":
            recs, _, _ = run_cluster_bench(D, family, ("anchor",), n_anchors, p, seed, workers)
        elif source == "dataset":
            if ds is None:
                raise ValueError("source 'dataset' needs a dataset")
            recs, _ = run_volume_bench(ds, family, ("anchor",), n_anchors, p, seed, workers)
        else:
            raise ValueError(f"unknown ablation source {source!r}")
        for r in recs:
            r["order"] = order
            r["experiment"] = "expansion"
        records += recs
    fields = ["log10_volume", "evals"] + (["coverage"] if source == "clusters" else [])
    rows = aggregate(records, ["order"], fields)
    by = {}
    for r in records:
        by.setdefault(r["anchor_index"], {})[r["order"]] = r.get("log10_volume")
    diffs = [v["largest_gain_first"] - v["random"] for v in by.values()
             if v.get("largest_gain_first") is not None and v.get("random") is not None]
    for row in rows:
        row["paired_mean_difference"] = float(np.mean(diffs)) if diffs else None
    return records, rows
