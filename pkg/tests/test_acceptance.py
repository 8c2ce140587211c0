"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (collected again in the terminal summary).
Runs shared between criteria are computed once per session.
"""
import itertools
import math
from functools import lru_cache

import numpy as np
import pytest

from anchorbox.anchor import AnchorParams, explain
from anchorbox.data import generate_signal_dataset
from anchorbox.experiments import METHODS, run_cluster_bench, run_honesty
from anchorbox.geometry import Box
from anchorbox.maxbox import search_max_box
from anchorbox.oracle import AdversarialFamily, HalfL1Ball, IntervalOracle
from anchorbox.seeding import derive_rng

from conftest import brute_force_max_box

RHO, DELTA = 0.99, 0.01
RUNS = 200
PURITY_DIMS = (2, 6, 10)
AUDIT = 100_000

pytestmark = pytest.mark.slow


# -- shared runs ----------------------------------------------------------------------

def half_l1_run(D, seed, order="largest_gain_first"):
    params = AnchorParams(rho=RHO, delta=DELTA, seed=seed, audit_samples=AUDIT,
                          expansion_order=order)
    space = Box(np.full(D, -5.0), np.full(D, 5.0))
    rep = explain(np.zeros(D), space, HalfL1Ball(D), params)
    return {"purity": rep.purity_audit["fraction"], "log10_volume": rep.log10_volume,
            "evals": rep.evals, "delta_spent": rep.delta_spent}


def interval_run(seed):
    oracle = IntervalOracle(half_width=0.5)
    params = AnchorParams(rho=RHO, delta=DELTA, seed=seed, audit_samples=0)
    rep = explain(np.zeros(1), Box([-5.0], [5.0]), oracle, params)
    return {"purity": oracle.purity(rep.box.lower, rep.box.upper),
            "log10_volume": rep.log10_volume, "evals": rep.evals, "delta_spent": rep.delta_spent}


@lru_cache(maxsize=None)
def purity_runs(source, order="largest_gain_first"):
    if source == "interval":
        return [interval_run(s) for s in range(RUNS)]
    return [half_l1_run(source, s, order) for s in range(RUNS)]


@lru_cache(maxsize=None)
def cluster_runs(D):
    records, rows, _ = run_cluster_bench(D, "linear", METHODS, 10,
                                         AnchorParams(rho=RHO, delta=DELTA, audit_samples=10_000),
                                         seed=0)
    return records, rows


@lru_cache(maxsize=None)
def honesty_runs():
    ds = generate_signal_dataset(500, 4, 1, derive_rng(0, "signal"), noise=0.3)
    return run_honesty(ds, "auto", 10, AnchorParams(rho=RHO, delta=DELTA, audit_samples=10_000),
                       seed=0)


def purity_verdict(runs):
    p = np.array([r["purity"] for r in runs])
    low = float(np.mean(p < RHO))
    med = float(np.median(p))
    return low <= 0.03 and med >= 0.999, low, med


# -- criteria -------------------------------------------------------------------------

def test_criterion_1_max_box_matches_brute_force(criterion):
    rng = np.random.default_rng(2024)
    mismatches = 0
    for i in range(500):
        D = int(rng.integers(1, 4))
        grid = i % 2 == 0  # half the instances on a coarse grid to force ties
        draw = (lambda n: rng.integers(0, 5, size=(n, D)) / 4.0) if grid else \
            (lambda n: rng.uniform(0, 1, size=(n, D)))
        anchor = draw(1)[0]
        pos = draw(int(rng.integers(0, 6)))
        neg = draw(int(rng.integers(0, 4)))
        neg = neg[~np.all(neg == anchor, axis=1)]
        lo, hi = np.zeros(D), np.ones(D)
        got = search_max_box(pos, neg, anchor, Box(lo, hi)).positives
        if got != brute_force_max_box(pos, neg, anchor, lo, hi):
            mismatches += 1
    ok = criterion(1, mismatches == 0, f"{mismatches} mismatches over 500 instances")
    assert ok


@pytest.mark.parametrize("source", ["interval"] + list(PURITY_DIMS))
def test_criterion_2_statistical_guarantee(source, criterion):
    ok, low, med = purity_verdict(purity_runs(source))
    name = "1-D interval" if source == "interval" else f"HalfL1Ball D={source}"
    criterion(2, ok, f"{name}: {RUNS} runs, fraction below rho {low:.3f} (<= 0.03), "
                     f"median purity {med:.5f} (>= 0.999)")
    assert ok


def test_criterion_3_half_l1_volume_d10(criterion):
    runs = purity_runs(10)[:10]
    vol = float(np.mean([r["log10_volume"] for r in runs]))
    evals = [r["evals"] for r in runs]
    ok = 4.8 <= vol <= 6.2 and all(30_000 <= e <= 400_000 for e in evals)
    criterion(3, ok, f"mean log10 volume {vol:.3f} in [4.8, 6.2]; "
                     f"evals {min(evals)}..{max(evals)} in [30000, 400000]")
    assert ok


@pytest.mark.parametrize("D", [2, 10])
def test_criterion_4_method_ordering(D, criterion):
    _, rows = cluster_runs(D)
    cov = {r["method"]: r["coverage_mean"] for r in rows}
    failed = {r["method"]: r["failed"] for r in rows}
    ok = cov["anchor"] > cov["greedy"] > cov["radial"]
    detail = (f"D={D}: coverage anchor {cov['anchor']:.3f} > greedy {cov['greedy']:.3f} > "
              f"radial {cov['radial']:.3f} (failed runs {failed})")
    if D == 10:
        gap = cov["anchor"] - cov["greedy"]
        ok = ok and gap > 0.10
        detail += f"; anchor-greedy gap {100 * gap:.1f} pp (> 10)"
    criterion(4, ok, detail)
    assert ok


def test_criterion_5_honesty_separation(criterion):
    _, rows = honesty_runs()
    row = rows[0]
    wh, wd = row["median_width_honest"], row["median_width_dishonest"]
    ratio = wh / wd if wd else math.inf
    ok = row["anchors"] == 10 and ratio >= 3
    criterion(5, ok, f"k={row['k']}, {row['anchors']} anchors: median width honest {wh:.3f} vs "
                     f"dishonest {wd:.3f}, ratio {ratio:.1f} (>= 3)")
    assert ok


@pytest.mark.parametrize("D", [4, 6])
def test_criterion_6_adversarial_lower_bound(D, criterion):
    fam = AdversarialFamily(D, 0.5)
    rng = np.random.default_rng(D)
    # half uniform, half on the threshold lattice {0, r, 1} where members are hardest to tell apart
    X = np.concatenate([rng.uniform(0, 1, (500, D)), rng.choice([0.0, 0.5, 1.0], (500, D))])
    table = fam.all_members(X)
    agree = int(np.sum(np.all(table[1:] == table[0], axis=1)))
    separated = np.sum(table[1:] != table[0], axis=0)
    ok = agree >= fam.K - len(X) and separated.max() <= 1
    criterion(6, ok, f"D={D}: {agree} of K={fam.K} members agree with e_0 on 1000 points "
                     f"(>= K - 1000); each point separates at most {separated.max()} member")
    assert ok


def grid_max_box_volume(fam, k, cells=10):
    """Largest pure box [0, u] with u on grid vertices, purity judged at cell midpoints."""
    D = fam.dim
    mids = (np.arange(cells) + 0.5) / cells
    pts = np.array(list(itertools.product(mids, repeat=D)))
    bad = (~fam.member(k, pts)).reshape((cells,) * D).astype(np.int64)
    for ax in range(D):
        bad = np.cumsum(bad, axis=ax)  # bad[i1..iD] = impure cells in [0, (i+1)/cells]
    best = 0.0
    for idx in itertools.product(range(cells), repeat=D):
        if bad[idx] == 0:
            best = max(best, float(np.prod((np.array(idx) + 1) / cells)))
    return best


def test_criterion_6_grid_volume_ratio(criterion):
    fam = AdversarialFamily(4, 0.5)
    v0 = grid_max_box_volume(fam, 0)
    ratios = [v0 / grid_max_box_volume(fam, k) for k in range(1, fam.K + 1)]
    worst = max(abs(q - fam.ratio) / fam.ratio for q in ratios)
    ok = worst <= 0.02
    criterion(6, ok, f"D=4 grid 10^4: volume ratios e_0/e_k {min(ratios):.4f}..{max(ratios):.4f}, "
                     f"max relative error {worst:.4f} (<= 0.02)")
    assert ok


def test_criterion_7_budget_soundness(criterion):
    spent = []
    for source in ["interval"] + list(PURITY_DIMS):
        spent += [r["delta_spent"] for r in purity_runs(source)]
    for D in (2, 10):
        spent += [r["delta_spent"] for r in cluster_runs(D)[0] if "error" not in r]
    for r in honesty_runs()[0]:
        spent += [r[f"{n}_delta_spent"] for n in ("honest", "dishonest") if f"{n}_delta_spent" in r]
    violations = sum(1 for s in spent if s > DELTA)
    ok = violations == 0 and len(spent) > 0
    criterion(7, ok, f"{violations} violations over {len(spent)} runs; "
                     f"max spent {max(spent):.6f} (<= {DELTA})")
    assert ok


@pytest.mark.parametrize("D", [2, 6, 10])
def test_criterion_8_expansion_ablation(D, criterion):
    n = RUNS if D != 10 else 10
    first = purity_runs(D)[:n]
    rand = purity_runs(D, "random")[:n] if D != 10 else [half_l1_run(10, s, "random")
                                                          for s in range(n)]
    mf = float(np.mean([r["log10_volume"] for r in first]))
    mr = float(np.mean([r["log10_volume"] for r in rand]))
    ok = mf >= mr - 0.1
    detail = f"D={D}, {n} paired runs: largest-first {mf:.3f} vs random {mr:.3f} (>= random - 0.1)"
    if D != 10:
        okf, lowf, medf = purity_verdict(first)
        okr, lowr, medr = purity_verdict(rand)
        ok = ok and okf and okr
        detail += (f"; purity largest-first {lowf:.3f}/{medf:.5f}, random {lowr:.3f}/{medr:.5f} "
                   f"(below-rho fraction / median)")
    criterion(8, ok, detail)
    assert ok
