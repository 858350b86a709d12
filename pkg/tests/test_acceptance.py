"""Acceptance checks, one test per criterion.

Each test prints a single ``CRITERION n: PASS|FAIL ...`` line as soon as it
finishes and the lines are repeated in the terminal summary.  The
experiment-scale checks (robustness, trends, speedup) take hours on one core.
"""
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from oracles import bh_one_step, islands_reference, ks_brute
from test_active import FAST, _check_invariants
from test_boosting import check_tree_against_brute

from abmsurrogate.active import (
    ENTROPY_FALLBACK,
    LoopConfig,
    NoPositiveSeedError,
    binary_entropy,
    run_calibration,
    select_batch,
)
from abmsurrogate.brock_hommes import BHParams, bh_simulate
from abmsurrogate.cli import main
from abmsurrogate.criteria import avg_growth_rate, ks_pvalue, ks_statistic, subbotin_fit
from abmsurrogate.harness import ExperimentPlan, run_robustness, run_sweep, timing_ratio
from abmsurrogate.islands import IslandParams, islands_simulate
from abmsurrogate.labelers import SyntheticLabeler, default_jobs, make_labeler
from abmsurrogate.sampling import bh_space, draw_pool, islands_space
from abmsurrogate.surrogate import Hyperparams, fit_boosted

ROOT = Path(__file__).resolve().parents[1]
JOBS = default_jobs()
VERDICTS = {}


def verdict(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[n] = line
    sys.__stdout__.write("\n" + line + "\n")
    sys.__stdout__.flush()
    return ok


# ---- 1: oracle equivalences ---------------------------------------------

def _ks_pairs():
    rng = np.random.default_rng(2024)
    for k in range(500):
        n, m = int(rng.integers(1, 120)), int(rng.integers(1, 120))
        if k % 3 == 0:
            # coarse grid, lots of ties within and across samples
            yield rng.integers(0, 15, n).astype(float), rng.integers(0, 15, m).astype(float)
        else:
            yield rng.normal(size=n), rng.standard_t(3, size=m) + rng.normal(0, 0.3)


def _split_datasets():
    rng = np.random.default_rng(77)
    for k in range(100):
        n, d = int(rng.integers(2, 201)), int(rng.integers(1, 7))
        X = rng.integers(0, 20, size=(n, d)).astype(float) if k % 2 else rng.random((n, d))
        # dyadic statistics make every partial sum exact, so gains must agree bit for bit
        g = rng.integers(-64, 65, n) / 8.0
        h = rng.integers(1, 33, n) / 16.0
        yield X, g, h, int(rng.integers(1, 5)), float(rng.integers(0, 4)), float(rng.integers(0, 3))


def _bh_steps_agree(p, seed):
    s = bh_simulate(p, seed=seed)
    shocks = np.random.default_rng(seed).normal(0.0, p.noise, size=p.horizon) if p.noise > 0 else np.zeros(p.horizon)
    x_prev, u1, u2 = 0.1, 0.0, 0.0
    worst = 0.0
    for t in range(int(np.sum(np.isfinite(s.x)))):
        x, n1, nu1, nu2 = bh_one_step(x_prev, u1, u2, t, p, shocks[t])
        for got, want in ((s.x[t], x), (s.n1[t], n1), (s.u1[t], nu1), (s.u2[t], nu2)):
            worst = max(worst, abs(got - want) / max(1.0, abs(want)))
        x_prev, u1, u2 = s.x[t], s.u1[t], s.u2[t]
    return worst


def test_criterion_1_oracle_equivalences():
    t0 = time.perf_counter()
    ks_worst = max(abs(ks_statistic(a, b) - ks_brute(a, b)) for a, b in _ks_pairs())

    nodes, split_ok = 0, True
    for X, g, h, depth, mcw, lam in _split_datasets():
        try:
            nodes += check_tree_against_brute(X, g, h, depth, mcw, lam, exact=True)
        except AssertionError:
            split_ok = False

    space = bh_space()
    bh_worst = 0.0
    for k, v in enumerate(draw_pool(space, 20, "uniform", 31)):
        values = space.as_dict(v)
        values["noise"] = 0.5 if k % 2 else 0.0
        bh_worst = max(bh_worst, _bh_steps_agree(BHParams.from_mapping(values), seed=k))

    ispace = islands_space()
    isl_worst = 0.0
    for k, v in enumerate(draw_pool(ispace, 20, "uniform", 32)):
        p = IslandParams.from_mapping({**ispace.as_dict(v), "horizon": 300})
        ref = islands_reference(p, k)
        s = islands_simulate(p, seed=k)
        gdp = np.array(ref[0])
        isl_worst = max(isl_worst, float(np.max(np.abs(s.gdp - gdp) / np.maximum(1.0, np.abs(gdp)))))
        counts = (s.n_miners, s.n_explorers, s.n_imitators, s.n_islands)
        if any(list(c) != r for c, r in zip(counts, ref[1:])):
            isl_worst = math.inf
    elapsed = time.perf_counter() - t0
    ok = ks_worst <= 1e-15 and split_ok and bh_worst <= 1e-12 and isl_worst <= 1e-12
    verdict(1, ok, f"ks max diff {ks_worst:.1e}; {nodes} split nodes identical={split_ok}; "
                   f"bh max step diff {bh_worst:.1e}; islands {isl_worst:.1e}; {elapsed:.0f}s")
    assert ok


# ---- 2: analytic fixed points ----------------------------------------------

def test_criterion_2_fixed_points():
    base = dict(beta=2.0, b1=0.0, b2=0.0, g1=0.0, g2=0.0, cost=0.5, omega=0.5, sigma=0.5, nu=10.0, r_gross=1.05)
    fund = bh_simulate(BHParams(**base), x0=0.0)
    fund_ok = bool(np.all(fund.x == 0.0))
    closed = 0.0
    for g in (0.5, 1.0, -0.95, 1.04):
        R = 1.05
        s = bh_simulate(BHParams(**{**base, "g1": g, "g2": g, "r_gross": R}), x0=0.1)
        expected = (g / R) ** np.arange(1, 501) * 0.1
        closed = max(closed, float(np.max(np.abs(s.x - expected) / np.abs(expected))))
    isl_ok = True
    for seed, alpha in enumerate((0.9, 1.3, 1.8)):
        s = islands_simulate(IslandParams(rho=1.0, alpha=alpha, phi=0.5, pi=0.3, epsilon=0.0), seed=seed)
        isl_ok &= bool(np.all(s.gdp == s.gdp[0])) and avg_growth_rate(s.gdp) == 0.0
    ok = fund_ok and closed <= 1e-10 and isl_ok
    verdict(2, ok, f"fundamentalist x==0: {fund_ok}; closed form max rel err {closed:.1e}; "
                   f"islands eps=0 constant/AGR=0: {isl_ok}")
    assert ok


# ---- 3: statistical estimators -----------------------------------------------

def permutation_pvalue(a, b, resamples, rng):
    """Share of label permutations whose KS distance reaches the observed one."""
    n, m = len(a), len(b)
    z = np.concatenate([a, b])
    order = np.argsort(z, kind="stable")
    last = np.r_[np.diff(z[order]) != 0, True]  # only compare ECDFs after a run of ties
    observed = ks_statistic(a, b)
    labels = np.r_[np.ones(n, bool), np.zeros(m, bool)]
    hits = 0
    for start in range(0, resamples, 500):
        k = min(500, resamples - start)
        perm = np.array([rng.permutation(labels) for _ in range(k)])[:, order]
        steps = np.cumsum(np.where(perm, 1.0 / n, -1.0 / m), axis=1)[:, last]
        hits += int(np.sum(np.abs(steps).max(axis=1) >= observed - 1e-12))
    return hits / resamples


def _ks_cases(n, m, count, rng):
    out = []
    while len(out) < count:
        a = rng.normal(size=n)
        b = rng.normal(rng.uniform(0.0, 0.15), rng.uniform(0.9, 1.1), size=m)
        p = ks_pvalue(ks_statistic(a, b), n, m)
        if 0.01 <= p <= 0.99:
            out.append((a, b, p))
    return out


def test_criterion_3_estimators():
    rng = np.random.default_rng(3)
    b_lap = subbotin_fit(rng.laplace(0.0, 1.0, 100_000)).b
    b_gau = subbotin_fit(rng.normal(0.0, 1.0, 100_000)).b
    diffs = [p - permutation_pvalue(a, b, 10_000, rng) for a, b, p in _ks_cases(500, 500, 20, rng)]
    worst = float(np.max(np.abs(diffs)))
    # coprime sample sizes, as in model-vs-reference comparisons; reported, not graded
    uneven = [p - permutation_pvalue(a, b, 10_000, rng) for a, b, p in _ks_cases(499, 501, 5, rng)]
    ok = abs(b_lap - 1.0) <= 0.05 and abs(b_gau - 2.0) <= 0.1 and worst <= 0.02
    verdict(3, ok, f"laplace b={b_lap:.4f}; gaussian b={b_gau:.4f}; ks p-value vs permutation max |diff| "
                   f"{worst:.4f} (n=m=500, 20 cases); 499/501 max |diff| {np.max(np.abs(uneven)):.4f}")
    assert ok


# ---- 4: robustness ------------------------------------------------------------

@pytest.mark.slow
def test_criterion_4_robustness(tmp_path):
    t0 = time.perf_counter()
    plan = ExperimentPlan(name="robustness", model="islands", budgets=(500,), repetitions=5, n_seed=35,
                          pool_size=100_000, mc_size=10, families=("boosted", "logit"), platt=True)
    med = run_robustness(plan, tmp_path, jobs=JOBS)
    raw, platt, logit = med["boosted_raw"], med["boosted_platt"], med["logit"]
    ok = (None not in (raw, platt, logit) and platt >= 0.90 and raw >= 0.85 and logit >= 0.80
          and platt >= raw - 0.02)
    verdict(4, ok, f"median precision platt={platt} raw={raw} logit={logit} "
                   f"({time.perf_counter() - t0:.0f}s)")
    assert ok


# ---- 5: trends ------------------------------------------------------------------

def _medians(summary, metric):
    return [summary[b][metric]["median"] for b in sorted(summary)]


def _non_decreasing(values):
    return all(not math.isnan(v) for v in values) and all(b >= a for a, b in zip(values, values[1:]))


@pytest.mark.slow
def test_criterion_5_trends(tmp_path):
    t0 = time.perf_counter()
    budgets = (250, 500, 1000)
    bh_bin = run_sweep(ExperimentPlan(name="bh_binary", model="bh", kind="binary", budgets=budgets,
                                      repetitions=10, oos_size=2000), tmp_path / "bhb", jobs=JOBS)
    f1, tpr = _medians(bh_bin, "f1"), _medians(bh_bin, "tpr")
    bh_ok = _non_decreasing(f1) and _non_decreasing(tpr) and f1[-1] >= 0.6

    bh_real = run_sweep(ExperimentPlan(name="bh_real", model="bh", kind="real", budgets=(1000,),
                                       repetitions=10, oos_size=2000), tmp_path / "bhr", jobs=JOBS)
    bh_real_tpr = bh_real[1000]["tpr"]["median"]
    bh_real_ok = bh_real_tpr >= 0.6

    isl = run_sweep(ExperimentPlan(name="islands_real", model="islands", kind="real", budgets=budgets,
                                   repetitions=10, oos_size=1000), tmp_path / "isl", jobs=JOBS)
    isl_tpr = _medians(isl, "tpr")
    isl_ok = _non_decreasing(isl_tpr) and isl_tpr[-1] >= 0.6

    fmt = lambda v: "/".join(f"{x:.3f}" for x in v)  # noqa: E731
    ok = bh_ok and bh_real_ok and isl_ok
    verdict(5, ok, f"bh binary median f1 {fmt(f1)} tpr {fmt(tpr)} [{'ok' if bh_ok else 'fail'}]; "
                   f"bh real tpr@1000 {bh_real_tpr:.3f} [{'ok' if bh_real_ok else 'fail'}]; "
                   f"islands real tpr {fmt(isl_tpr)} [{'ok' if isl_ok else 'fail'}] "
                   f"({time.perf_counter() - t0:.0f}s)")
    assert ok


# ---- 6: speedup -------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_speedup():
    # the largest ensemble the tuning grid can produce, so the ratio is a floor
    hp = Hyperparams(n_trees=500, max_depth=8, min_child_weight=1.0, shrinkage=0.05)
    ratios = {}
    for model in ("bh", "islands"):
        lab = make_labeler(model)
        train = draw_pool(lab.space, 400, "uniform", 5)
        y = lab.label_many(train, JOBS)
        if y.min() == y.max():
            y[0] = 1.0 - y[0]
        sur = fit_boosted(train, y, hp, "logistic")
        pool = draw_pool(lab.space, 10_000, "uniform", 6)
        ratios[model] = timing_ratio(lab, pool, sur)
    bh, isl = ratios["bh"][2], ratios["islands"][2]
    ok = bh >= 100 and isl > bh
    verdict(6, ok, f"bh ratio {bh:.0f}x (abm {ratios['bh'][0]:.1f}s, surrogate {ratios['bh'][1]:.3f}s); "
                   f"islands ratio {isl:.0f}x (abm {ratios['islands'][0]:.1f}s)")
    assert ok


# ---- 7: determinism ---------------------------------------------------------------

def _snapshot(directory):
    """Every CSV/JSON file under ``directory`` with timing content removed."""
    out = {}
    for path in sorted(Path(directory).rglob("*")):
        if path.suffix not in (".csv", ".json") or path.name == "timing.csv":
            continue
        rel = str(path.relative_to(directory))
        if path.name == "oos_meta.json":
            doc = json.loads(path.read_text())
            doc.pop("abm_seconds", None)
            out[rel] = json.dumps(doc, sort_keys=True).encode()
        elif path.name.endswith("label.json"):
            doc = json.loads(path.read_text())
            doc.pop("series", None)  # absolute path of the run directory
            out[rel] = json.dumps(doc, sort_keys=True).encode()
        else:
            out[rel] = path.read_bytes()
    return out


def _write_configs(d):
    d.mkdir(parents=True, exist_ok=True)
    (d / "bh.toml").write_text(
        '[model]\nid = "bh"\n[criterion]\nkind = "binary"\n'
        '[loop]\nbudget = 70\nn_seed = 35\npool_size = 3000\nsampler_seed = 4\nsurrogate_seed = 4\n'
        '[surrogate]\nhpo_trials = 4\nhpo_trials_late = 2\n'
        '[experiment]\nname = "bh_sweep"\nbudgets = [50, 70]\nrepetitions = 2\noos_size = 300\n'
    )
    (d / "islands.toml").write_text(
        '[model]\nid = "islands"\n[model.fixed]\nhorizon = 200\n[criterion]\nkind = "real"\n'
        '[loop]\nbudget = 60\nn_seed = 35\npool_size = 1000\n'
        '[surrogate]\nhpo_trials = 3\nhpo_trials_late = 2\n'
        '[experiment]\nname = "isl_sweep"\nbudgets = [60]\nrepetitions = 2\noos_size = 200\n'
    )
    (d / "robust.toml").write_text(
        '[model]\nid = "synthetic"\n[criterion]\nrate = 0.25\ndimension = 3\n'
        '[loop]\nn_seed = 20\n[surrogate]\nhpo_trials = 4\nhpo_trials_late = 2\n'
        '[experiment]\nname = "rob"\ndesign = "robustness"\nbudgets = [100]\nrepetitions = 2\npool_size = 2000\n'
    )


def _run_all(d, out, jobs):
    j = ["--jobs", str(jobs), "--output-dir", str(out)]
    codes = []
    for name in ("bh", "islands"):
        cfg = str(d / f"{name}.toml")
        codes.append(main(["--config", cfg, *j, "simulate", "--out", str(out / f"{name}_series.csv")]))
        codes.append(main(["--config", cfg, *j, "--output-dir", str(out / name), "calibrate"]))
        model = str(out / name / "run" / "model.json")
        codes.append(main(["--config", cfg, *j, "explore", "--model", model, "--draw", "2000",
                           "--out", str(out / f"{name}_explore.csv")]))
        codes.append(main([*j, "importance", "--model", model, "--out", str(out / f"{name}_importance.csv")]))
        codes.append(main(["--config", cfg, *j, "experiment"]))
    codes.append(main(["--config", str(d / "robust.toml"), *j, "experiment"]))
    (out / "label.json").rename(out / "last_label.json")
    return codes


@pytest.mark.slow
def test_criterion_7_determinism(tmp_path):
    t0 = time.perf_counter()
    _write_configs(tmp_path / "cfg")
    runs = {}
    for tag, jobs in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / tag
        out.mkdir()
        codes = _run_all(tmp_path / "cfg", out, jobs)
        runs[tag] = (codes, _snapshot(out))
    codes_ok = all(c == 0 for codes, _ in runs.values() for c in codes)
    a = runs["a"][1]
    same_rerun = a == runs["b"][1]
    same_jobs = a == runs["c"][1]
    mismatched = sorted(k for k in set(a) | set(runs["c"][1]) if a.get(k) != runs["c"][1].get(k))
    ok = codes_ok and same_rerun and same_jobs and len(a) >= 20
    verdict(7, ok, f"{len(a)} artifacts; rerun identical: {same_rerun}; jobs 1 vs 8 identical: {same_jobs}"
                   f"{'' if not mismatched else ' differing: ' + ','.join(mismatched[:5])} "
                   f"({time.perf_counter() - t0:.0f}s)")
    assert ok


# ---- 8: loop invariants --------------------------------------------------------------

FAILURES_8 = []


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(budget=st.integers(20, 80), n_seed=st.integers(3, 20), rate=st.sampled_from([0.05, 0.1, 0.2]),
       seed=st.integers(0, 10_000), refresh=st.booleans(), batch=st.one_of(st.none(), st.integers(1, 9)),
       kind=st.sampled_from(["binary", "real"]))
def _loop_property(budget, n_seed, rate, seed, refresh, batch, kind):
    lab = SyntheticLabeler(kind_=kind, rate=rate, dimension=3)
    cfg = LoopConfig(budget=budget, n_seed=n_seed, pool_size=300, batch_size=batch, refresh_pool=refresh,
                     sampler_seed=seed, surrogate_seed=seed, **FAST)
    try:
        run = run_calibration(lab, cfg)
    except NoPositiveSeedError:
        return
    _check_invariants(run, cfg)


@settings(max_examples=200, deadline=None)
@given(p=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60), size=st.integers(1, 5))
def _entropy_property(p, size):
    probs = np.array(p)
    idx, mode = select_batch(np.zeros(len(probs), bool), probs, size, round_seed=0)
    h = binary_entropy(probs)
    expected = np.lexsort((np.arange(len(probs)), -h))[: min(size, len(probs))]
    assert mode == ENTROPY_FALLBACK
    assert list(idx) == sorted(expected)
    assert h[idx].min() >= np.delete(h, idx).max(initial=-1.0)


def test_criterion_8_loop_invariants():
    checks = {}
    for name, fn in (("loop accounting/duplicates/monotonicity", _loop_property), ("entropy argmax", _entropy_property)):
        try:
            fn()
            checks[name] = True
        except Exception as exc:  # hypothesis re-raises the falsifying example
            checks[name] = False
            FAILURES_8.append(repr(exc))
    # constructed case: the unique p = 0.5 point must be chosen
    probs = np.array([0.01, 0.2, 0.5, 0.97, 0.6])
    idx, _ = select_batch(np.zeros(5, bool), probs, 1, round_seed=3)
    checks["constructed argmax"] = list(idx) == [2]
    ok = all(checks.values())
    verdict(8, ok, "; ".join(f"{k}: {'ok' if v else 'fail'}" for k, v in checks.items()))
    assert ok, FAILURES_8
