"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import os
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from conftest import make_dataset  # noqa: E402

from modechoice.data import FEATURE_NAMES, MODE_KEYS, N_MODES, apply_minmax, fit_minmax  # noqa: E402
from modechoice.econ import (  # noqa: E402
    PRESETS,
    Scenario,
    SegmentSpec,
    mnl_elasticities,
    segment_vot,
    self_elasticity,
    value_of_time,
)
from modechoice.evaluation import (  # noqa: E402
    classification_report,
    confusion_matrix,
    modal_share_report,
    share_deviation,
    train_svm,
)
from modechoice.interpret import (  # noqa: E402
    feature_importance,
    scenario_average_change,
    scenario_average_change_ice,
)
from modechoice.mnl import (  # noqa: E402
    MnlModel,
    MnlSpec,
    default_spec,
    default_true_params,
    estimate_mnl,
    log_likelihood_and_gradient,
    predict_mnl,
)
from modechoice.pipeline import RunConfig, run_pipeline  # noqa: E402
from modechoice.svm import KernelSpec, dual_objective, fit_svm_binary, fit_svm_multiclass, kkt_gap  # noqa: E402
from modechoice.synthetic import SyntheticConfig, generate_synthetic  # noqa: E402
from modechoice.trees import (  # noqa: E402
    BoostHyper,
    ForestHyper,
    TreeHyper,
    ccp_prune,
    fit_decision_tree,
    fit_gradient_boost,
    fit_random_forest,
    log_loss,
)

RESULTS = {}


def record(n, ok, detail):
    line = f"AC{n:<2} {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _quiet():
    ctx = warnings.catch_warnings()
    ctx.__enter__()
    warnings.simplefilter("ignore")
    return ctx


# ------------------------------------------------------------------ 1
def test_ac1_gradient_check():
    t0 = time.perf_counter()
    spec = default_spec()
    worst = 0.0
    h = 1e-5
    for s in range(20):
        rng = np.random.default_rng(s)
        raw = make_dataset(200, seed=s)
        d = apply_minmax(fit_minmax(raw), raw)
        beta = rng.normal(0, 0.1, spec.n_free)
        g = log_likelihood_and_gradient(spec, spec.params(beta), d)[1]
        fd = np.empty_like(beta)
        for k in range(beta.size):
            e = np.zeros_like(beta)
            e[k] = h
            fd[k] = (log_likelihood_and_gradient(spec, spec.params(beta + e), d)[0]
                     - log_likelihood_and_gradient(spec, spec.params(beta - e), d)[0]) / (2 * h)
        rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-300)
        worst = max(worst, float(rel.max()))
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-6 and dt < 10,
           f"MNL gradient vs central FD (h=1e-5, 20 pairs, n=200): max rel err {worst:.2e} <= 1e-6, {dt:.1f}s < 10s")


# ------------------------------------------------------------------ 2
def test_ac2_parameter_recovery():
    t0 = time.perf_counter()
    spec = default_spec()
    truth = default_true_params(spec)
    inside = []
    ctx = _quiet()
    try:
        for s in range(20):
            d = generate_synthetic(SyntheticConfig(20_000, rng_seed=1000 + s))
            est = estimate_mnl(spec, d)
            inside.append(np.abs(est.params.values - truth.values) <= 1.959964 * est.std_errors)
    finally:
        ctx.__exit__(None, None, None)
    inside = np.array(inside)
    cover = float(inside.mean())
    dt = time.perf_counter() - t0
    record(2, cover >= 0.90 and dt < 120,
           f"parameter recovery n=20000 x 20 seeds: {cover:.1%} of {inside.size} coefficient draws inside "
           f"95% CI (per-seed min {inside.mean(axis=1).min():.1%}), {dt:.0f}s < 120s")


# ------------------------------------------------------------------ 3
def test_ac3_elasticity():
    worked = 10 * self_elasticity(0.0314, 18.426, 0.011)
    spec = default_spec()
    params = default_true_params(spec)
    d = generate_synthetic(SyntheticConfig(400, rng_seed=33))
    h = 1e-4
    worst = 0.0
    for alt in range(1, N_MODES + 1):
        res = mnl_elasticities(spec, params, d, alt, "tc")
        col = f"tc_{MODE_KEYS[alt - 1]}"
        P0 = predict_mnl(spec, params, d)[0]
        P1 = predict_mnl(spec, params, d.with_columns({col: d.column(col) * (1 + h)}))[0]
        arc = (P1 - P0) / P0 / h
        ok = np.abs(res.cross_per_obs) > 1e-6
        for j in range(N_MODES):
            if j == alt - 1:
                continue
            rel = np.abs(arc[ok, j] - res.cross_per_obs[ok]) / np.abs(res.cross_per_obs[ok])
            worst = max(worst, float(rel.max(initial=0.0)))
    record(3, abs(worked - 1.963) <= 0.001 and worst <= 0.01,
           f"10 x self_elasticity(0.0314, 18.426, 0.011) = {worked:.4f} (1.963 +/- 0.001); "
           f"cross elasticity vs FD max rel err {worst:.2e} <= 1%")


# ------------------------------------------------------------------ 4
def test_ac4_value_of_time():
    vot = value_of_time(-0.083, -0.017)
    spec = MnlSpec(terms=tuple(("asc", a) for a in range(2, 9)))
    men = spec.params(beta_tt=-0.05, beta_tc=-0.01)
    women = spec.params(beta_tt=-0.10, beta_tc=-0.01)
    cfg = SyntheticConfig(20_000, true_params=men, spec=spec, rng_seed=44, female_share=0.5,
                          segment_params={"gender": {1.0: women}})
    rows = {r.segment: r for r in segment_vot(spec, generate_synthetic(cfg), SegmentSpec("gender"))}
    err_m = abs(rows["male"].vot / 5.0 - 1)
    err_f = abs(rows["female"].vot / 10.0 - 1)
    record(4, abs(vot - 4.882) <= 0.001 and max(err_m, err_f) <= 0.15,
           f"VOT(-0.083, -0.017) = {vot:.4f} (4.882 +/- 0.001); planted segment VOT 5 / 10 recovered as "
           f"{rows['male'].vot:.3f} / {rows['female'].vot:.3f} (errors {err_m:.1%}, {err_f:.1%} <= 15%)")


# ------------------------------------------------------------------ 5
def test_ac5_iia():
    spec = default_spec()
    ctx = _quiet()
    try:
        d = generate_synthetic(SyntheticConfig(3000, rng_seed=55))
        est = estimate_mnl(spec, d)
    finally:
        ctx.__exit__(None, None, None)
    delta = 1e-6
    spread = 0.0
    P0 = predict_mnl(spec, est.params, d)[0]
    for alt in range(1, N_MODES + 1):
        for attr in ("tc", "tt"):
            col = f"{attr}_{MODE_KEYS[alt - 1]}"
            P1 = predict_mnl(spec, est.params, d.with_columns({col: d.column(col) * (1 + delta)}))[0]
            resp = np.delete((P1 - P0) / P0 / delta, alt - 1, axis=1)
            spread = max(spread, float(np.max(resp.max(axis=1) - resp.min(axis=1))))
    record(5, spread <= 1e-6,
           f"IIA: cross responses over j != i differ by at most {spread:.2e} <= 1e-6 (fitted MNL, delta=1e-6)")


# ------------------------------------------------------------------ 6
def _brute_report(t, p):
    prec, rec, f1, seen = [], [], [], []
    for c in range(1, N_MODES + 1):
        tp = int(np.sum((t == c) & (p == c)))
        fp = int(np.sum((t != c) & (p == c)))
        fn = int(np.sum((t == c) & (p != c)))
        pr = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / (tp + fn) if tp + fn else 0.0
        prec.append(pr)
        rec.append(rc)
        f1.append(2 * pr * rc / (pr + rc) if pr + rc else 0.0)
        seen.append(tp + fp + fn > 0)
    f1 = np.array(f1)
    return np.array(prec), np.array(rec), f1, f1[np.array(seen)].mean(), 100.0 * int(np.sum(t == p)) / t.size


def test_ac6_metrics():
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 300))
        t = rng.integers(1, N_MODES + 1, n)
        p = np.where(rng.random(n) < 0.4, t, rng.integers(1, N_MODES + 1, n))
        r = classification_report(confusion_matrix(t, p))
        bp, br, bf, bm, ba = _brute_report(t, p)
        same = (np.array_equal(r.precision, bp) and np.array_equal(r.recall, br)
                and np.array_equal(r.f1, bf) and r.macro_f1 == bm and r.accuracy == ba)
        mismatches += not same
    r = classification_report(confusion_matrix([1, 1, 1, 2, 2, 2], [1, 1, 2, 1, 2, 2]))
    hand = tuple(round(float(v), k) for v, k in ((r.accuracy, 2), (r.precision[0], 4), (r.recall[0], 4), (r.f1[0], 4)))
    record(6, mismatches == 0 and hand == (66.67, 0.6667, 0.6667, 0.6667),
           f"metrics equal brute force on 1000 random label vectors ({mismatches} mismatches); "
           f"TP=2,TN=2,FP=1,FN=1 -> {hand}")


# ------------------------------------------------------------------ 7
def test_ac7_tree_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    X = rng.normal(size=(500, 5))
    y = 1 + (X[:, 0] > 0) + 2 * (X[:, 1] + 0.5 * rng.normal(size=500) > 0.3)
    dt = fit_decision_tree(X, y, TreeHyper(max_depth=8))
    same0 = np.array_equal(fit_decision_tree(X, y, TreeHyper(max_depth=8, ccp_alpha=0.0)).predict(X),
                           dt.predict(X)) and np.array_equal(ccp_prune(dt.tree, 0.0).apply(X), dt.tree.apply(X))
    stump = ccp_prune(dt.tree, np.inf)
    majority = stump.n_nodes == 1 and int(np.argmax(stump.counts[0])) + 1 == int(np.bincount(y).argmax())
    rf = fit_random_forest(X, y, ForestHyper(n_trees=1, bootstrap=False, features_per_split=5, max_depth=6))
    same_rf = np.array_equal(rf.predict(X), fit_decision_tree(X, y, TreeHyper(max_depth=6)).predict(X))
    gb = fit_gradient_boost(X, y, BoostHyper(n_rounds=50, eta=0.1, max_depth=3))
    losses = np.array([log_loss(P, y) for P in gb.staged_predict_proba(X)])
    monotone = bool(np.all(np.diff(losses) <= 0))
    secs = time.perf_counter() - t0
    record(7, same0 and majority and same_rf and monotone and secs < 30,
           f"ccp(0) preserves predictions={same0}; ccp(inf) majority stump={majority}; RF(1, no bootstrap, "
           f"all features) == DT={same_rf}; GBT log-loss non-increasing over 50 rounds={monotone} "
           f"({losses[0]:.3f} -> {losses[-1]:.3f}); {secs:.1f}s < 30s")


# ------------------------------------------------------------------ 8
def _grid_dual(X, y, C, steps=21, rounds=4):
    Q = (y[:, None] * y[None, :]) * (X @ X.T)
    pos, neg = np.flatnonzero(y > 0), np.flatnonzero(y < 0)
    lo, hi = np.zeros(5), np.full(5, C)
    best, best_a = -np.inf, None
    for _ in range(rounds):
        axes = [np.linspace(a, b, steps) for a, b in zip(lo, hi)]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 5)
        last = G[:, :3].sum(axis=1) - G[:, 3:].sum(axis=1)
        ok = (last >= 0) & (last <= C)
        A = np.zeros((int(ok.sum()), 6))
        A[:, pos] = G[ok, :3]
        A[:, neg[:2]] = G[ok, 3:]
        A[:, neg[2]] = last[ok]
        obj = A.sum(axis=1) - 0.5 * np.einsum("ni,ij,nj->n", A, Q, A)
        i = int(np.argmax(obj))
        if obj[i] > best:
            best, best_a = float(obj[i]), A[i]
        width = 2 * (hi - lo) / (steps - 1)
        centre = np.concatenate([best_a[pos], best_a[neg[:2]]])
        lo, hi = np.clip(centre - width, 0, C), np.clip(centre + width, 0, C)
    return best


def test_ac8_svm_dual():
    X = np.array([[0.0, 0.0], [1.0, 0.5], [0.4, 1.0], [1.2, 1.1], [0.1, 1.6], [1.5, 0.2]])
    y = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
    m = fit_svm_binary(X, y, C=1.0, kernel=KernelSpec("linear"), tol=1e-6)
    smo = dual_objective(m.alpha, y, X @ X.T)
    grid = _grid_dual(X, y, 1.0)
    fits, worst = 0, 0.0
    rng = np.random.default_rng(8)
    for s in range(6):
        Xb = rng.normal(size=(120, 3))
        yb = np.where(Xb[:, 0] + 0.5 * rng.normal(size=120) > 0, 1.0, -1.0)
        for C in (0.1, 1.0, 10.0):
            for kern in (KernelSpec("linear"), KernelSpec("rbf")):
                b = fit_svm_binary(Xb, yb, C=C, kernel=kern)
                if b.converged:
                    fits += 1
                    worst = max(worst, kkt_gap(b.alpha, yb, b.kernel.matrix(Xb, Xb), C))
    survey = generate_synthetic(SyntheticConfig(600, rng_seed=88))
    Xs = apply_minmax(fit_minmax(survey), survey).feature_matrix()
    mc = fit_svm_multiclass(Xs, survey.chosen, C=10.0)
    for b in mc.binaries:
        if not b.degenerate and b.converged:
            fits += 1
            worst = max(worst, b.kkt_residual)
    record(8, abs(smo - grid) <= 1e-3 and smo >= grid - 1e-9 and worst <= 1e-3,
           f"6-point dual: SMO {smo:.6f} vs exhaustive grid {grid:.6f} (|diff| {abs(smo - grid):.1e} <= 1e-3); "
           f"max KKT residual over {fits} converged fits {worst:.2e} <= 1e-3")


# ------------------------------------------------------------------ 9
def test_ac9_ice_scenarios():
    d = generate_synthetic(SyntheticConfig(800, rng_seed=99))
    Xs_scaler = fit_minmax(d)
    from modechoice.models import ScaledModel
    models = {
        "mnl": MnlModel(default_spec(), default_true_params(default_spec())),
        "rf": ScaledModel(fit_random_forest(apply_minmax(Xs_scaler, d).feature_matrix(), d.chosen,
                                            ForestHyper(n_trees=20, max_depth=6)), Xs_scaler, FEATURE_NAMES),
        "gbt": ScaledModel(fit_gradient_boost(apply_minmax(Xs_scaler, d).feature_matrix(), d.chosen,
                                              BoostHyper(n_rounds=10)), Xs_scaler, FEATURE_NAMES),
    }
    path_gap, mass, null_max = 0.0, 0.0, 0.0
    for m in models.values():
        null_max = max(null_max, float(np.abs(scenario_average_change(m, d, Scenario.null()).delta_pp).max()))
        for name in sorted(PRESETS):
            a = scenario_average_change(m, d, PRESETS[name])
            b = scenario_average_change_ice(m, d, PRESETS[name])
            path_gap = max(path_gap, float(np.abs(a.delta_pp - b.delta_pp).max()))
            mass = max(mass, abs(float(a.delta_pp.sum())))
    record(9, path_gap <= 1e-12 and null_max == 0.0 and mass <= 1e-9,
           f"ICE path vs direct difference max gap {path_gap:.1e} <= 1e-12; null scenario max |delta| "
           f"{null_max}; class deltas sum within {mass:.1e} <= 1e-9 (5 presets x mnl/rf/gbt)")


# ------------------------------------------------------------------ 10
def test_ac10_importance():
    names = tuple(f"x{j}" for j in range(8))
    wins = {"gain": 0, "mean-decrease-impurity": 0, "weighted-impurity": 0, "linear-weight": 0, "permutation": 0}
    for seed in range(20):
        rng = np.random.default_rng(2000 + seed)
        X = rng.normal(size=(300, 8))
        y = np.where(X[:, 2] + 0.2 * rng.normal(size=300) > 0, 2, 1)
        fitted = {
            "gain": fit_gradient_boost(X, y, BoostHyper(n_rounds=15, max_depth=2, seed=seed)),
            "mean-decrease-impurity": fit_random_forest(X, y, ForestHyper(n_trees=25, max_depth=5, seed=seed)),
            "weighted-impurity": fit_decision_tree(X, y, TreeHyper(max_depth=5)),
            "linear-weight": train_svm(X, y, kernel="linear"),
        }
        for method, model in fitted.items():
            wins[method] += feature_importance(model, method, feature_names=names).top() == "x2"
        perm = feature_importance(fitted["mean-decrease-impurity"], "permutation", X, y,
                                  feature_names=names, repeats=5, seed=seed)
        wins["permutation"] += perm.top() == "x2"
    record(10, min(wins.values()) >= 18,
           "planted feature ranked first in " + ", ".join(f"{k} {v}/20" for k, v in wins.items()) + " (>= 18)")


# ------------------------------------------------------------------ 11
def test_ac11_share_deviation():
    direct = share_deviation(1.65, 1.75)
    n = 400
    actual = np.full(n, 2)
    actual[:7] = 1                                # 7 / 400 = 1.75 % metro
    P = np.zeros((n, N_MODES))
    P[:, 0] = 0.0165
    P[:, 1] = 1 - 0.0165
    rep = modal_share_report({"rf": P}, actual)
    via_report = rep.deviations["rf"][0]
    ok = f"{direct:.3f}" == "0.050" and abs(direct - 0.05) < 1e-15 and abs(via_report - 0.05) < 1e-12
    record(11, ok, f"|1.75 - 1.65| / 2 = {direct:.3f} (direct), {via_report:.3f} (modal share report)")


# ------------------------------------------------------------------ 12
def _csv_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(Path(root).rglob("*.csv"))}


@pytest.mark.slow
def test_ac12_determinism():
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        for out in (a, b):
            run_pipeline(RunConfig(seed=2024), out)
        A, B = _csv_bytes(a), _csv_bytes(b)
        diff = sorted(k for k in A.keys() | B.keys() if A.get(k) != B.get(k))
        non_csv = sorted(p.name for p in Path(a).rglob("*") if p.is_file() and p.suffix != ".csv")
    secs = time.perf_counter() - t0
    record(12, not diff and len(A) > 0 and secs < 600,
           f"two full pipeline runs (5000 rows, reduced grids): {len(A)} CSV files, {len(diff)} differ; "
           f"{secs:.0f}s < 600s (non-CSV files: {', '.join(non_csv)})")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
