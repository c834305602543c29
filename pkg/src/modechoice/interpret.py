"""Feature importance, individual conditional expectation and scenario deltas.

Models are anything with ``predict_proba(X) -> (n, 8)``.  Inputs given as a
:class:`~modechoice.data.Dataset` are converted with ``feature_matrix()``,
so features can be addressed by column name.
"""
from dataclasses import dataclass

import numpy as np

from modechoice._util import derive_seed, parallel_map, write_csv_rows
from modechoice.data import FEATURE_NAMES, MODE_KEYS, N_MODES, Dataset
from modechoice.econ import apply_policy_scenario, scenario_columns
from modechoice.evaluation import macro_f1
from modechoice.exceptions import (
    ConstantFeatureError,
    GridMismatchError,
    IncompatibleMethodError,
    MissingEvalDataError,
)
from modechoice.models import unwrap
from modechoice.svm import linear_weight_importance

METHODS = ("gain", "mean-decrease-impurity", "weighted-impurity", "linear-weight", "permutation")
_COMPATIBLE = {
    "gain": ("gbt",),
    "mean-decrease-impurity": ("rf",),
    "weighted-impurity": ("dt",),
    "linear-weight": ("svm",),
}


@dataclass(frozen=True)
class ImportanceReport:
    method: str
    feature_names: tuple
    scores: np.ndarray
    normalized: bool
    std: np.ndarray = None     # spread over repeats (permutation only)

    def ranking(self):
        """Feature indices from most to least important (stable on ties)."""
        return np.argsort(-self.scores, kind="stable")

    def top(self):
        return self.feature_names[int(self.ranking()[0])]


def _weighted_decrease(tree, p):
    out = np.zeros(p)
    internal = tree.feature >= 0
    if internal.any():
        w = tree.n_samples[internal] / tree.n_samples[0]
        np.add.at(out, tree.feature[internal], w * tree.impurity_decrease[internal])
    return out


def _normalize(v):
    s = v.sum()
    return v / s if s > 0 else v


def gain_importance(model):
    """Total split gain per feature summed over every boosted tree."""
    out = np.zeros(model.n_features)
    for round_trees in model.rounds:
        for _, t in round_trees:
            internal = t.feature >= 0
            np.add.at(out, t.feature[internal], t.gain[internal])
    return out


def impurity_importance(model):
    """Sample-weighted impurity decrease per feature, averaged over trees."""
    trees = model.trees if hasattr(model, "trees") else [model.tree]
    return np.mean([_weighted_decrease(t, model.n_features) for t in trees], axis=0)


def permutation_importance(model, X, y, repeats=10, seed=0, scorer=macro_f1):
    """Drop in ``scorer`` after shuffling each column; returns ``(mean, std)``.

    Shuffle ``r`` of feature ``j`` uses an RNG seeded from
    ``derive_seed(seed, "permutation-<j>", r)``, so results do not depend on
    scheduling.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    base = scorer(y, model.predict(X))

    def one(j):
        drops = np.empty(repeats)
        for r in range(repeats):
            rng = np.random.default_rng(derive_seed(seed, f"permutation-{j}", r))
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            drops[r] = base - scorer(y, model.predict(Xp))
        return drops

    D = np.array(parallel_map(one, range(X.shape[1])))
    return D.mean(axis=1), D.std(axis=1, ddof=1) if repeats > 1 else np.zeros(X.shape[1])


def feature_importance(model, method, X=None, y=None, feature_names=FEATURE_NAMES,
                       normalize=True, repeats=10, seed=0):
    """Importance scores of ``model`` by ``method``.

    Parameters
    ----------
    model : fitted model, possibly wrapped in :class:`~modechoice.models.ScaledModel`
    method : str
        One of :data:`METHODS`.  ``gain`` needs a boosted model,
        ``mean-decrease-impurity`` a forest, ``weighted-impurity`` a single
        tree and ``linear-weight`` a linear-kernel SVM.  ``permutation``
        works with any model but needs evaluation data.
    X, y : evaluation data (``X`` may be a Dataset, in which case ``y``
        defaults to its labels).
    normalize : bool
        Scale the tree-based scores to sum to 1.
    """
    if method not in METHODS:
        raise ValueError(f"unknown importance method {method!r}; expected one of {METHODS}")
    names = tuple(feature_names)
    if method == "permutation":
        if X is None:
            raise MissingEvalDataError("permutation importance needs evaluation data")
        if isinstance(X, Dataset):
            y = X.chosen if y is None else y
            X = X.feature_matrix()
        if y is None:
            raise MissingEvalDataError("permutation importance needs labels")
        mean, std = permutation_importance(model, X, y, repeats=repeats, seed=seed)
        return ImportanceReport(method, names, mean, False, std)

    inner = unwrap(model)
    kind = getattr(inner, "kind", None)
    if kind not in _COMPATIBLE[method]:
        raise IncompatibleMethodError(f"{method!r} importance is not defined for a {kind!r} model")
    if method == "gain":
        raw = gain_importance(inner)
    elif method == "linear-weight":
        raw = linear_weight_importance(inner)
        return ImportanceReport(method, names, raw, False)
    else:
        raw = impurity_importance(inner)
    return ImportanceReport(method, names, _normalize(raw) if normalize else raw, normalize)


# --------------------------------------------------------------------- ICE

@dataclass(frozen=True)
class IceCurve:
    instance_id: int
    feature: str
    grid: np.ndarray           # (g,) strictly increasing
    probabilities: np.ndarray  # (g, 8)


def _matrix(instances):
    if isinstance(instances, Dataset):
        return instances.feature_matrix(), np.asarray(instances.ids)
    X = np.asarray(instances, dtype=float)
    return X, np.arange(1, X.shape[0] + 1)


def _feature_index(feature, feature_names):
    if isinstance(feature, (int, np.integer)):
        return int(feature), feature_names[int(feature)]
    return list(feature_names).index(feature), feature


def feature_grid(values, n_grid=50):
    values = np.asarray(values, dtype=float)
    if n_grid < 2:
        raise ValueError("n_grid must be >= 2")
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        raise ConstantFeatureError(f"feature is constant ({lo}); no grid to sweep")
    return np.linspace(lo, hi, n_grid)


def ice_curves(model, instances, feature, n_grid=50, reference=None, grid=None,
               feature_names=FEATURE_NAMES):
    """One curve per instance as ``feature`` sweeps a grid.

    The default grid holds ``n_grid`` evenly spaced values between the
    minimum and maximum of the feature over ``reference`` (the full test set,
    say), falling back to ``instances`` themselves.  Everything else stays at
    the observed values.
    """
    X, ids = _matrix(instances)
    j, name = _feature_index(feature, feature_names)
    if grid is None:
        ref = X if reference is None else _matrix(reference)[0]
        grid = feature_grid(ref[:, j], n_grid)
    else:
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
            raise GridMismatchError("an explicit grid must be strictly increasing")
    g = grid.size

    def chunk(rows):
        Xs = np.repeat(X[rows], g, axis=0)
        Xs[:, j] = np.tile(grid, len(rows))
        return model.predict_proba(Xs).reshape(len(rows), g, N_MODES)

    blocks = np.array_split(np.arange(X.shape[0]), max(1, min(X.shape[0], 8)))
    P = np.concatenate(parallel_map(chunk, [b for b in blocks if b.size]), axis=0) \
        if X.shape[0] else np.zeros((0, g, N_MODES))
    return [IceCurve(int(ids[i]), name, grid, P[i]) for i in range(X.shape[0])]


def average_ice(curves):
    """Pointwise mean probability over curves sharing one grid: ``(grid, mean)``."""
    curves = list(curves)
    if not curves:
        raise GridMismatchError("no curves to average")
    grid = curves[0].grid
    for c in curves[1:]:
        if c.grid.shape != grid.shape or np.any(c.grid != grid) or c.feature != curves[0].feature:
            raise GridMismatchError("curves do not share a grid")
    return grid, np.mean([c.probabilities for c in curves], axis=0)


# --------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class ScenarioDelta:
    scenario: str
    delta_pp: np.ndarray       # per-class mean change, percentage points


def scenario_average_change(model, d, scenario):
    """Mean change in predicted probability per mode when ``scenario`` applies."""
    X0 = d.feature_matrix()
    X1 = apply_policy_scenario(d, scenario).feature_matrix()
    diff = model.predict_proba(X1) - model.predict_proba(X0)
    return ScenarioDelta(scenario.name, 100.0 * diff.mean(axis=0))


def scenario_average_change_ice(model, d, scenario):
    """Same quantity evaluated through per-instance ICE sweeps.

    Each instance gets a two-point path from its observed values to its
    perturbed values along the scenario's columns; the mean of the path's
    end-minus-start probabilities is the scenario delta.
    """
    X = d.feature_matrix()
    new = scenario_columns(d, scenario)
    cols = [FEATURE_NAMES.index(c) for c in new]
    n = X.shape[0]
    path = np.repeat(X, 2, axis=0)
    for c, j in zip(new, cols):
        path[1::2, j] = new[c]
    P = model.predict_proba(path).reshape(n, 2, N_MODES)
    return ScenarioDelta(scenario.name, 100.0 * (P[:, 1] - P[:, 0]).mean(axis=0))


# ------------------------------------------------------------- plot data

def emit_plot_data(obj, path):
    """Write ICE curves, an importance report or scenario deltas as long CSV."""
    if isinstance(obj, ImportanceReport):
        header = ["method", "feature", "score"] + (["std"] if obj.std is not None else [])
        rows = [[obj.method, f, s] + ([obj.std[i]] if obj.std is not None else [])
                for i, (f, s) in enumerate(zip(obj.feature_names, obj.scores))]
    elif isinstance(obj, ScenarioDelta) or (
            isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], ScenarioDelta)):
        deltas = [obj] if isinstance(obj, ScenarioDelta) else obj
        header = ["scenario", "mode", "delta_pp"]
        rows = [[sd.scenario, MODE_KEYS[k], sd.delta_pp[k]] for sd in deltas for k in range(N_MODES)]
    else:
        header = ["instance_id", "feature", "grid_index", "value", "mode", "probability"]
        rows = [[c.instance_id, c.feature, gi, c.grid[gi], MODE_KEYS[k], c.probabilities[gi, k]]
                for c in obj for gi in range(c.grid.size) for k in range(N_MODES)]
    write_csv_rows(path, header, rows)
    return path
