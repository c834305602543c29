"""Classification metrics, cross-validated grid search and share diagnostics."""
import hashlib
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from modechoice._util import parallel_map
from modechoice.data import MODE_NAMES, N_MODES, kfold_indices
from modechoice.exceptions import (
    BadLabelError,
    EmptyMatrixError,
    LengthMismatchError,
    RowNotNormalizedError,
    TrainerFailureError,
)
from modechoice.svm import KernelSpec, fit_svm_multiclass
from modechoice.trees import (
    BoostHyper,
    ForestHyper,
    TreeHyper,
    fit_decision_tree,
    fit_gradient_boost,
    fit_random_forest,
)

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ metrics

@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = actual mode code and columns = predicted code."""

    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    def percent(self):
        """Row-normalized percentages; rows of absent classes are all zero."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return 100.0 * self.counts / np.where(rows > 0, rows, 1)

    def binary_view(self, code):
        """``(TP, FP, FN, TN)`` of the one-vs-rest problem for ``code``."""
        k = code - 1
        tp = int(self.counts[k, k])
        fp = int(self.counts[:, k].sum()) - tp
        fn = int(self.counts[k, :].sum()) - tp
        return tp, fp, fn, self.total - tp - fp - fn


def _labels(y, name):
    y = np.asarray(y)
    if y.ndim != 1:
        raise LengthMismatchError(f"{name} must be one-dimensional")
    if y.size and (np.any(y < 1) | np.any(y > N_MODES) | np.any(y != np.round(y))):
        raise BadLabelError(f"{name} contains labels outside 1..{N_MODES}")
    return y.astype(np.int64)


def confusion_matrix(y_true, y_pred):
    t = _labels(y_true, "y_true")
    p = _labels(y_pred, "y_pred")
    if t.shape != p.shape:
        raise LengthMismatchError(f"{t.shape[0]} true labels vs {p.shape[0]} predictions")
    if t.size == 0:
        raise LengthMismatchError("need at least one label")
    counts = np.zeros((N_MODES, N_MODES), dtype=np.int64)
    np.add.at(counts, (t - 1, p - 1), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class MetricsReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    included: np.ndarray      # classes entering the macro average
    macro_f1: float
    accuracy: float           # percent

    def rows(self):
        return [(MODE_NAMES[k], self.precision[k], self.recall[k], self.f1[k], int(self.support[k]))
                for k in range(N_MODES)]


def classification_report(cm):
    """Per-class precision/recall/F1, macro-F1 and accuracy.

    A zero denominator makes that component 0.  The macro average runs
    over classes that occur in the truth or in the predictions; a class
    absent from both carries no information and is left out.
    """
    C = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=float)
    total = C.sum()
    if total <= 0:
        raise EmptyMatrixError("confusion matrix is empty")
    tp = np.diag(C)
    col = C.sum(axis=0)
    row = C.sum(axis=1)
    precision = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    s = precision + recall
    f1 = np.divide(2 * precision * recall, s, out=np.zeros_like(tp), where=s > 0)
    included = (row > 0) | (col > 0)
    return MetricsReport(precision, recall, f1, row.astype(np.int64), included,
                         float(f1[included].mean()), float(100.0 * tp.sum() / total))


def macro_f1(y_true, y_pred):
    return classification_report(confusion_matrix(y_true, y_pred)).macro_f1


# -------------------------------------------------------------- grid search

def train_dt(X, y, seed=0, **params):
    return fit_decision_tree(X, y, TreeHyper(**params))


def train_rf(X, y, seed=0, **params):
    return fit_random_forest(X, y, ForestHyper(seed=seed, **params))


def train_gbt(X, y, seed=0, **params):
    return fit_gradient_boost(X, y, BoostHyper(seed=seed, **params))


def train_svm(X, y, seed=0, C=1.0, kernel="rbf", gamma=None, tol=1e-3):
    return fit_svm_multiclass(X, y, C=C, kernel=KernelSpec(kernel, gamma), tol=tol)


TRAINERS = {"dt": train_dt, "rf": train_rf, "gbt": train_gbt, "svm": train_svm}

# Search spaces as tabulated for the survey study.  The pruning strength is
# listed without values; a log-spaced set including 0 stands in for it.
SURVEY_GRIDS = {
    "dt": {"min_samples_leaf": list(range(1, 21)), "max_depth": list(range(1, 21)),
           "ccp_alpha": [0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2]},
    "rf": {"n_trees": [1, 10, 100, 1000, 10000], "max_depth": list(range(1, 12))},
    "svm": {"C": [round(0.1 * i, 1) for i in range(1, 1001)]},
    "gbt": {"max_depth": [1, 3, 5, 7, 9, 11], "eta": [0.1, 0.01], "gamma": [0.0, 0.5, 1.0],
            "n_rounds": list(range(100, 501, 50)), "min_child_weight": [1, 3, 5, 7, 9, 11]},
}


@dataclass(frozen=True)
class Trial:
    index: int
    params: dict
    fold_scores: tuple
    mean_score: float
    error: str = None

    @property
    def failed(self):
        return self.error is not None


@dataclass(frozen=True)
class GridSearchResult:
    best_params: dict
    best_score: float
    trials: tuple
    fold_digest: str
    k: int
    seed: int

    def table(self):
        """One row per trial: index, params, mean score, per-fold scores."""
        return [(t.index, t.params, t.mean_score, t.fold_scores) for t in self.trials]


def grid_combinations(grid):
    """Cartesian product of ``grid`` in key-declaration order."""
    if not grid:
        raise ValueError("grid is empty")
    keys = list(grid)
    for k in keys:
        if len(grid[k]) == 0:
            raise ValueError(f"grid entry {k!r} has no values")
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def fold_digest(folds):
    h = hashlib.sha256()
    for tr, va in folds:
        h.update(np.asarray(tr, dtype=np.int64).tobytes())
        h.update(b"|")
        h.update(np.asarray(va, dtype=np.int64).tobytes())
        h.update(b"#")
    return h.hexdigest()


def grid_search_cv(trainer, grid, X, y, k=5, seed=0, scorer=macro_f1):
    """Exhaustive k-fold search maximizing mean validation macro-F1.

    Parameters
    ----------
    trainer : str or callable
        A key of :data:`TRAINERS` or ``f(X, y, seed=..., **params) -> model``
        returning an object with ``predict``.
    grid : dict
        Parameter name to list of candidate values.
    X, y : ndarray
        Training features and mode codes.
    k : int
        Number of folds, >= 2.  The same partition scores every combination.
    seed : int
        Drives the fold partition and is handed to the trainer.

    Returns
    -------
    GridSearchResult
        Failed combinations stay in the trial log with ``error`` set.  Ties
        go to the combination enumerated first.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    fit = TRAINERS[trainer] if isinstance(trainer, str) else trainer
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise LengthMismatchError("X and y differ in length")
    combos = grid_combinations(grid)
    folds = kfold_indices(X.shape[0], k, seed)
    digest = fold_digest(folds)

    def run(item):
        idx, params = item
        scores = []
        try:
            for tr, va in folds:
                model = fit(X[tr], y[tr], seed=seed, **params)
                scores.append(float(scorer(y[va], model.predict(X[va]))))
        except Exception as exc:  # noqa: BLE001 - a bad combination must not end the search
            log.warning("grid trial %d %r failed: %s", idx, params, exc)
            return Trial(idx, params, tuple(scores), float("nan"), f"{type(exc).__name__}: {exc}")
        return Trial(idx, params, tuple(scores), float(np.mean(scores)))

    trials = parallel_map(run, list(enumerate(combos)))
    ok = [t for t in trials if not t.failed]
    if not ok:
        raise TrainerFailureError(f"all {len(trials)} grid combinations failed")
    best = ok[0]
    for t in ok[1:]:
        if t.mean_score > best.mean_score:
            best = t
    return GridSearchResult(dict(best.params), best.mean_score, tuple(trials), digest, k, seed)


# ----------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class CentroidDistances:
    matrix: np.ndarray        # NaN in rows/columns of absent classes
    present: np.ndarray


def class_centroid_distances(d, features=None):
    """Euclidean distances between per-class mean feature vectors (raw units)."""
    X = d.feature_matrix() if features is None else np.column_stack([d.column(f) for f in features])
    y = np.asarray(d.chosen)
    present = np.array([np.any(y == c) for c in range(1, N_MODES + 1)])
    cent = np.full((N_MODES, X.shape[1]), np.nan)
    for c in range(1, N_MODES + 1):
        if present[c - 1]:
            cent[c - 1] = X[y == c].mean(axis=0)
    diff = cent[:, None, :] - cent[None, :, :]
    D = np.sqrt(np.sum(diff * diff, axis=2))
    np.fill_diagonal(D, np.where(present, 0.0, np.nan))
    return CentroidDistances(D, present)


@dataclass(frozen=True)
class ModalShareReport:
    actual: np.ndarray                       # percent per class
    shares: dict = field(default_factory=dict)      # model -> percent per class
    deviations: dict = field(default_factory=dict)  # model -> |pred - actual| / 2

    def header(self):
        h = ["mode", "actual_share"]
        for name in self.shares:
            h += [f"{name}_share", f"{name}_deviation"]
        return h

    def rows(self):
        out = []
        for k in range(N_MODES):
            r = [MODE_NAMES[k], self.actual[k]]
            for name in self.shares:
                r += [self.shares[name][k], self.deviations[name][k]]
            out.append(r)
        return out


def share_deviation(predicted, actual):
    """Population standard deviation of the pair, ``|predicted - actual| / 2``."""
    return abs(predicted - actual) / 2.0


def modal_share_report(prob_matrices, actual, atol=1e-9):
    """Mean predicted probability per mode against the observed shares."""
    y = _labels(actual, "actual")
    if y.size == 0:
        raise LengthMismatchError("need at least one observation")
    act = 100.0 * np.bincount(y - 1, minlength=N_MODES) / y.size
    shares, devs = {}, {}
    for name, P in prob_matrices.items():
        P = np.asarray(P, dtype=float)
        if P.shape != (y.size, N_MODES):
            raise LengthMismatchError(f"{name}: expected shape {(y.size, N_MODES)}, got {P.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > atol:
            raise RowNotNormalizedError(f"{name}: probability rows must be non-negative and sum to 1")
        shares[name] = 100.0 * P.mean(axis=0)
        devs[name] = share_deviation(shares[name], act)
    return ModalShareReport(act, shares, devs)
