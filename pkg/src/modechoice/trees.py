"""Decision trees, random forests and gradient-boosted trees.

All three learners share an exact greedy split search.  Every feature
column is argsorted once per fit; at each node the sorted index matrix is
partitioned stably into the children so no node ever re-sorts.  Candidate
thresholds are midpoints between consecutive distinct values.  Ties
between equally good splits go to the lowest feature index, then the
lowest threshold.

Labels are mode codes 1..8; probability outputs always have 8 columns in
code order.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from modechoice._util import derive_seed, parallel_map
from modechoice.data import N_MODES
from modechoice.exceptions import DimensionMismatchError, EmptyNodeError, SingleClassDataError

_MIN_DECREASE = 1e-12
_LAMBDA = 1.0  # L2 penalty on leaf weights of boosted trees
_ALPHA_TOL = 1e-12  # effective alphas closer than this count as tied


# ----------------------------------------------------------------------- impurity

def impurity(counts, criterion="gini"):
    """Entropy (bits) or Gini impurity of a class-count vector."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if np.any(counts < 0):
        raise ValueError("class counts must be non-negative")
    if total <= 0:
        raise EmptyNodeError("impurity of an empty node")
    return float(_impurity(counts[None, :], np.array([total]), criterion)[0])


def _impurity(C, n, criterion):
    """Row-wise impurity of count arrays ``C`` (..., K) with totals ``n`` (...)."""
    P = C / n[..., None]
    if criterion == "gini":
        return 1.0 - np.sum(P * P, axis=-1)
    if criterion == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(P > 0, np.log2(np.where(P > 0, P, 1.0)), 0.0)
        return -np.sum(P * logs, axis=-1)
    raise ValueError(f"unknown criterion {criterion!r}")


def _one_hot(y):
    y = np.asarray(y)
    if y.size and (y.min() < 1 or y.max() > N_MODES):
        raise ValueError(f"labels must be mode codes 1..{N_MODES}")
    Y = np.zeros((y.shape[0], N_MODES))
    Y[np.arange(y.shape[0]), y.astype(int) - 1] = 1.0
    return Y


def _partition(S, goes_left):
    """Split a sorted index matrix into left/right parts, keeping each column sorted."""
    mask = goes_left[S]
    n_left = int(mask[:, 0].sum())
    St = S.T
    left = St[mask.T].reshape(S.shape[1], n_left).T
    right = St[~mask.T].reshape(S.shape[1], S.shape[0] - n_left).T
    return left, right


def _midpoint(lo, hi):
    thr = 0.5 * (lo + hi)
    return lo if thr >= hi else thr


# -------------------------------------------------------------------- tree arrays

@dataclass(eq=False)
class Tree:
    """Flat classification tree.  Leaves have ``feature == -1``.

    ``counts`` holds the (bootstrap-weighted) training class counts reaching
    each node; ``impurity_decrease`` is the node impurity minus the
    size-weighted impurity of its children.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray
    impurity_decrease: np.ndarray

    @property
    def n_nodes(self):
        return int(self.feature.shape[0])

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def is_leaf(self, i):
        return self.feature[i] < 0

    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max(initial=0))

    def apply(self, X):
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            r, nd = rows[active], node[active]
            go_left = X[r, feat[active]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])

    def leaf_distribution(self):
        tot = self.counts.sum(axis=1, keepdims=True)
        return self.counts / np.where(tot > 0, tot, 1.0)

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
            "n_samples": self.n_samples.tolist(),
            "impurity": self.impurity.tolist(),
            "impurity_decrease": self.impurity_decrease.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            feature=np.array(doc["feature"], dtype=np.int64),
            threshold=np.array(doc["threshold"], dtype=float),
            left=np.array(doc["left"], dtype=np.int64),
            right=np.array(doc["right"], dtype=np.int64),
            counts=np.array(doc["counts"], dtype=float).reshape(-1, N_MODES),
            n_samples=np.array(doc["n_samples"], dtype=float),
            impurity=np.array(doc["impurity"], dtype=float),
            impurity_decrease=np.array(doc["impurity_decrease"], dtype=float),
        )


def _pack(trees):
    """Concatenate flat trees into one node table with per-tree root offsets."""
    sizes = [t.feature.shape[0] for t in trees]
    roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    feature = np.concatenate([t.feature for t in trees])
    threshold = np.concatenate([t.threshold for t in trees])
    left = np.concatenate([np.where(t.feature >= 0, t.left + r, -1) for t, r in zip(trees, roots)])
    right = np.concatenate([np.where(t.feature >= 0, t.right + r, -1) for t, r in zip(trees, roots)])
    return roots, feature, threshold, left, right


def _packed_apply(pack, X):
    """Global leaf index reached by every row in every tree, shape ``(n, T)``.

    Same routing as :meth:`Tree.apply`, all trees advanced one level per step.
    """
    roots, feature, threshold, left, right = pack
    n = X.shape[0]
    node = np.tile(roots, (n, 1))
    rows = np.arange(n)[:, None]
    while True:
        feat = feature[node]
        active = feat >= 0
        if not active.any():
            return node
        go_left = X[rows, np.maximum(feat, 0)] <= threshold[node]
        node = np.where(active, np.where(go_left, left[node], right[node]), node)


class _NodeBuffer:
    def __init__(self, fields):
        self.fields = fields
        self.data = {f: [] for f in fields}

    def add(self, **values):
        nid = len(self.data[self.fields[0]])
        for f in self.fields:
            self.data[f].append(values.get(f, -1 if f in ("feature", "left", "right") else 0.0))
        return nid

    def set(self, nid, **values):
        for k, v in values.items():
            self.data[k][nid] = v


# ------------------------------------------------------------------ decision tree

@dataclass(frozen=True)
class TreeHyper:
    min_samples_leaf: int = 1
    max_depth: int = 20
    ccp_alpha: float = 0.0
    criterion: str = "gini"

    def __post_init__(self):
        if self.min_samples_leaf < 1 or self.max_depth < 1 or self.ccp_alpha < 0:
            raise ValueError("need min_samples_leaf >= 1, max_depth >= 1, ccp_alpha >= 0")
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"unknown criterion {self.criterion!r}")


def _grow_classifier(X, y, max_depth, min_samples_leaf, criterion, max_features=None, rng=None):
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    Y = _one_hot(y)
    S = np.argsort(X, axis=0, kind="stable")
    buf = _NodeBuffer(("feature", "threshold", "left", "right", "counts", "n_samples",
                       "impurity", "impurity_decrease"))
    goes_left = np.zeros(n, dtype=bool)
    msl = min_samples_leaf

    def build(S_node, depth):
        rows = S_node[:, 0]
        m = rows.shape[0]
        counts = Y[rows].sum(axis=0)
        imp = float(_impurity(counts[None, :], np.array([float(m)]), criterion)[0])
        nid = buf.add(counts=counts, n_samples=float(m), impurity=imp, threshold=0.0,
                      impurity_decrease=0.0)
        if depth >= max_depth or m < 2 * msl or imp <= 0.0:
            return nid
        if max_features is None or max_features >= p:
            feats = np.arange(p)
        else:
            feats = np.sort(rng.choice(p, size=max_features, replace=False))
        Sf = S_node[:, feats]
        xs = X[Sf, feats[None, :]]
        CL = np.cumsum(Y[Sf], axis=0)[:-1]            # (m-1, q, K)
        nl = np.arange(1, m, dtype=float)[:, None]
        nr = m - nl
        child = (nl * _impurity(CL, np.broadcast_to(nl, CL.shape[:2]), criterion)
                 + nr * _impurity(counts - CL, np.broadcast_to(nr, CL.shape[:2]), criterion)) / m
        dec = imp - child
        valid = (xs[1:] > xs[:-1]) & (nl >= msl) & (nr >= msl)
        dec = np.where(valid, dec, -np.inf)
        flat = dec.T.ravel()
        best = int(np.argmax(flat))
        if not flat[best] > _MIN_DECREASE:
            return nid
        fi, pos = divmod(best, m - 1)
        f = int(feats[fi])
        thr = _midpoint(xs[pos, fi], xs[pos + 1, fi])
        node_rows = S_node[:, 0]
        goes_left[node_rows] = X[node_rows, f] <= thr
        S_left, S_right = _partition(S_node, goes_left)
        buf.set(nid, feature=f, threshold=float(thr), impurity_decrease=float(flat[best]))
        left = build(S_left, depth + 1)
        right = build(S_right, depth + 1)
        buf.set(nid, left=left, right=right)
        return nid

    if n == 0:
        raise ValueError("cannot fit a tree on zero rows")
    build(S, 0)
    d = buf.data
    return Tree(
        feature=np.array(d["feature"], dtype=np.int64),
        threshold=np.array(d["threshold"], dtype=float),
        left=np.array(d["left"], dtype=np.int64),
        right=np.array(d["right"], dtype=np.int64),
        counts=np.array(d["counts"], dtype=float).reshape(-1, N_MODES),
        n_samples=np.array(d["n_samples"], dtype=float),
        impurity=np.array(d["impurity"], dtype=float),
        impurity_decrease=np.array(d["impurity_decrease"], dtype=float),
    )


class DecisionTreeModel:
    kind = "dt"

    def __init__(self, tree, hyper, n_features):
        self.tree = tree
        self.hyper = hyper
        self.n_features = n_features

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"expected {self.n_features} features")
        return X

    def predict_proba(self, X):
        return self.tree.leaf_distribution()[self.tree.apply(self._check(X))]

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1) + 1

    def to_dict(self):
        return {"hyper": asdict(self.hyper), "n_features": self.n_features, "tree": self.tree.to_dict()}

    @classmethod
    def from_dict(cls, doc):
        return cls(Tree.from_dict(doc["tree"]), TreeHyper(**doc["hyper"]), int(doc["n_features"]))


def fit_decision_tree(X, y, h=TreeHyper()):
    """Greedy tree grown to the depth/leaf-size limits, then CCP-pruned."""
    X = np.asarray(X, dtype=float)
    tree = _grow_classifier(X, y, h.max_depth, h.min_samples_leaf, h.criterion)
    if h.ccp_alpha > 0:
        tree = ccp_prune(tree, h.ccp_alpha)
    return DecisionTreeModel(tree, h, X.shape[1])


# ------------------------------------------------------------------------ pruning

def _node_risk(tree):
    """Weighted training misclassification of each node as a leaf."""
    total = tree.counts[0].sum()
    return (tree.counts.sum(axis=1) - tree.counts.max(axis=1)) / total


def _subtree_stats(tree, leaf_mask):
    """Leaf count and risk of the subtree below each node given current leaves."""
    risk = _node_risk(tree)
    n = tree.n_nodes
    r_sub = np.zeros(n)
    leaves = np.zeros(n, dtype=int)
    # preorder ids: children always have larger ids than their parent
    for i in range(n - 1, -1, -1):
        if leaf_mask[i]:
            r_sub[i] = risk[i]
            leaves[i] = 1
        else:
            r_sub[i] = r_sub[tree.left[i]] + r_sub[tree.right[i]]
            leaves[i] = leaves[tree.left[i]] + leaves[tree.right[i]]
    return risk, r_sub, leaves


def _reachable(tree, leaf_mask):
    out = np.zeros(tree.n_nodes, dtype=bool)
    stack = [0]
    while stack:
        i = stack.pop()
        out[i] = True
        if not leaf_mask[i]:
            stack.extend((tree.left[i], tree.right[i]))
    return out


def _weakest(g):
    """Position of the smallest effective alpha; near-ties go to the lowest node id."""
    return int(np.flatnonzero(g <= g.min() + _ALPHA_TOL)[0])


def weakest_link_sequence(tree):
    """Full weakest-link pruning sequence.

    Returns a list of ``(node, g)`` in pruning order, where ``g`` is the
    effective alpha ``(R(node) - R(subtree)) / (leaves - 1)`` at the moment
    the node is collapsed.  Ties go to the lowest node id.
    """
    leaf_mask = tree.feature < 0
    seq = []
    while not leaf_mask[0]:
        risk, r_sub, leaves = _subtree_stats(tree, leaf_mask)
        live = _reachable(tree, leaf_mask) & ~leaf_mask
        cand = np.flatnonzero(live)
        g = (risk[cand] - r_sub[cand]) / (leaves[cand] - 1)
        k = _weakest(g)
        node = int(cand[k])
        seq.append((node, float(g[k])))
        leaf_mask = leaf_mask.copy()
        leaf_mask[node] = True
    return seq


def cost_complexity_alphas(tree):
    """Distinct effective alphas at which the pruned tree changes (ascending)."""
    alphas = []
    for _, g in weakest_link_sequence(tree):
        g = max(g, 0.0)
        if not alphas or g > alphas[-1] + _ALPHA_TOL:
            alphas.append(g)
    return alphas


def _compact(tree, leaf_mask):
    keep = []
    stack = [0]
    while stack:
        i = stack.pop()
        keep.append(i)
        if not leaf_mask[i]:
            stack.extend((tree.right[i], tree.left[i]))
    keep = np.array(keep, dtype=np.int64)
    remap = -np.ones(tree.n_nodes, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    leaf = leaf_mask[keep]
    left = np.where(leaf, -1, remap[np.where(leaf, 0, tree.left[keep])])
    right = np.where(leaf, -1, remap[np.where(leaf, 0, tree.right[keep])])
    return Tree(
        feature=np.where(leaf, -1, tree.feature[keep]),
        threshold=np.where(leaf, 0.0, tree.threshold[keep]),
        left=left,
        right=right,
        counts=tree.counts[keep].copy(),
        n_samples=tree.n_samples[keep].copy(),
        impurity=tree.impurity[keep].copy(),
        impurity_decrease=np.where(leaf, 0.0, tree.impurity_decrease[keep]),
    )


def ccp_prune(tree, alpha):
    """Minimal cost-complexity pruning at strength ``alpha``.

    Repeatedly collapses the internal node with the smallest effective
    alpha while that value is ``<= alpha``.  ``alpha == 0`` returns the tree
    unchanged.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0:
        return tree
    leaf_mask = tree.feature < 0
    if alpha == math.inf:
        leaf_mask = np.ones_like(leaf_mask)
    else:
        while not leaf_mask[0]:
            risk, r_sub, leaves = _subtree_stats(tree, leaf_mask)
            cand = np.flatnonzero(_reachable(tree, leaf_mask) & ~leaf_mask)
            g = (risk[cand] - r_sub[cand]) / (leaves[cand] - 1)
            k = _weakest(g)
            if g[k] > alpha + _ALPHA_TOL:
                break
            leaf_mask = leaf_mask.copy()
            leaf_mask[cand[k]] = True
    return _compact(tree, leaf_mask)


# ------------------------------------------------------------------ random forest

@dataclass(frozen=True)
class ForestHyper:
    n_trees: int = 100
    max_depth: int = 10
    features_per_split: int = None   # None -> ceil(sqrt(p))
    bootstrap: bool = True
    seed: int = 0
    min_samples_leaf: int = 1
    criterion: str = "gini"

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("need n_trees >= 1, max_depth >= 1, min_samples_leaf >= 1")


class ForestModel:
    """Bagged trees; class probability is the fraction of trees voting for it."""

    kind = "rf"

    def __init__(self, trees, hyper, n_features):
        self.trees = list(trees)
        self.hyper = hyper
        self.n_features = n_features

    def votes(self, X):
        """``(n_trees, n)`` array of each tree's predicted mode code."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"expected {self.n_features} features")
        if getattr(self, "_packed", None) is None:
            self._packed = _pack(self.trees)
            self._leaf_label = np.concatenate([np.argmax(t.counts, axis=1) + 1 for t in self.trees])
        return self._leaf_label[_packed_apply(self._packed, X)].T

    def predict_proba(self, X):
        V = self.votes(X)
        P = np.zeros((V.shape[1], N_MODES))
        for code in range(1, N_MODES + 1):
            P[:, code - 1] = np.sum(V == code, axis=0)
        return P / len(self.trees)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1) + 1

    def to_dict(self):
        return {"hyper": asdict(self.hyper), "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, doc):
        return cls([Tree.from_dict(t) for t in doc["trees"]], ForestHyper(**doc["hyper"]),
                   int(doc["n_features"]))


def fit_random_forest(X, y, h=ForestHyper()):
    """Random forest with seeded bootstraps and per-split feature sampling.

    Tree ``i`` draws from its own generator seeded by ``(h.seed, i)`` so the
    result does not depend on how trees are scheduled.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n, p = X.shape
    q = h.features_per_split if h.features_per_split is not None else math.ceil(math.sqrt(p))
    if not 1 <= q <= p:
        raise ValueError(f"features_per_split must lie in [1, {p}]")

    def one(i):
        rng = np.random.default_rng(derive_seed(h.seed, "forest-tree", i))
        if h.bootstrap:
            idx = rng.integers(0, n, size=n)
            Xi, yi = X[idx], y[idx]
        else:
            Xi, yi = X, y
        return _grow_classifier(Xi, yi, h.max_depth, h.min_samples_leaf, h.criterion,
                                max_features=q, rng=rng)

    return ForestModel(parallel_map(one, range(h.n_trees)), h, p)


# --------------------------------------------------------------- gradient boosting

@dataclass(frozen=True)
class BoostHyper:
    max_depth: int = 3
    eta: float = 0.1
    gamma: float = 0.0
    n_rounds: int = 100
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.eta > 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValueError("need eta > 0, gamma >= 0, min_child_weight >= 0")
        if self.max_depth < 1 or self.n_rounds < 0:
            raise ValueError("need max_depth >= 1 and n_rounds >= 0")


@dataclass(eq=False)
class RegressionTree:
    """Flat second-order regression tree; ``value`` holds leaf weights."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray

    apply = Tree.apply

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "gain", "cover")}

    @classmethod
    def from_dict(cls, doc):
        ints = ("feature", "left", "right")
        return cls(**{k: np.array(doc[k], dtype=np.int64 if k in ints else float) for k in
                      ("feature", "threshold", "left", "right", "value", "gain", "cover")})


def _grow_regression(X, S, g, hess, h):
    buf = _NodeBuffer(("feature", "threshold", "left", "right", "value", "gain", "cover"))
    goes_left = np.zeros(X.shape[0], dtype=bool)
    p = X.shape[1]
    feats = np.arange(p)
    mcw = h.min_child_weight

    def build(S_node, depth):
        rows = np.sort(S_node[:, 0])
        m = rows.shape[0]
        G = float(np.sum(g[rows]))
        H = float(np.sum(hess[rows]))
        nid = buf.add(value=-G / (H + _LAMBDA), cover=H, gain=0.0, threshold=0.0)
        if depth >= h.max_depth or m < 2:
            return nid
        xs = X[S_node, feats[None, :]]
        GL = np.cumsum(g[S_node], axis=0)[:-1]
        HL = np.cumsum(hess[S_node], axis=0)[:-1]
        GR = G - GL
        HR = H - HL
        gain = 0.5 * (GL ** 2 / (HL + _LAMBDA) + GR ** 2 / (HR + _LAMBDA) - G ** 2 / (H + _LAMBDA))
        valid = (xs[1:] > xs[:-1]) & (HL >= mcw) & (HR >= mcw)
        score = np.where(valid, gain - h.gamma, -np.inf)
        flat = score.T.ravel()
        best = int(np.argmax(flat))
        if not flat[best] > 0:
            return nid
        fi, pos = divmod(best, m - 1)
        f = int(feats[fi])
        thr = _midpoint(xs[pos, fi], xs[pos + 1, fi])
        goes_left[rows] = X[rows, f] <= thr
        S_left, S_right = _partition(S_node, goes_left)
        buf.set(nid, feature=f, threshold=float(thr), gain=float(gain[pos, fi]))
        left = build(S_left, depth + 1)
        right = build(S_right, depth + 1)
        buf.set(nid, left=left, right=right)
        return nid

    build(S, 0)
    d = buf.data
    ints = ("feature", "left", "right")
    return RegressionTree(**{k: np.array(v, dtype=np.int64 if k in ints else float) for k, v in d.items()})


def _softmax_scores(scores):
    m = np.max(scores, axis=1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=1, keepdims=True)


class BoostedModel:
    """Softmax ensemble: class score = base + eta * sum of that class's trees."""

    kind = "gbt"

    def __init__(self, base_score, rounds, hyper, n_features):
        self.base_score = np.asarray(base_score, dtype=float)
        self.rounds = rounds          # list of rounds, each a list of (mode code, RegressionTree)
        self.hyper = hyper
        self.n_features = n_features

    @property
    def eta(self):
        return self.hyper.eta

    @property
    def classes(self):
        return tuple(int(c) + 1 for c in np.flatnonzero(np.isfinite(self.base_score)))

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"expected {self.n_features} features")
        return X

    def _leaf_values(self, X):
        trees = [t for rnd in self.rounds for _, t in rnd]
        if not trees:
            return np.zeros((X.shape[0], 0))
        if getattr(self, "_packed", None) is None:
            self._packed = _pack(trees)
            self._values = np.concatenate([t.value for t in trees])
        return self._values[_packed_apply(self._packed, X)]

    def staged_scores(self, X):
        X = self._check(X)
        V = self._leaf_values(X)
        scores = np.tile(self.base_score, (X.shape[0], 1))
        yield scores.copy()
        col = 0
        for rnd in self.rounds:
            for code, _ in rnd:
                scores[:, code - 1] += self.eta * V[:, col]
                col += 1
            yield scores.copy()

    def decision_function(self, X):
        *_, last = self.staged_scores(X)
        return last

    def staged_predict_proba(self, X):
        for s in self.staged_scores(X):
            yield _softmax_scores(s)

    def predict_proba(self, X):
        return _softmax_scores(self.decision_function(X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1) + 1

    def to_dict(self):
        return {
            "hyper": asdict(self.hyper),
            "n_features": self.n_features,
            "eta": self.eta,
            "base_score": [None if not np.isfinite(b) else float(b) for b in self.base_score],
            "rounds": [[[code, t.to_dict()] for code, t in rnd] for rnd in self.rounds],
        }

    @classmethod
    def from_dict(cls, doc):
        base = np.array([-np.inf if b is None else b for b in doc["base_score"]], dtype=float)
        rounds = [[(int(code), RegressionTree.from_dict(t)) for code, t in rnd] for rnd in doc["rounds"]]
        return cls(base, rounds, BoostHyper(**doc["hyper"]), int(doc["n_features"]))


def fit_gradient_boost(X, y, h=BoostHyper()):
    """Multiclass gradient boosting with Newton leaf weights.

    Every round fits one tree per class present in ``y`` to the softmax
    gradients ``p - y`` and hessians ``p (1 - p)`` of the scores at the
    start of the round.  Classes absent from training get probability 0.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    present = np.unique(y)
    if X.shape[0] < 2 or present.size < 2:
        raise SingleClassDataError("gradient boosting needs at least two classes")
    Y = _one_hot(y)
    base = np.full(N_MODES, -np.inf)
    base[present - 1] = 0.0
    scores = np.tile(base, (X.shape[0], 1))
    S = np.argsort(X, axis=0, kind="stable")
    rounds = []
    for _ in range(h.n_rounds):
        P = _softmax_scores(scores)
        rnd = []
        for code in present:
            k = int(code) - 1
            g = P[:, k] - Y[:, k]
            hess = P[:, k] * (1.0 - P[:, k])
            rnd.append((int(code), _grow_regression(X, S, g, hess, h)))
        for code, tree in rnd:
            scores[:, code - 1] += h.eta * tree.predict(X)
        rounds.append(rnd)
    return BoostedModel(base, rounds, h, X.shape[1])


def log_loss(P, y):
    """Mean multiclass negative log-likelihood of labels ``y`` under ``P``."""
    P = np.asarray(P, dtype=float)
    y = np.asarray(y)
    p = np.clip(P[np.arange(y.shape[0]), y - 1], 1e-300, 1.0)
    return float(-np.mean(np.log(p)))
