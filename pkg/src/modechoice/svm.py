"""Support vector machines trained by sequential minimal optimization.

Binary problems solve the standard soft-margin dual

    min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K_ij

two coordinates at a time.  The working pair is the maximal violating
index ``i`` plus the ``j`` giving the largest second-order decrease.  The
solver stops when the KKT gap ``m(a) - M(a)`` drops below ``tol``.

Multiclass models are one-vs-rest over the eight mode codes.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from modechoice.data import N_MODES
from modechoice.exceptions import (
    ConvergenceWarning,
    DimensionMismatchError,
    NonLinearKernelError,
    SingleClassDataError,
)

_TAU = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float = None

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None:
            if not (np.isfinite(self.gamma) and self.gamma > 0):
                raise ValueError("rbf gamma must be finite and > 0")

    def resolve(self, X):
        """Fill in the default gamma ``1 / (p * Var(X))`` from training data."""
        if self.kind == "linear" or self.gamma is not None:
            return self
        X = np.asarray(X, dtype=float)
        var = X.var()
        return KernelSpec("rbf", 1.0 / (X.shape[1] * var) if var > 0 else 1.0)

    def matrix(self, A, B):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if A.shape[-1] != B.shape[-1]:
            raise DimensionMismatchError("kernel arguments have different dimensions")
        if self.kind == "linear":
            return A @ B.T
        if self.gamma is None:
            raise ValueError("rbf gamma unresolved; call resolve(X) first")
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
        return np.exp(-self.gamma * np.maximum(sq, 0.0))


def rbf_kernel(x, y, gamma):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatchError("rbf_kernel needs vectors of equal dimension")
    return float(np.exp(-gamma * np.sum((x - y) ** 2)))


def dual_objective(alpha, y, K):
    """Dual objective ``sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij`` (to be maximized)."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def kkt_gap(alpha, y, K, C):
    """Maximal KKT violation ``m(a) - M(a)`` (zero at an exact optimum)."""
    alpha = np.asarray(alpha, dtype=float)
    y = np.asarray(y, dtype=float)
    G = (y[:, None] * y[None, :] * K) @ alpha - 1.0
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    if not up.any() or not low.any():
        return 0.0
    v = -y * G
    return float(v[up].max() - v[low].min())


def _smo(K, y, C, tol, max_iter, record=False):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.diag(K).copy()
    it = 0
    converged = False
    history = [] if record else None
    while it < max_iter:
        yG = -y * G
        up = np.where(y > 0, alpha < C, alpha > 0)
        low = np.where(y > 0, alpha > 0, alpha < C)
        m_vals = np.where(up, yG, -np.inf)
        i = int(np.argmax(m_vals))
        m = m_vals[i]
        M = np.min(np.where(low, yG, np.inf))
        if m - M < tol:
            converged = True
            break
        Ki = K[i]
        b = m - yG
        cand = low & (b > 0)
        a = QD[i] + QD - 2.0 * Ki
        a = np.where(a > 0, a, _TAU)
        j = int(np.argmin(np.where(cand, -(b * b) / a, np.inf)))
        Kj = K[j]
        ai_old, aj_old = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        quad = max(QD[i] + QD[j] - 2.0 * Ki[j], _TAU)
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            s = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if s > C:
                if ai > C:
                    ai, aj = C, s - C
            elif aj < 0:
                aj, ai = 0.0, s
            if s > C:
                if aj > C:
                    aj, ai = C, s - C
            elif ai < 0:
                ai, aj = 0.0, s
        dai, daj = ai - ai_old, aj - aj_old
        alpha[i], alpha[j] = ai, aj
        G += (yi * dai) * (y * Ki) + (yj * daj) * (y * Kj)
        it += 1
        if record:
            # sum(a) - 1/2 a'Qa  ==  (sum(a) - a'G) / 2  since G = Qa - e
            history.append(0.5 * (alpha.sum() - alpha @ G))
    # bias from free vectors, else the midpoint of the feasible interval
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(np.mean(yG[free]))
    else:
        up = np.where(y > 0, alpha < C, alpha > 0)
        low = np.where(y > 0, alpha > 0, alpha < C)
        hi = float(np.min(yG[up])) if up.any() else float(np.max(yG[low]))
        lo = float(np.max(yG[low])) if low.any() else hi
        rho = 0.5 * (hi + lo)
    up = np.where(y > 0, alpha < C, alpha > 0)
    low = np.where(y > 0, alpha > 0, alpha < C)
    gap = float((-yG)[up].max() - (-yG)[low].min()) if up.any() and low.any() else 0.0
    return alpha, -rho, it, converged, history, gap


@dataclass(eq=False)
class SvmBinaryModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray        # alpha_i * y_i of the support vectors
    bias: float
    C: float
    kernel: KernelSpec
    converged: bool = True
    iterations: int = 0
    kkt_residual: float = 0.0
    degenerate: bool = False
    support_index: np.ndarray = None

    @property
    def w(self):
        """Explicit weight vector (linear kernel only)."""
        if self.kernel.kind != "linear":
            raise NonLinearKernelError("explicit weights exist only for the linear kernel")
        if self.support_vectors.shape[0] == 0:
            return np.zeros(self.support_vectors.shape[1])
        return self.dual_coef @ self.support_vectors

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.support_vectors.shape[1]:
            raise DimensionMismatchError(f"expected {self.support_vectors.shape[1]} features")
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        return self.kernel.matrix(X, self.support_vectors) @ self.dual_coef + self.bias

    def to_dict(self):
        return {
            "kernel": {"kind": self.kernel.kind, "gamma": self.kernel.gamma},
            "C": self.C,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "n_features": int(self.support_vectors.shape[1]),
        }

    @classmethod
    def from_dict(cls, doc):
        p = int(doc["n_features"])
        return cls(
            support_vectors=np.array(doc["support_vectors"], dtype=float).reshape(-1, p),
            dual_coef=np.array(doc["dual_coef"], dtype=float),
            bias=float(doc["bias"]),
            C=float(doc["C"]),
            kernel=KernelSpec(doc["kernel"]["kind"], doc["kernel"]["gamma"]),
            converged=bool(doc.get("converged", True)),
            degenerate=bool(doc.get("degenerate", False)),
        )


def _constant_model(sign, n_features, C, kernel):
    return SvmBinaryModel(np.zeros((0, n_features)), np.zeros(0), float(sign), C, kernel,
                          degenerate=True, support_index=np.zeros(0, dtype=np.int64))


def _fit_binary_from_kernel(X, y, K, C, kernel, tol, max_iter, record=False):
    y = np.asarray(y, dtype=float)
    if not (np.any(y > 0) and np.any(y < 0)):
        raise SingleClassDataError("binary SVM needs both labels")
    if not C > 0:
        raise ValueError("C must be > 0")
    alpha, b, it, converged, history, gap = _smo(K, y, float(C), tol, max_iter, record)
    if not converged:
        warnings.warn(f"SMO stopped after {it} iterations without meeting tol={tol}",
                      ConvergenceWarning, stacklevel=3)
    sv = np.flatnonzero(alpha > 0)
    model = SvmBinaryModel(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * y)[sv],
        bias=b,
        C=float(C),
        kernel=kernel,
        converged=converged,
        iterations=it,
        kkt_residual=gap,
        support_index=sv,
    )
    model.alpha = alpha
    model.objective_history = history
    return model


def fit_svm_binary(X, y, C=1.0, kernel=KernelSpec(), tol=1e-3, max_iter=1_000_000,
                   record_objective=False):
    """Train a binary SVM on labels in {-1, +1}.

    Parameters
    ----------
    X : ndarray of shape (n, p)
    y : ndarray of shape (n,)
        Labels in {-1, +1}; both must occur.
    C : float
        Box constraint, > 0.
    kernel : KernelSpec
        An rbf kernel without gamma gets ``1 / (p * Var(X))``.
    tol : float
        Stopping threshold on the KKT gap.
    max_iter : int
        Pair updates before giving up with a :class:`ConvergenceWarning`.
    record_objective : bool
        Keep the dual objective after every update in ``objective_history``.

    Returns
    -------
    SvmBinaryModel
        Also carries the full ``alpha`` vector of the training rows.
    """
    X = np.asarray(X, dtype=float)
    kernel = kernel.resolve(X)
    return _fit_binary_from_kernel(X, y, kernel.matrix(X, X), C, kernel, tol, max_iter,
                                   record_objective)


class SvmMulticlassModel:
    """Eight one-vs-rest binary models in mode-code order."""

    kind = "svm"

    def __init__(self, binaries, C, kernel):
        if len(binaries) != N_MODES:
            raise ValueError(f"need {N_MODES} binary models")
        self.binaries = list(binaries)
        self.C = C
        self.kernel = kernel
        self._build_pool()

    def _build_pool(self):
        # One kernel evaluation against the union of support vectors serves
        # all eight binary models.
        p = self.n_features
        rows = [b.support_vectors for b in self.binaries]
        stacked = np.vstack(rows) if rows else np.zeros((0, p))
        if stacked.shape[0] == 0:
            self._pool = np.zeros((0, p))
            self._coef = np.zeros((0, N_MODES))
        else:
            self._pool, inverse = np.unique(stacked, axis=0, return_inverse=True)
            inverse = np.asarray(inverse).reshape(-1)
            self._coef = np.zeros((self._pool.shape[0], N_MODES))
            start = 0
            for k, b in enumerate(self.binaries):
                stop = start + b.support_vectors.shape[0]
                np.add.at(self._coef[:, k], inverse[start:stop], b.dual_coef)
                start = stop
        self._bias = np.array([b.bias for b in self.binaries])

    @property
    def n_features(self):
        return int(self.binaries[0].support_vectors.shape[1])

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"expected {self.n_features} features")
        if self._pool.shape[0] == 0:
            return np.tile(self._bias, (X.shape[0], 1))
        return self.kernel.matrix(X, self._pool) @ self._coef + self._bias

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1) + 1

    def predict_proba(self, X):
        """One-hot of the predicted class (SVM scores are not calibrated)."""
        lab = self.predict(X)
        P = np.zeros((lab.shape[0], N_MODES))
        P[np.arange(lab.shape[0]), lab - 1] = 1.0
        return P

    def to_dict(self):
        return {"C": self.C, "kernel": {"kind": self.kernel.kind, "gamma": self.kernel.gamma},
                "binaries": [b.to_dict() for b in self.binaries]}

    @classmethod
    def from_dict(cls, doc):
        return cls([SvmBinaryModel.from_dict(b) for b in doc["binaries"]], float(doc["C"]),
                   KernelSpec(doc["kernel"]["kind"], doc["kernel"]["gamma"]))


def fit_svm_multiclass(X, y, C=1.0, kernel=KernelSpec(), tol=1e-3, max_iter=1_000_000):
    """One-vs-rest SVM over mode codes.

    Classes absent from ``y`` get a constant negative model.  With a single
    class present that class gets a constant positive model, so prediction
    always returns it.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    kernel = kernel.resolve(X)
    present = set(np.unique(y).tolist())
    p = X.shape[1]
    if len(present) < 2:
        binaries = [_constant_model(1.0 if c in present else -1.0, p, C, kernel)
                    for c in range(1, N_MODES + 1)]
        return SvmMulticlassModel(binaries, C, kernel)
    K = kernel.matrix(X, X)
    binaries = []
    for code in range(1, N_MODES + 1):
        if code not in present:
            binaries.append(_constant_model(-1.0, p, C, kernel))
            continue
        yk = np.where(y == code, 1.0, -1.0)
        binaries.append(_fit_binary_from_kernel(X, yk, K, C, kernel, tol, max_iter))
    return SvmMulticlassModel(binaries, C, kernel)


def predict_svm(m, x):
    """Label and 8-entry decision vector for one row (or arrays for a matrix)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        dv = m.decision_function(x[None, :])[0]
        return int(np.argmax(dv)) + 1, dv
    dv = m.decision_function(x)
    return np.argmax(dv, axis=1) + 1, dv


def linear_weight_importance(m, per_class=False):
    """Absolute linear weights; the overall score is the max over classes."""
    if m.kernel.kind != "linear":
        raise NonLinearKernelError("weight importance requires a linear kernel; use permutation importance")
    W = np.abs(np.vstack([b.w for b in m.binaries]))
    return W if per_class else W.max(axis=0)
