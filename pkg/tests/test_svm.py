import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modechoice.data import N_MODES
from modechoice.exceptions import (
    ConvergenceWarning,
    DimensionMismatchError,
    NonLinearKernelError,
    SingleClassDataError,
)
from modechoice.svm import (
    KernelSpec,
    SvmBinaryModel,
    SvmMulticlassModel,
    _constant_model,
    dual_objective,
    fit_svm_binary,
    fit_svm_multiclass,
    kkt_gap,
    linear_weight_importance,
    predict_svm,
    rbf_kernel,
)

LINEAR = KernelSpec("linear")


def _blobs(n_per=40, seed=0, centers=((0, 0), (3, 0), (0, 3)), spread=0.4):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c, spread, (n_per, 2)) for c in centers])
    y = np.repeat(np.arange(1, len(centers) + 1), n_per)
    return X, y


def _feasible(m, y, C):
    a = m.alpha
    assert np.all(a >= 0) and np.all(a <= C)
    assert abs(np.sum(a * y)) <= 1e-6


class TestKernel:
    def test_examples(self):
        x = np.array([0.3, -1.2])
        assert rbf_kernel(x, x, 0.7) == 1.0
        assert rbf_kernel(np.zeros(2), np.array([1.0, 0.0]), 1.0) == pytest.approx(np.exp(-1), abs=1e-15)
        assert rbf_kernel(np.zeros(3), np.full(3, 5.0), 1e-12) == pytest.approx(1.0)

    def test_dimension(self):
        with pytest.raises(DimensionMismatchError):
            rbf_kernel(np.zeros(2), np.zeros(3), 1.0)

    def test_bad_gamma(self):
        with pytest.raises(ValueError):
            KernelSpec("rbf", -1.0)
        with pytest.raises(ValueError):
            KernelSpec("poly")

    @settings(max_examples=20)
    @given(st.integers(0, 10_000), st.floats(0.01, 10.0))
    def test_psd(self, seed, gamma):
        X = np.random.default_rng(seed).normal(size=(20, 4))
        for k in (KernelSpec("rbf", gamma), LINEAR):
            K = k.matrix(X, X)
            np.testing.assert_allclose(K, K.T, atol=1e-14)
            assert np.linalg.eigvalsh(K).min() >= -1e-8

    def test_default_gamma(self):
        X = np.random.default_rng(1).normal(size=(30, 3))
        assert KernelSpec().resolve(X).gamma == pytest.approx(1 / (3 * X.var()))


def _exhaustive_dual(X, y, C, steps=21, rounds=3):
    """Coarse-to-fine grid search over the feasible dual set of 3+3 points."""
    K = X @ X.T
    Q = (y[:, None] * y[None, :]) * K
    pos, neg = np.flatnonzero(y > 0), np.flatnonzero(y < 0)
    lo, hi = np.zeros(5), np.full(5, C)
    best, best_a = -np.inf, None
    for _ in range(rounds):
        axes = [np.linspace(l, h, steps) for l, h in zip(lo, hi)]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 5)
        last = G[:, :3].sum(axis=1) - G[:, 3:].sum(axis=1)
        ok = (last >= 0) & (last <= C)
        A = np.zeros((ok.sum(), 6))
        A[:, pos] = G[ok, :3]
        A[:, neg[:2]] = G[ok, 3:]
        A[:, neg[2]] = last[ok]
        obj = A.sum(axis=1) - 0.5 * np.einsum("ni,ij,nj->n", A, Q, A)
        i = int(np.argmax(obj))
        if obj[i] > best:
            best, best_a = obj[i], A[i]
        width = (hi - lo) / (steps - 1) * 2
        centre = np.concatenate([best_a[pos], best_a[neg[:2]]])
        lo, hi = np.clip(centre - width, 0, C), np.clip(centre + width, 0, C)
    return best


class TestBinary:
    def test_two_point_geometry(self):
        X = np.array([[2.0, 1.0], [0.0, -1.0]])
        y = np.array([1.0, -1.0])
        m = fit_svm_binary(X, y, C=1e6, kernel=LINEAR, tol=1e-10)
        d = X[0] - X[1]
        w = m.w
        assert abs(w[0] * d[1] - w[1] * d[0]) < 1e-9 and w @ d > 0
        np.testing.assert_array_equal(np.sort(m.support_index), [0, 1])
        np.testing.assert_allclose(m.decision_function(X), [1.0, -1.0], atol=1e-8)
        assert m.decision_function(X.mean(axis=0, keepdims=True))[0] == pytest.approx(0.0, abs=1e-9)

    def test_six_point_exhaustive_dual(self):
        X = np.array([[0.0, 0.0], [1.0, 0.5], [0.4, 1.0], [1.2, 1.1], [0.1, 1.6], [1.5, 0.2]])
        y = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
        C = 1.0
        m = fit_svm_binary(X, y, C=C, kernel=LINEAR, tol=1e-8)
        _feasible(m, y, C)
        smo = dual_objective(m.alpha, y, X @ X.T)
        grid = _exhaustive_dual(X, y, C)
        assert smo >= grid - 1e-9
        assert smo - grid < 1e-3

    def test_separable_fixture_and_margin(self):
        rng = np.random.default_rng(12)
        Xp = rng.uniform(0, 1, (5, 2)) + [2.0, 2.0]
        Xn = rng.uniform(0, 1, (5, 2))
        X, y = np.vstack([Xp, Xn]), np.repeat([1.0, -1.0], 5)
        m = fit_svm_binary(X, y, C=1e6, kernel=LINEAR, tol=1e-9)
        assert np.all(np.sign(m.decision_function(X)) == y)
        theta = np.linspace(0, 2 * np.pi, 200_001)
        U = np.column_stack([np.cos(theta), np.sin(theta)])
        proj = X @ U.T
        margin = (proj[y > 0].min(axis=0) - proj[y < 0].max(axis=0)) / 2
        assert 1 / np.linalg.norm(m.w) == pytest.approx(margin.max(), rel=1e-5)

    def test_xor_rbf(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        m = fit_svm_binary(X, y, C=100.0, kernel=KernelSpec("rbf", 1.0))
        dv = m.decision_function(X)
        direct = np.array([sum(c * rbf_kernel(sv, x, 1.0) for c, sv in zip(m.dual_coef, m.support_vectors))
                           for x in X]) + m.bias
        np.testing.assert_allclose(dv, direct, rtol=1e-12)
        assert np.all(np.sign(dv) == y)

    def test_kkt_and_feasibility(self):
        X, y3 = _blobs(30, seed=3, spread=1.2)
        y = np.where(y3 == 1, 1.0, -1.0)
        for C in (0.1, 1.0, 10.0):
            m = fit_svm_binary(X, y, C=C, tol=1e-3)
            _feasible(m, y, C)
            K = m.kernel.matrix(X, X)
            assert m.converged
            assert kkt_gap(m.alpha, y, K, C) <= 1e-3 + 1e-12
            assert m.kkt_residual == pytest.approx(kkt_gap(m.alpha, y, K, C), abs=1e-9)

    def test_objective_non_decreasing(self):
        X, y3 = _blobs(25, seed=5, spread=1.0)
        y = np.where(y3 == 2, 1.0, -1.0)
        m = fit_svm_binary(X, y, C=5.0, record_objective=True)
        h = np.asarray(m.objective_history)
        assert h.size > 1
        assert np.all(np.diff(h) >= -1e-10)
        assert h[-1] == pytest.approx(dual_objective(m.alpha, y, m.kernel.matrix(X, X)), rel=1e-9)

    def test_not_converged_flag(self):
        X, y3 = _blobs(30, seed=1, spread=1.5)
        y = np.where(y3 == 1, 1.0, -1.0)
        with pytest.warns(ConvergenceWarning):
            m = fit_svm_binary(X, y, C=10.0, max_iter=3)
        assert not m.converged

    def test_single_class(self):
        with pytest.raises(SingleClassDataError):
            fit_svm_binary(np.zeros((3, 2)), np.ones(3))

    def test_permutation_invariance(self):
        X, y3 = _blobs(20, seed=8, spread=1.0)
        y = np.where(y3 == 3, 1.0, -1.0)
        perm = np.random.default_rng(0).permutation(len(y))
        a = fit_svm_binary(X, y, C=2.0, tol=1e-9)
        b = fit_svm_binary(X[perm], y[perm], C=2.0, kernel=a.kernel, tol=1e-9)
        grid = np.random.default_rng(1).normal(1, 2, (50, 2))
        np.testing.assert_allclose(a.decision_function(grid), b.decision_function(grid), atol=1e-6)

    def test_roundtrip(self):
        X, y3 = _blobs(15, seed=2)
        m = fit_svm_binary(X, np.where(y3 == 1, 1.0, -1.0))
        back = SvmBinaryModel.from_dict(json.loads(json.dumps(m.to_dict())))
        np.testing.assert_array_equal(back.decision_function(X), m.decision_function(X))

    def test_w_requires_linear(self):
        X, y3 = _blobs(10)
        m = fit_svm_binary(X, np.where(y3 == 1, 1.0, -1.0))
        with pytest.raises(NonLinearKernelError):
            m.w


class TestMulticlass:
    def test_two_classes(self):
        X, y = _blobs(30, seed=4, centers=((0, 0), (2, 2)), spread=0.8)
        y = np.where(y == 1, 2, 6)
        m = fit_svm_multiclass(X, y, C=1.0)
        active = [k + 1 for k, b in enumerate(m.binaries) if not b.degenerate]
        assert active == [2, 6]
        f = m.binaries[1].decision_function(X)
        clear = np.abs(f) > 0.05
        np.testing.assert_array_equal(m.predict(X)[clear], np.where(f > 0, 2, 6)[clear])

    def test_deterministic(self):
        X, y = _blobs(20, seed=6)
        a = fit_svm_multiclass(X, y, C=3.0)
        b = fit_svm_multiclass(X, y, C=3.0)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_three_blobs(self):
        X, y = _blobs(50, seed=7)
        m = fit_svm_multiclass(X, y, C=1.0)
        assert np.mean(m.predict(X) == y) >= 0.95

    def test_interior_point(self):
        X, y = _blobs(40, seed=9)
        m = fit_svm_multiclass(X, y, C=1.0)
        for code in (1, 2, 3):
            centre = X[y == code].mean(axis=0)
            i = int(np.argmin(np.linalg.norm(X - centre, axis=1)))
            label, dv = predict_svm(m, X[i])
            assert label == code and dv.shape == (N_MODES,)
            b = m.binaries[code - 1]
            direct = sum(c * rbf_kernel(sv, X[i], m.kernel.gamma)
                         for c, sv in zip(b.dual_coef, b.support_vectors)) + b.bias
            assert dv[code - 1] == pytest.approx(direct, rel=1e-10)

    def test_pool_matches_per_binary(self):
        X, y = _blobs(25, seed=10)
        m = fit_svm_multiclass(X, y, C=2.0)
        per = np.column_stack([b.decision_function(X) for b in m.binaries])
        np.testing.assert_allclose(m.decision_function(X), per, atol=1e-10)

    def test_single_class(self):
        X = np.random.default_rng(0).normal(size=(5, 2))
        m = fit_svm_multiclass(X, np.full(5, 4))
        np.testing.assert_array_equal(m.predict(X), 4)
        np.testing.assert_array_equal(m.predict_proba(X)[:, 3], 1.0)

    def test_dimension(self):
        X, y = _blobs(10)
        m = fit_svm_multiclass(X, y)
        with pytest.raises(DimensionMismatchError):
            predict_svm(m, np.zeros(3))

    def test_roundtrip(self):
        X, y = _blobs(15, seed=1)
        m = fit_svm_multiclass(X, y, C=2.0)
        back = SvmMulticlassModel.from_dict(json.loads(json.dumps(m.to_dict())))
        np.testing.assert_array_equal(back.predict(X), m.predict(X))


class TestLinearImportance:
    def test_absolute_weights(self):
        real = SvmBinaryModel(np.array([[0.0, 3.0, -4.0]]), np.array([1.0]), 0.0, 1.0, LINEAR)
        rest = [_constant_model(-1.0, 3, 1.0, LINEAR) for _ in range(7)]
        m = SvmMulticlassModel([real] + rest, 1.0, LINEAR)
        np.testing.assert_array_equal(linear_weight_importance(m), [0.0, 3.0, 4.0])
        assert linear_weight_importance(m, per_class=True).shape == (8, 3)

    def test_duplicated_columns(self):
        X, y = _blobs(30, seed=11, spread=0.8)
        Xd = np.column_stack([X, X[:, 0]])
        m = fit_svm_multiclass(Xd, y, C=1.0, kernel=LINEAR, tol=1e-6)
        fi = linear_weight_importance(m)
        assert fi[0] == pytest.approx(fi[2], rel=1e-4)

    def test_rbf_rejected(self):
        X, y = _blobs(10)
        with pytest.raises(NonLinearKernelError):
            linear_weight_importance(fit_svm_multiclass(X, y))
