import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emorec import svm
from emorec.errors import DataError
from emorec.svm import KernelSpec, kernel_eval, resolve_gamma, train_binary

XOR_POINTS = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
XOR_SIGNS = np.array([-1.0, -1.0, 1.0, 1.0])

# Documented toy-problem grid for the dual oracle: 4 points with integer
# coordinates in [0,2]^2, two classes, C=10.  Covers separable, non-separable,
# collinear and one-vs-three geometries under both kernels.
TOY_PROBLEMS = [
    ([(0, 0), (1, 1), (1, 0), (0, 1)], [-1, -1, 1, 1], "rbf", 0.5),
    ([(0, 0), (1, 1), (1, 0), (0, 1)], [-1, -1, 1, 1], "rbf", 2.0),
    ([(0, 0), (0, 1), (2, 1), (2, 2)], [1, 1, -1, -1], "linear", None),
    ([(0, 0), (1, 1), (2, 2), (0, 2)], [1, 1, -1, -1], "linear", None),
    ([(0, 0), (1, 2), (2, 0), (2, 2)], [1, -1, -1, -1], "rbf", 1.0),
    ([(0, 1), (1, 0), (1, 2), (2, 1)], [1, -1, 1, -1], "rbf", 0.5),
    ([(0, 0), (2, 0), (0, 2), (2, 2)], [1, 1, -1, -1], "linear", None),
    ([(0, 0), (1, 0), (1, 1), (2, 1)], [1, -1, 1, -1], "linear", None),
    ([(0, 2), (1, 1), (2, 0), (2, 2)], [1, 1, 1, -1], "rbf", 1.0),
    ([(0, 0), (0, 2), (1, 1), (2, 0)], [-1, 1, -1, 1], "rbf", 0.25),
]


def toy_spec(kind, gamma, C=10.0):
    if gamma is None:
        return KernelSpec(kind=kind, C=C)
    return KernelSpec(kind=kind, C=C, gamma_mode="fixed", gamma_value=gamma)


def dual_grid_search(K, y, C, pivot=3):
    """Exhaustive grid search over the 4-point dual.

    Three coordinates are free; the pivot follows from the equality
    constraint.  A coarse pass over the full box is refined twice around the
    running argmax (sound because the dual objective is concave over the
    convex feasible set).
    """
    y = np.asarray(y, dtype=np.float64)
    Q = (y[:, None] * y[None, :]) * K
    free = [i for i in range(4) if i != pivot]

    def search(centers, half, step):
        axes = [np.arange(max(0.0, c - half), min(C, c + half) + step / 2, step)
                for c in centers]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        a_pivot = -(G * y[free]).sum(axis=1) * y[pivot]
        ok = (a_pivot >= -1e-9) & (a_pivot <= C + 1e-9)
        G, a_pivot = G[ok], np.clip(a_pivot[ok], 0, C)
        A = np.zeros((len(G), 4))
        A[:, free] = G
        A[:, pivot] = a_pivot
        W = A.sum(axis=1) - 0.5 * np.einsum("mi,ij,mj->m", A, Q, A)
        k = int(np.argmax(W))
        return A[k], float(W[k])

    A, W = search([C / 2] * 3, C / 2, 0.25)
    A, W = search(A[free], 0.5, 0.0125)
    A, W = search(A[free], 0.025, 0.000625)
    return A, W


class TestResolveGamma:
    def test_unit_variance(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 338))
        X = (X - X.mean()) / X.std()
        assert abs(resolve_gamma(X, KernelSpec()) - 1 / 338) < 1e-12

    def test_scaling_by_two_quarters_gamma(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(20, 7))
        g1 = resolve_gamma(X, KernelSpec())
        g2 = resolve_gamma(2 * X, KernelSpec())
        assert abs(g2 - g1 / 4) < 1e-12 * g1

    def test_matches_two_pass_variance(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(-3, 5, size=(10, 5))
        mu = sum(float(v) for v in X.reshape(-1)) / X.size
        var = sum((float(v) - mu) ** 2 for v in X.reshape(-1)) / X.size
        assert abs(resolve_gamma(X, KernelSpec()) - 1 / (5 * var)) < 1e-12

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="variance"):
            resolve_gamma(np.full((4, 3), 2.5), KernelSpec())

    def test_fixed_mode(self):
        spec = KernelSpec(gamma_mode="fixed", gamma_value=0.7)
        assert resolve_gamma(np.zeros((2, 2)), spec) == 0.7


class TestKernelEval:
    def test_rbf_self_is_one(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=10)
        assert kernel_eval(x, x, KernelSpec(), gamma=0.3) == 1.0

    def test_linear_dot(self):
        assert kernel_eval([1.0, 2.0], [3.0, 4.0],
                           KernelSpec(kind="linear")) == 11.0

    def test_rbf_known_value(self):
        got = kernel_eval([0.0, 0.0], [1.0, 0.0], KernelSpec(), gamma=0.5)
        assert abs(got - np.exp(-0.5)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            kernel_eval([1.0], [1.0, 2.0], KernelSpec(kind="linear"))

    def test_matrix_agrees_with_scalar(self):
        rng = np.random.default_rng(4)
        A, B = rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
        spec = KernelSpec()
        K = svm.kernel_matrix(A, B, spec, gamma=0.2)
        for i in range(3):
            for j in range(4):
                assert abs(K[i, j] - kernel_eval(A[i], B[j], spec, 0.2)) < 1e-12


class TestTrainBinary:
    def test_two_point_separable(self):
        X = np.array([[0.0, 0.0], [2.0, 0.0]])
        y = np.array([-1.0, 1.0])
        model = train_binary(X, y, KernelSpec(kind="linear", C=10.0))
        assert len(model.dual_coef) == 2  # both are support vectors
        K = svm.kernel_matrix(X, model.support_vectors,
                              KernelSpec(kind="linear"), None)
        decisions = K @ model.dual_coef + model.bias
        assert np.all(np.sign(decisions) == y)

    def test_xor_rbf_trains_to_100(self):
        spec = KernelSpec(kind="rbf", C=10.0)
        model = train_binary(XOR_POINTS, XOR_SIGNS, spec)
        gamma = resolve_gamma(XOR_POINTS, spec)
        K = svm.kernel_matrix(XOR_POINTS, model.support_vectors, spec, gamma)
        decisions = K @ model.dual_coef + model.bias
        assert np.all(np.sign(decisions) == XOR_SIGNS)

    def test_dual_feasibility(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 4))
        y = np.sign(X[:, 0] + 0.3 * rng.normal(size=40))
        y[y == 0] = 1.0
        spec = KernelSpec(kind="rbf", C=10.0)
        model = train_binary(X, y, spec)
        assert model.converged
        alpha = np.abs(model.dual_coef)
        assert np.all(alpha >= 0) and np.all(alpha <= 10.0 + 1e-9)
        assert abs(model.dual_coef.sum()) < 1e-6

    def test_single_class_rejected(self):
        X = np.zeros((3, 2))
        with pytest.raises(DataError, match="both classes"):
            train_binary(X, np.ones(3), KernelSpec())

    def test_non_finite_rejected(self):
        X = np.array([[0.0, np.inf], [1.0, 2.0]])
        with pytest.raises(DataError, match="non-finite"):
            train_binary(X, np.array([1.0, -1.0]), KernelSpec(kind="linear"))

    def test_duplicated_points_per_class(self):
        # classes made of duplicated points train to 100% with rbf, C=10
        X = np.repeat(np.array([[0.0, 0.0], [1.0, 1.0]]), 10, axis=0)
        y = np.repeat([1.0, -1.0], 10)
        spec = KernelSpec(kind="rbf", C=10.0)
        model = train_binary(X, y, spec)
        gamma = resolve_gamma(X, spec)
        K = svm.kernel_matrix(X, model.support_vectors, spec, gamma)
        assert np.all(np.sign(K @ model.dual_coef + model.bias) == y)


class TestDualOracle:
    @pytest.mark.parametrize("points,labels,kind,gamma", TOY_PROBLEMS)
    def test_objective_matches_grid_search(self, points, labels, kind, gamma):
        X = np.array(points, dtype=np.float64)
        y = np.array(labels, dtype=np.float64)
        spec = toy_spec(kind, gamma)
        g = gamma if kind == "rbf" else None
        K = svm.kernel_matrix(X, X, spec, g)
        _, w_oracle = dual_grid_search(K, y, spec.C)
        model = train_binary(X, y, spec, gamma=g)
        assert model.converged
        assert abs(model.objective - w_oracle) < 1e-2


class TestMulticlass:
    def test_three_blobs_linear(self):
        rng = np.random.default_rng(6)
        centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        X = np.concatenate([rng.normal(c, 0.5, size=(30, 2)) for c in centers])
        labels = np.repeat([0, 1, 2], 30)
        model = svm.train_multiclass(X, labels, KernelSpec(kind="linear", C=10.0))
        acc = float((svm.predict(model, X) == labels).mean())
        assert acc >= 0.99
        # sanity oracle: classes this separated agree with nearest centroid
        centroid_pred = np.argmin(
            ((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
        assert float((centroid_pred == labels).mean()) == 1.0

    def test_one_sample_per_class_rbf(self):
        X = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]])
        labels = np.arange(4)
        model = svm.train_multiclass(X, labels, KernelSpec(kind="rbf", C=10.0))
        np.testing.assert_array_equal(svm.predict(model, X), labels)

    def test_xor_multiclass_wrapper(self):
        labels = np.array([0, 0, 1, 1])
        model = svm.train_multiclass(XOR_POINTS, labels,
                                     KernelSpec(kind="rbf", C=10.0))
        np.testing.assert_array_equal(svm.predict(model, XOR_POINTS), labels)

    def test_tie_breaks_to_lower_code(self):
        model = svm.SvmModel(kernel=KernelSpec(kind="linear"), gamma=None,
                             classes=[0, 1, 2], strategy="ovr", n_features=2)
        zero = svm.BinarySvm(support_vectors=np.zeros((1, 2)),
                             dual_coef=np.zeros(1), bias=0.0, objective=0.0,
                             n_passes=0, converged=True)
        model.binaries = [zero, zero, zero]
        assert svm.predict(model, np.array([[1.0, 1.0]]))[0] == 0

    def test_argmax_invariant_under_constant_shift(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(30, 3))
        labels = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0).astype(int)
        model = svm.train_multiclass(X, labels, KernelSpec(kind="rbf", C=10.0))
        scores = svm.decision_values(model, X)
        base = scores.argmax(axis=1)
        shifted = (scores + 3.21).argmax(axis=1)
        np.testing.assert_array_equal(base, shifted)

    def test_decision_invariant_to_sv_order(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(20, 3))
        labels = (X[:, 0] > 0).astype(int)
        model = svm.train_multiclass(X, labels, KernelSpec(kind="rbf", C=10.0))
        before = svm.decision_values(model, X)
        for b in model.binaries:
            perm = rng.permutation(len(b.dual_coef))
            b.support_vectors = b.support_vectors[perm]
            b.dual_coef = b.dual_coef[perm]
        after = svm.decision_values(model, X)
        np.testing.assert_allclose(before, after, atol=1e-9)

    def test_ovo_strategy(self):
        rng = np.random.default_rng(9)
        centers = np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]])
        X = np.concatenate([rng.normal(c, 0.4, size=(20, 2)) for c in centers])
        labels = np.repeat([0, 1, 2], 20)
        model = svm.train_multiclass(X, labels,
                                     KernelSpec(kind="linear", C=10.0),
                                     strategy="ovo")
        assert len(model.binaries) == 3
        assert float((svm.predict(model, X) == labels).mean()) >= 0.99

    def test_prediction_deterministic(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(25, 4))
        labels = (X[:, 0] > 0).astype(int)
        model = svm.train_multiclass(X, labels, KernelSpec(kind="rbf", C=10.0))
        p1 = svm.predict(model, X)
        p2 = svm.predict(model, X)
        np.testing.assert_array_equal(p1, p2)

    def test_feature_dim_mismatch(self):
        model = svm.train_multiclass(XOR_POINTS, [0, 0, 1, 1],
                                     KernelSpec(kind="rbf", C=10.0))
        with pytest.raises(DataError, match="feature dim"):
            svm.predict(model, np.zeros((1, 5)))


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(30, 6))
        labels = (X[:, 0] > 0).astype(int) * 2
        model = svm.train_multiclass(X, labels, KernelSpec(kind="rbf", C=10.0))
        path = tmp_path / "model.bin"
        svm.save_svm(path, model, pipeline_config={"pipeline": {"n_mfcc": 13}})
        back, meta = svm.load_svm(path)
        assert meta == {"pipeline": {"n_mfcc": 13}}
        assert back.classes == model.classes
        np.testing.assert_allclose(svm.decision_values(back, X),
                                   svm.decision_values(model, X), rtol=1e-12)

    def test_summary_mentions_counts(self):
        model = svm.train_multiclass(XOR_POINTS, [0, 0, 1, 1],
                                     KernelSpec(kind="rbf", C=10.0))
        text = model.summary()
        assert "support vectors" in text
        assert "objective" in text


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=15, deadline=None)
def test_kkt_holds_for_random_problems(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 25))
    X = rng.normal(size=(n, 3))
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    if len(set(y)) < 2:
        y[0] = -y[0]
    spec = KernelSpec(kind="rbf", C=10.0)
    model = train_binary(X, y, spec)
    alpha = np.abs(model.dual_coef)
    assert np.all(alpha <= 10.0 + 1e-9)
    assert abs(model.dual_coef.sum()) < 1e-6
    if model.converged:
        gamma = resolve_gamma(X, spec)
        K = svm.kernel_matrix(X, model.support_vectors, spec, gamma)
        decisions = K @ model.dual_coef + model.bias
        margins = y * decisions
        # support vectors strictly inside (0, C) must sit on the margin
        for sv_dc, sv in zip(model.dual_coef, model.support_vectors):
            a = abs(sv_dc)
            if 1e-6 < a < 10.0 - 1e-6:
                i = np.where((X == sv).all(axis=1))[0][0]
                assert abs(margins[i] - 1.0) < 2e-3
