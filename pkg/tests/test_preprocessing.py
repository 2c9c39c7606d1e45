import numpy as np
import pytest

from modlearn.datasets import DenseDesignMatrix
from modlearn.preprocessing import (PCA, ZCA, GlobalContrastNormalize,
                                    Pipeline, PreprocessingError, Standardize,
                                    fit_apply)


def correlated_data(n=200, d=8, seed=0):
    rng = np.random.default_rng(seed)
    mixing = rng.normal(size=(d, d))
    return rng.normal(size=(n, d)) @ mixing + rng.normal(size=d) * 3.0


class TestStandardize:
    def test_example(self):
        ds = fit_apply(Standardize(), DenseDesignMatrix([[0.0], [2.0]]), True)
        np.testing.assert_array_equal(ds.X, [[-1.0], [1.0]])

    def test_constant_column_only_centered(self):
        ds = DenseDesignMatrix([[5.0, 1.0], [5.0, 3.0]])
        fit_apply(Standardize(), ds, True)
        np.testing.assert_array_equal(ds.X[:, 0], [0.0, 0.0])

    def test_idempotent(self):
        X = correlated_data()
        ds = fit_apply(Standardize(), DenseDesignMatrix(X), True)
        once = ds.X.copy()
        # standardizing already standardized data changes nothing
        twice = fit_apply(Standardize(), ds, True).X
        np.testing.assert_allclose(twice, once, rtol=0, atol=1e-10)

    def test_unfitted_apply(self):
        with pytest.raises(PreprocessingError, match="fitted"):
            Standardize().apply(DenseDesignMatrix([[1.0]]), can_fit=False)

    def test_reuses_training_statistics(self):
        pre = Standardize()
        fit_apply(pre, DenseDesignMatrix([[0.0], [2.0]]), True)
        test = fit_apply(pre, DenseDesignMatrix([[4.0]]), False)
        np.testing.assert_array_equal(test.X, [[3.0]])


class TestGCN:
    def test_rows_centered_and_scaled(self):
        X = correlated_data(50, 6, seed=1)
        ds = fit_apply(GlobalContrastNormalize(scale=2.5), DenseDesignMatrix(X),
                       True)
        np.testing.assert_allclose(ds.X.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(ds.X, axis=1), 2.5,
                                   rtol=0, atol=1e-10)

    def test_flat_row_left_unscaled(self):
        ds = fit_apply(GlobalContrastNormalize(), DenseDesignMatrix(
            [[3.0, 3.0, 3.0]]), True)
        np.testing.assert_array_equal(ds.X, [[0.0, 0.0, 0.0]])


class TestPCA:
    def test_full_rank_reconstruction(self):
        X = correlated_data()
        pca = PCA(8)
        Z = fit_apply(pca, DenseDesignMatrix(X), True).X
        err = np.max(np.abs(pca.inverse(Z) - X))
        assert err < 1e-8

    def test_projection_matches_eigenvectors(self):
        X = correlated_data(seed=2)
        pca = PCA(3)
        Z = fit_apply(pca, DenseDesignMatrix(X), True).X
        assert Z.shape == (200, 3)
        # projected coordinates are uncorrelated, variances descending
        C = np.cov(Z, rowvar=False, bias=True)
        np.testing.assert_allclose(C, np.diag(np.diag(C)), atol=1e-8)
        assert np.all(np.diff(np.diag(C)) <= 0)
        # they capture the top eigenvalues of the sample covariance
        top = np.sort(np.linalg.eigvalsh(np.cov(X, rowvar=False,
                                                bias=True)))[::-1][:3]
        np.testing.assert_allclose(np.diag(C), top, rtol=1e-10)

    def test_too_many_components(self):
        with pytest.raises(PreprocessingError):
            fit_apply(PCA(5), DenseDesignMatrix(np.zeros((3, 2))), True)


class TestZCA:
    def test_whitened_covariance_is_identity(self):
        X = correlated_data()
        out = fit_apply(ZCA(eps=1e-8), DenseDesignMatrix(X), True).X
        C = np.cov(out, rowvar=False, bias=True)
        assert np.max(np.abs(C - np.eye(8))) < 1e-6

    def test_whitener_is_symmetric_inverse_square_root(self):
        X = correlated_data(seed=3)
        zca = ZCA(eps=1e-3)
        zca.fit(X)
        W = zca.whitener
        C = np.cov(X, rowvar=False, bias=True) + 1e-3 * np.eye(8)
        np.testing.assert_allclose(W, W.T, atol=1e-12)
        np.testing.assert_allclose(W @ W @ C, np.eye(8), atol=1e-9)
        assert np.all(np.linalg.eigvalsh(W) > 0)

    def test_preserves_dimension(self):
        X = correlated_data(30, 5)
        assert fit_apply(ZCA(), DenseDesignMatrix(X), True).X.shape == (30, 5)


class TestPipeline:
    def test_order_and_state(self):
        X = correlated_data(seed=4)
        pipe = Pipeline([Standardize(), PCA(4)])
        out = fit_apply(pipe, DenseDesignMatrix(X), True).X
        s = Standardize()
        s.fit(X)
        p = PCA(4)
        p.fit(s.transform(X))
        np.testing.assert_allclose(out, p.transform(s.transform(X)),
                                   atol=1e-12)
        state = pipe.items[1].get_state()
        assert set(state) == {"mean", "components", "variances"}
