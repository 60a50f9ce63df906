import numpy as np
import pytest

from utils.data_model import CATEGORICAL, FeatureSpec
from utils.errors import ModelFormatError, SchemaError
from utils.kernels import (
    CLINICAL,
    LINEAR,
    RBF,
    ROW_BLOCK,
    KernelConfig,
    cross_gram,
    fit_kernel,
    gram,
    kernel_eval,
    median_heuristic,
)


def clinical_config(X, specs=None):
    specs = specs or tuple(FeatureSpec(f'x{j}') for j in range(X.shape[1]))
    return fit_kernel(KernelConfig(CLINICAL), X, specs)


def test_linear_dot_product():
    assert kernel_eval(KernelConfig(LINEAR), [1.0, 2.0], [3.0, 4.0]) == 11.0


def test_rbf_and_clinical_self_similarity(rng):
    a = rng.standard_normal(4)
    assert kernel_eval(KernelConfig(RBF, sigma=0.7), a, a) == 1.0
    X = rng.standard_normal((10, 4))
    config = clinical_config(X)
    assert kernel_eval(config, X[3], X[3]) == 1.0


def test_clinical_range_endpoint_is_zero():
    X = np.array([[0.0], [2.0], [5.0]])
    config = clinical_config(X)
    assert kernel_eval(config, [0.0], [5.0]) == 0.0
    assert kernel_eval(config, [0.0], [2.0]) == pytest.approx(0.6)


def test_clinical_clips_values_outside_training_range():
    config = clinical_config(np.array([[0.0], [4.0]]))
    assert kernel_eval(config, [-3.0], [4.0]) == 0.0
    assert kernel_eval(config, [9.0], [4.0]) == 1.0


def test_clinical_zero_range_feature_is_an_equality_test():
    config = clinical_config(np.array([[2.0], [2.0]]))
    assert kernel_eval(config, [2.0], [2.0]) == 1.0
    assert kernel_eval(config, [2.0], [3.0]) == 0.0
    assert kernel_eval(config, [1.0], [3.0]) == 0.0


def test_clinical_zero_range_column_in_cross_gram():
    X = np.array([[2.0, 0.0], [2.0, 1.0]])
    config = clinical_config(X)
    K = cross_gram(config, X, np.array([[2.0, 0.0], [7.0, 0.0]]))
    assert np.allclose(K, [[1.0, 0.5], [0.5, 0.0]])


def test_clinical_mixes_categorical_and_continuous():
    specs = (FeatureSpec('age'), FeatureSpec('group', CATEGORICAL, ('C1', 'C2', 'C3')))
    X = np.array([[20.0, 0], [60.0, 1], [40.0, 2]])
    config = clinical_config(X, specs)
    assert kernel_eval(config, [20.0, 0], [40.0, 0]) == pytest.approx(0.75)
    assert kernel_eval(config, [20.0, 0], [40.0, 1]) == pytest.approx(0.25)


def test_kernels_are_symmetric(rng):
    X = rng.standard_normal((6, 3))
    for config in (KernelConfig(LINEAR), KernelConfig(RBF, sigma=1.3), clinical_config(X)):
        for a, b in zip(X, X[::-1]):
            assert kernel_eval(config, a, b) == kernel_eval(config, b, a)


def test_gram_single_row_includes_ridge():
    G = gram(KernelConfig(RBF, sigma=1.0, ridge=1e-3), np.array([[0.5, -0.5]]))
    assert G.K.shape == (1, 1)
    assert G.K[0, 0] == 1.0 + 1e-3


def test_gram_identical_rows():
    G = gram(KernelConfig(RBF, sigma=1.0, ridge=0.0), np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert G.K[0, 1] == 1.0


def test_gram_is_exactly_symmetric_and_psd(rng):
    X = rng.standard_normal((ROW_BLOCK + 40, 3))
    for config in (KernelConfig(RBF, sigma=median_heuristic(X)), KernelConfig(LINEAR), clinical_config(X)):
        K = gram(config, X).K
        assert np.array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-9


def test_gram_is_thread_count_independent(rng):
    X = rng.standard_normal((2 * ROW_BLOCK + 17, 4))
    config = KernelConfig(RBF, sigma=2.0)
    assert np.array_equal(gram(config, X, n_threads=1).K, gram(config, X, n_threads=4).K)


def test_gram_matvec(rng):
    X = rng.standard_normal((20, 2))
    G = gram(KernelConfig(LINEAR), X)
    v = rng.standard_normal(20)
    assert np.array_equal(G.matvec(v), G.K @ v)


def test_cross_gram_on_training_rows_equals_gram(rng):
    X = rng.standard_normal((30, 3))
    for config in (KernelConfig(RBF, sigma=1.1, ridge=0.0), KernelConfig(LINEAR, ridge=0.0), clinical_config(X)):
        config = KernelConfig(config.kind, config.sigma, config.specs, ridge=0.0)
        assert np.allclose(cross_gram(config, X, X), gram(config, X).K, rtol=0, atol=1e-12)
    assert np.array_equal(cross_gram(KernelConfig(LINEAR), X, X[:5]), X[:5] @ X.T)


def test_cross_gram_shape_and_mismatch(rng):
    X = rng.standard_normal((8, 3))
    config = KernelConfig(RBF, sigma=1.0)
    assert cross_gram(config, X, X[:2]).shape == (2, 8)
    with pytest.raises(SchemaError):
        cross_gram(config, X, rng.standard_normal((2, 4)))
    with pytest.raises(SchemaError):
        kernel_eval(config, [1.0, 2.0], [1.0])


def test_rbf_needs_a_bandwidth(rng):
    with pytest.raises(SchemaError, match='bandwidth'):
        gram(KernelConfig(RBF), rng.standard_normal((3, 2)))
    assert fit_kernel(KernelConfig(RBF), rng.standard_normal((10, 2))).sigma > 0


def test_median_heuristic_degenerate_cases():
    assert median_heuristic(np.zeros((1, 3))) == 1.0
    assert median_heuristic(np.zeros((4, 3))) == 1.0
    assert median_heuristic(np.array([[0.0], [3.0]])) == 3.0


def test_config_round_trip_and_unknown_kind():
    config = KernelConfig(RBF, sigma=0.25, specs=(FeatureSpec('a'),))
    assert KernelConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ModelFormatError, match='polynomial'):
        KernelConfig.from_dict({'kind': 'polynomial'})
    with pytest.raises(SchemaError):
        KernelConfig('polynomial')
    with pytest.raises(SchemaError):
        KernelConfig(RBF, sigma=-1.0)
