import sys
from pathlib import Path

import numpy as np
import pytest

BACKEND = Path(__file__).resolve().parents[1]
if str(BACKEND) not in sys.path:
    sys.path.insert(0, str(BACKEND))

from model.estimator import fit  # noqa: E402
from utils.data_model import FeatureSpec  # noqa: E402
from utils.kernels import CLINICAL, LINEAR, RBF, KernelConfig, fit_kernel, gram  # noqa: E402
from utils.synth import SynthConfig, generate  # noqa: E402


def random_survival(rng: np.random.Generator, n: int):
    """Times with occasional ties and a random censoring rate between 0 and 100%."""
    if rng.random() < 0.5:
        y = rng.integers(1, max(2, n // 2) + 1, size=n).astype(float)
    else:
        y = rng.exponential(1.0, size=n) + 1e-3
    delta = rng.random(n) < rng.random()
    return y, delta


def random_kernel_matrix(rng: np.random.Generator, n: int) -> np.ndarray:
    """Gram matrix of a random linear, RBF or clinical kernel on random features."""
    kind = (LINEAR, RBF, CLINICAL)[rng.integers(3)]
    X = rng.standard_normal((n, 3))
    specs = (FeatureSpec('a'), FeatureSpec('b'), FeatureSpec('c'))
    if kind == CLINICAL:
        X[:, 2] = rng.integers(0, 3, size=n)
        specs = specs[:2] + (FeatureSpec('c', 'categorical', ('x', 'y', 'z')),)
    config = fit_kernel(KernelConfig(kind), X, specs)
    return gram(config, X).K


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def three_sample():
    return np.array([1.0, 2.0, 3.0]), np.array([True, False, True])


@pytest.fixture
def write_file(tmp_path):
    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return path

    return _write


@pytest.fixture(scope='module')
def synthetic_pair():
    return generate(SynthConfig(n_train=120, n_test=80, seed=7, coeff_scale=1.0))


@pytest.fixture(scope='module')
def fitted_model(synthetic_pair):
    train, _ = synthetic_pair
    return fit(train, KernelConfig(RBF), 1.0)
