import json

import numpy as np
import pytest

from model.estimator import fit, predict
from model.serialization import SCHEMA_VERSION, dumps, load, loads, save, to_document
from utils.errors import ModelFormatError
from utils.kernels import CLINICAL, KernelConfig


def test_round_trip_reproduces_predictions_bit_exactly(fitted_model, synthetic_pair, tmp_path, rng):
    _, test = synthetic_pair
    path = tmp_path / 'models' / 'm.json'
    save(fitted_model, path)
    loaded = load(path)
    assert np.array_equal(predict(loaded, test.X), predict(fitted_model, test.X))
    noisy = test.X + rng.normal(0, 0.1, size=test.X.shape)
    assert np.array_equal(predict(loaded, noisy), predict(fitted_model, noisy))
    assert loaded.gamma == fitted_model.gamma
    assert loaded.report.to_dict() == fitted_model.report.to_dict()
    assert loaded.feature_names == fitted_model.feature_names


def test_clinical_model_round_trip(synthetic_pair):
    train, test = synthetic_pair
    m = fit(train.subset(np.arange(50)), KernelConfig(CLINICAL), 0.5)
    loaded = loads(dumps(m))
    assert loaded.kernel == m.kernel
    assert np.array_equal(predict(loaded, test.X), predict(m, test.X))


def test_saved_document_is_plain_json(fitted_model):
    text = dumps(fitted_model)
    assert text.endswith('\n')
    doc = json.loads(text)
    assert doc['schema_version'] == SCHEMA_VERSION
    assert doc['kernel']['kind'] == fitted_model.kernel.kind
    assert len(doc['beta']) == fitted_model.n_train


def test_truncated_file(fitted_model, tmp_path):
    path = tmp_path / 'm.json'
    path.write_text(dumps(fitted_model)[:200], encoding='utf-8')
    with pytest.raises(ModelFormatError, match='malformed or truncated'):
        load(path)


def test_unknown_kernel_kind_is_named(fitted_model):
    doc = to_document(fitted_model)
    doc['kernel']['kind'] = 'polynomial'
    with pytest.raises(ModelFormatError, match='polynomial'):
        loads(json.dumps(doc))


def test_schema_version_mismatch(fitted_model):
    doc = to_document(fitted_model)
    doc['schema_version'] = SCHEMA_VERSION + 1
    with pytest.raises(ModelFormatError, match='schema_version'):
        loads(json.dumps(doc))


@pytest.mark.parametrize('text', ['[]', '{"format": "something-else"}', '42'])
def test_not_a_model_document(text):
    with pytest.raises(ModelFormatError):
        loads(text)


def test_missing_and_inconsistent_fields(fitted_model):
    doc = to_document(fitted_model)
    del doc['stats']
    with pytest.raises(ModelFormatError, match='stats'):
        loads(json.dumps(doc))

    doc = to_document(fitted_model)
    doc['beta'] = doc['beta'][:-1]
    with pytest.raises(ModelFormatError):
        loads(json.dumps(doc))
