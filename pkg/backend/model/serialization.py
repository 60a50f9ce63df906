import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np

from model.estimator import PAIR_MODES, TrainedModel
from utils.data_model import StandardizationStats
from utils.errors import ModelFormatError, SurvivalSVMError
from utils.kernels import KernelConfig
from utils.newton_cg import OptimizerReport

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FORMAT_NAME = 'kernel-survival-svm'


def to_document(m: TrainedModel) -> Dict[str, Any]:
    return {
        'format': FORMAT_NAME,
        'schema_version': SCHEMA_VERSION,
        'gamma': float(m.gamma),
        'pair_mode': m.pair_mode,
        'kernel': m.kernel.to_dict(),
        'stats': m.stats.to_dict(),
        'beta': [float(b) for b in m.beta],
        'X_train': [[float(v) for v in row] for row in m.X_train],
        'report': m.report.to_dict(),
    }


def from_document(doc: Dict[str, Any]) -> TrainedModel:
    if not isinstance(doc, dict) or doc.get('format') != FORMAT_NAME:
        raise ModelFormatError('Not a kernel survival SVM model document')
    version = doc.get('schema_version')
    if version != SCHEMA_VERSION:
        raise ModelFormatError(f"Unsupported model schema_version {version} (expected {SCHEMA_VERSION})")
    try:
        kernel = KernelConfig.from_dict(doc['kernel'])
        beta = np.asarray(doc['beta'], dtype=float)
        X_train = np.asarray(doc['X_train'], dtype=float).reshape(beta.size, -1)
        pair_mode = doc.get('pair_mode', 'full')
        if pair_mode not in PAIR_MODES:
            raise ModelFormatError(f"Unknown pair mode '{pair_mode}'")
        return TrainedModel(
            beta=beta,
            X_train=X_train,
            kernel=kernel,
            stats=StandardizationStats.from_dict(doc['stats']),
            gamma=float(doc['gamma']),
            report=OptimizerReport.from_dict(doc.get('report', {})),
            pair_mode=pair_mode,
        )
    except ModelFormatError:
        raise
    except KeyError as e:
        raise ModelFormatError(f"Model document is missing field {e}")
    except (SurvivalSVMError, TypeError, ValueError) as e:
        raise ModelFormatError(f"Model document is invalid: {str(e)}")


def dumps(m: TrainedModel) -> str:
    return json.dumps(to_document(m), allow_nan=False) + '\n'


def save(m: TrainedModel, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dumps(m))
    logger.debug(f"Model saved to {path}")


def loads(text: str) -> TrainedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"Model file is malformed or truncated: {e.msg} at line {e.lineno} column {e.colno}")
    return from_document(doc)


def load(path) -> TrainedModel:
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    return loads(text)
