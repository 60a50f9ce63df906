import json
import os
from pathlib import Path
from typing import Any, Dict

from dotenv import load_dotenv

from utils.errors import SchemaError

load_dotenv()


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    return int(value) if value else default


def _env_float(name: str, default: float) -> float:
    value = os.environ.get(name)
    return float(value) if value else default


class Config:
    # Parallel work: Gram rows, grid-search cells, experiment replicates
    THREADS = max(1, _env_int('SSVM_THREADS', os.cpu_count() or 1))
    LOG_LEVEL = os.environ.get('SSVM_LOG_LEVEL', 'INFO').upper()

    # Training defaults
    MAX_NEWTON = _env_int('SSVM_MAX_NEWTON', 200)
    GRAD_TOL = _env_float('SSVM_GRAD_TOL', 1e-5)
    RIDGE = _env_float('SSVM_RIDGE', 1e-10)

    # Prediction service
    MODEL_FOLDER = os.environ.get('SSVM_MODEL_FOLDER') or os.path.join(os.getcwd(), 'data', 'models')
    MAX_CONTENT_LENGTH = _env_int('SSVM_MAX_CONTENT_MB', 200) * 1024 * 1024
    ALLOWED_EXTENSIONS = {'json'}

    @staticmethod
    def load_file(path) -> Dict[str, Any]:
        """Read a JSON config document; keys are CLI flag names with '_' for '-'."""
        path = Path(path)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Config file {path} is not valid JSON: {str(e)}")
        if not isinstance(data, dict):
            raise SchemaError(f"Config file {path} must hold a JSON object")
        return {str(key).replace('-', '_'): value for key, value in data.items()}

    @staticmethod
    def init_app(app):
        os.makedirs(app.config.get('MODEL_FOLDER', Config.MODEL_FOLDER), exist_ok=True)
