import logging
import os
import uuid
from typing import Dict

import pandas as pd
from flask import Flask, current_app, jsonify, request
from flask_cors import CORS
from werkzeug.utils import secure_filename

from config import Config
from model import estimator, serialization
from model.estimator import TrainedModel
from utils.data_model import FeatureSpec, SurvivalDataset, feature_matrix, select_columns
from utils.errors import DataValidationError, ModelFormatError, SchemaError, SurvivalSVMError, TrainingError

logger = logging.getLogger(__name__)

CLIENT_ERRORS = (SchemaError, DataValidationError, TrainingError, ModelFormatError)
MODELS_KEY = 'survival_models'


def allowed_file(filename):
    return '.' in filename and filename.rsplit('.', 1)[1].lower() in Config.ALLOWED_EXTENSIONS


def _models(app: Flask) -> Dict[str, TrainedModel]:
    return app.extensions[MODELS_KEY]


def add_model(app: Flask, m: TrainedModel) -> str:
    model_id = uuid.uuid4().hex
    _models(app)[model_id] = m
    return model_id


def _summary(model_id: str, m: TrainedModel) -> Dict:
    return {
        'model_id': model_id,
        'kernel': m.kernel.kind,
        'gamma': m.gamma,
        'n_train': m.n_train,
        'pair_mode': m.pair_mode,
        'features': m.feature_names,
        'converged': m.report.converged,
    }


def _error(e: Exception):
    status = 400 if isinstance(e, CLIENT_ERRORS) else 500
    if status == 500:
        current_app.logger.error(f"❌ {type(e).__name__}: {str(e)}")
    return jsonify({'success': False, 'error': str(e)}), status


def _request_frame(payload, required) -> pd.DataFrame:
    rows = payload.get('rows') if isinstance(payload, dict) else None
    if not isinstance(rows, list) or not rows or not all(isinstance(row, dict) for row in rows):
        raise SchemaError("Request body needs a non-empty 'rows' list of objects")
    return select_columns(pd.DataFrame(rows), list(required), 'request rows')


def _schema(m: TrainedModel):
    return [FeatureSpec(spec.name, spec.kind, spec.levels) for spec in m.kernel.specs]


def create_app(config_object=Config, **overrides) -> Flask:
    app = Flask(__name__)
    app.config.from_object(config_object)
    app.config.update(overrides)
    config_object.init_app(app)
    app.extensions[MODELS_KEY] = {}

    CORS(app, resources={r"/api/*": {"origins": "*"}})

    @app.route('/api/health')
    def health_check():
        return jsonify({'status': 'healthy', 'models_loaded': len(_models(app))})

    @app.route('/api/models', methods=['GET'])
    def list_models():
        return jsonify({'success': True, 'data': [_summary(k, m) for k, m in _models(app).items()]})

    @app.route('/api/models', methods=['POST'])
    def upload_model():
        try:
            if 'model' not in request.files:
                return jsonify({'success': False, 'error': 'No file provided'}), 400

            file = request.files['model']
            if file.filename == '':
                return jsonify({'success': False, 'error': 'No file selected'}), 400

            if not allowed_file(file.filename):
                return jsonify({'success': False, 'error': 'Invalid file type, expected a .json model'}), 400

            m = serialization.loads(file.read().decode('utf-8'))
            model_id = add_model(app, m)

            filename = secure_filename(file.filename)
            with open(os.path.join(app.config['MODEL_FOLDER'], f"{model_id}_{filename}"), 'w', encoding='utf-8') as f:
                f.write(serialization.dumps(m))

            logger.info(f"✅ Model {model_id} uploaded ({m.kernel.kind} kernel, n_train={m.n_train})")
            return jsonify({'success': True, 'data': _summary(model_id, m)})

        except UnicodeDecodeError:
            return jsonify({'success': False, 'error': 'Model file must be UTF-8 JSON'}), 400
        except SurvivalSVMError as e:
            return _error(e)
        except Exception as e:
            app.logger.error(f"Upload error: {str(e)}")
            return jsonify({'success': False, 'error': str(e)}), 500

    @app.route('/api/models/<model_id>/predict', methods=['POST'])
    def predict(model_id):
        try:
            m = _models(app).get(model_id)
            if m is None:
                return jsonify({'success': False, 'error': 'Model not found'}), 404

            frame = _request_frame(request.get_json(silent=True), m.feature_names)
            scores = estimator.predict(m, feature_matrix(frame, _schema(m)))
            return jsonify({'success': True, 'data': {'scores': [float(s) for s in scores]}})

        except SurvivalSVMError as e:
            return _error(e)
        except Exception as e:
            app.logger.error(f"Prediction error: {str(e)}")
            return jsonify({'success': False, 'error': str(e)}), 500

    @app.route('/api/models/<model_id>/evaluate', methods=['POST'])
    def evaluate(model_id):
        try:
            m = _models(app).get(model_id)
            if m is None:
                return jsonify({'success': False, 'error': 'Model not found'}), 404

            frame = _request_frame(request.get_json(silent=True), m.feature_names + ['time', 'event'])
            d = SurvivalDataset(
                feature_matrix(frame, _schema(m)),
                pd.to_numeric(frame['time'], errors='coerce').to_numpy(dtype=float),
                pd.to_numeric(frame['event'], errors='coerce').to_numpy(dtype=float),
                tuple(_schema(m)),
            )
            return jsonify({'success': True, 'data': estimator.evaluate(m, d).to_dict()})

        except SurvivalSVMError as e:
            return _error(e)
        except Exception as e:
            app.logger.error(f"Evaluation error: {str(e)}")
            return jsonify({'success': False, 'error': str(e)}), 500

    @app.errorhandler(404)
    def not_found(e):
        return jsonify({'success': False, 'error': 'Endpoint not found'}), 404

    @app.errorhandler(413)
    def file_too_large(e):
        return jsonify({'success': False, 'error': 'File size too large'}), 413

    @app.errorhandler(500)
    def internal_server_error(e):
        return jsonify({'success': False, 'error': 'Internal server error'}), 500

    return app


if __name__ == '__main__':
    logging.basicConfig(level=Config.LOG_LEVEL, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    print("🚀 Starting kernel survival SVM prediction service")
    print(f"📁 Model folder: {Config.MODEL_FOLDER}")
    print("   http://localhost:5000/api/health")
    create_app().run(host='0.0.0.0', port=5000)
