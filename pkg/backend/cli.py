"""
Command-line surface of the kernel survival SVM.

    synth-gen     synthetic train/test CSV files plus meta.json
    train         fit a model and write it with its optimizer report
    grid-search   pick gamma by repeated random splits (table on stdout)
    predict       risk scores for new rows ("row,score")
    evaluate      Harrell's c of a model on labelled data
    describe      sample, event and comparable-pair counts of a data file
    benchmark     counting-sweep and Hessian-vector timing table
    experiment    synthetic replication, mean/std c-index per kernel and pair mode
    serve         HTTP prediction service

Exit codes: 0 success, 1 usage or data error, 2 training stopped before convergence.
"""

import argparse
import json
import logging
import math
import re
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import Config
from model import estimator, serialization
from model.experiment import ExperimentConfig, run_experiment
from utils.benchmark import DEFAULT_SIZES, run_benchmark
from utils.data_model import FeatureSpec, describe_dataset, load_csv, load_features, write_csv
from utils.errors import SchemaError, SurvivalSVMError
from utils.kernels import KERNEL_KINDS, RBF, KernelConfig
from utils.newton_cg import OptimizerOptions
from utils.synth import SynthConfig, generate_replicate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

DEFAULT_GRID = '2^-12..2^12:step2^2'
FLOAT_FORMAT = '%.17g'

_NUMBER = r'[0-9]+(?:\.[0-9]+)?'
_GRID_RANGE = re.compile(
    rf'^\s*(?P<base>{_NUMBER})\^(?P<lo>-?\d+)\s*\.\.\s*(?P<base2>{_NUMBER})\^(?P<hi>-?\d+)'
    rf'\s*:\s*step\s*(?P<base3>{_NUMBER})\^(?P<step>\d+)\s*$'
)
_POWER = re.compile(rf'^\s*(?P<base>{_NUMBER})\^(?P<exp>-?\d+)\s*$')


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so usage errors map to exit code 1."""

    def error(self, message):
        raise SchemaError(f"{self.prog}: {message}")


def parse_grid(text: str) -> Tuple[float, ...]:
    """Parse "2^-12..2^12:step2^2" or a comma list such as "0.5,1,2^3"."""
    match = _GRID_RANGE.match(text)
    if match:
        if not float(match['base']) == float(match['base2']) == float(match['base3']):
            raise SchemaError(f"Grid range '{text}' mixes bases")
        base, lo, hi, step = float(match['base']), int(match['lo']), int(match['hi']), int(match['step'])
        if step < 1 or hi < lo:
            raise SchemaError(f"Grid range '{text}' is empty")
        return tuple(base**e for e in range(lo, hi + 1, step))

    values = []
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        power = _POWER.match(item)
        try:
            values.append(float(power['base']) ** int(power['exp']) if power else float(item))
        except ValueError:
            raise SchemaError(f"Cannot parse grid value '{item}'")
    if not values:
        raise SchemaError('Grid must contain at least one gamma')
    if any(not (v > 0 and math.isfinite(v)) for v in values):
        raise SchemaError('Every gamma in the grid must be positive')
    return tuple(sorted(set(values)))


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'")
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0 <= value < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return value


def _name_list(text: str) -> List[str]:
    return [item.strip() for item in str(text).split(',') if item.strip()]


def _int_list(text: str) -> List[int]:
    try:
        return [int(item) for item in _name_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help='JSON file with flag defaults (keys are flag names)')
    parser.add_argument('--verbose', action='store_true', help='Log at DEBUG level, including Newton iterations')
    parser.add_argument('--threads', type=_positive_int, default=Config.THREADS, help='Worker threads')


def _add_data(parser: argparse.ArgumentParser):
    parser.add_argument('--data', required=True, help='CSV file with feature columns plus time and event')
    parser.add_argument('--schema', help='JSON schema (list of feature specs, or a meta.json with a schema)')
    parser.add_argument('--time-column', default='time')
    parser.add_argument('--event-column', default='event')


def _add_training(parser: argparse.ArgumentParser):
    parser.add_argument('--kernel', choices=KERNEL_KINDS, default=RBF)
    parser.add_argument('--sigma', type=_positive_float, help='RBF bandwidth (median heuristic when omitted)')
    parser.add_argument('--pairs', choices=estimator.PAIR_MODES, default=estimator.FULL)
    parser.add_argument('--max-newton', type=_positive_int, default=Config.MAX_NEWTON)
    parser.add_argument('--grad-tol', type=_positive_float, default=Config.GRAD_TOL)
    parser.add_argument('--ridge', type=float, default=Config.RIDGE)


def build_parser() -> CliParser:
    parser = CliParser(prog='ssvm', description='Kernel survival SVM trained by truncated Newton optimization')
    sub = parser.add_subparsers(dest='command', parser_class=CliParser, required=True)

    p = sub.add_parser('synth-gen', help='Write a synthetic train/test pair')
    _add_common(p)
    p.add_argument('--n-train', type=_positive_int, default=1500)
    p.add_argument('--n-test', type=_positive_int, default=1500)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--censoring', type=_fraction, default=0.2)
    p.add_argument('--coeff-scale', default='random', help="Risk coefficient scale in [-1, 1] or 'random'")
    p.add_argument('--weibull-k', type=_positive_float, default=1.0)
    p.add_argument('--weibull-lambda', type=_positive_float, default=0.9)
    p.add_argument('--out-dir', required=True)
    p.set_defaults(handler=cmd_synth_gen)

    p = sub.add_parser('train', help='Fit a model')
    _add_common(p)
    _add_data(p)
    _add_training(p)
    p.add_argument('--gamma', type=_positive_float, default=1.0)
    p.add_argument('--out-model', required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('grid-search', help='Choose gamma by repeated random splits')
    _add_common(p)
    _add_data(p)
    _add_training(p)
    p.add_argument('--grid', default=DEFAULT_GRID)
    p.add_argument('--splits', type=_positive_int, default=10)
    p.add_argument('--train-frac', type=float, default=0.8)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out-model', help='Refit on all of --data with the chosen gamma and write the model')
    p.set_defaults(handler=cmd_grid_search)

    p = sub.add_parser('predict', help='Risk scores for new rows')
    _add_common(p)
    p.add_argument('--model', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--out', help='Output CSV (stdout when omitted)')
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser('evaluate', help="Harrell's c on labelled data")
    _add_common(p)
    p.add_argument('--model', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--time-column', default='time')
    p.add_argument('--event-column', default='event')
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser('describe', help='Summarize a data file')
    _add_common(p)
    _add_data(p)
    p.set_defaults(handler=cmd_describe)

    p = sub.add_parser('benchmark', help='Timing table of the counting sweep and hessvec')
    _add_common(p)
    p.add_argument('--sizes', type=_int_list, default=list(DEFAULT_SIZES))
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--repeats', type=_positive_int, default=5)
    p.add_argument('--no-naive', action='store_true', help='Skip the quadratic reference counter')
    p.add_argument('--out', help='Output CSV (stdout when omitted)')
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser('experiment', help='Synthetic replication of kernels and pair modes')
    _add_common(p)
    p.add_argument('--replicates', type=_positive_int, default=10)
    p.add_argument('--n', type=_positive_int, default=1500, help='Training samples per replicate')
    p.add_argument('--n-test', type=_positive_int, help='Test samples per replicate (defaults to --n)')
    p.add_argument('--kernels', type=_name_list, default=list(KERNEL_KINDS))
    p.add_argument('--pairs', type=_name_list, default=list(estimator.PAIR_MODES))
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--censoring', type=_fraction, default=0.2)
    p.add_argument('--gamma', type=_positive_float, default=1.0)
    p.add_argument('--grid', help='Pick gamma per replicate by grid search over this grid')
    p.add_argument('--splits', type=_positive_int, default=10)
    p.add_argument('--max-newton', type=_positive_int, default=Config.MAX_NEWTON)
    p.add_argument('--grad-tol', type=_positive_float, default=Config.GRAD_TOL)
    p.add_argument('--ridge', type=float, default=Config.RIDGE)
    p.add_argument('--out', help='Summary CSV (stdout when omitted)')
    p.add_argument('--details', help='Per-replicate CSV')
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser('serve', help='Run the HTTP prediction service')
    _add_common(p)
    p.add_argument('--host', default='127.0.0.1')
    p.add_argument('--port', type=int, default=5000)
    p.add_argument('--model', action='append', default=[], help='Model file to load at start (repeatable)')
    p.set_defaults(handler=cmd_serve)

    parser.subcommands = sub.choices
    return parser


def _config_path(argv: Sequence[str]) -> Optional[str]:
    for k, token in enumerate(argv):
        if token == '--config' and k + 1 < len(argv):
            return argv[k + 1]
        if token.startswith('--config='):
            return token.split('=', 1)[1]
    return None


def parse_args(parser: CliParser, argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse argv; a --config file supplies defaults that explicit flags still override."""
    argv = list(sys.argv[1:] if argv is None else argv)
    config_path = _config_path(argv)
    command = next((token for token in argv if token in parser.subcommands), None)
    if config_path is None or command is None:
        return parser.parse_args(argv)

    subparser = parser.subcommands[command]
    known = {action.dest for action in subparser._actions} - {'help', 'config'}
    values = Config.load_file(config_path)
    unknown = sorted(set(values) - known)
    if unknown:
        raise SchemaError(f"Unknown key(s) in config file {config_path}: {', '.join(unknown)}")

    converted: Dict[str, Any] = {}
    for action in subparser._actions:
        if action.dest in values:
            value = values[action.dest]
            if action.type is not None and isinstance(value, (str, int, float)) and not isinstance(value, bool):
                try:
                    value = action.type(str(value))
                except (argparse.ArgumentTypeError, ValueError) as e:
                    raise SchemaError(f"Config key '{action.dest}': {e}")
            if action.choices is not None and value not in action.choices:
                raise SchemaError(f"Config key '{action.dest}' must be one of {', '.join(action.choices)}")
            converted[action.dest] = value
    subparser.set_defaults(**converted)
    for action in subparser._actions:
        if action.dest in converted:
            action.required = False
    return parser.parse_args(argv)


def _opts(args) -> OptimizerOptions:
    return OptimizerOptions(max_newton=args.max_newton, grad_tol=args.grad_tol, verbose=args.verbose)


def _kernel(args) -> KernelConfig:
    return KernelConfig(args.kernel, sigma=args.sigma, ridge=args.ridge)


def read_schema(path) -> List[FeatureSpec]:
    """Feature specs from a JSON list, or from the 'schema' entry of a meta.json."""
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Schema file {path} is not valid JSON: {str(e)}")
    specs = doc.get('schema') if isinstance(doc, dict) else doc
    if not isinstance(specs, list):
        raise SchemaError(f"Schema file {path} has no feature list")
    try:
        return [FeatureSpec.from_dict(spec) for spec in specs]
    except (KeyError, TypeError) as e:
        raise SchemaError(f"Schema file {path} has an invalid feature entry: {str(e)}")


def resolve_schema(data_path, schema_path: Optional[str]) -> Optional[List[FeatureSpec]]:
    """--schema, else a meta.json next to the data with a schema entry, else None (inferred)."""
    if schema_path:
        return read_schema(schema_path)
    sidecar = Path(data_path).parent / 'meta.json'
    if sidecar.exists():
        try:
            return read_schema(sidecar)
        except SchemaError:
            logger.debug(f"Ignoring {sidecar}: no usable schema")
    return None


def _load_data(args):
    schema = resolve_schema(args.data, args.schema)
    return load_csv(args.data, schema, time_column=args.time_column, event_column=args.event_column)


def _model_schema(m: estimator.TrainedModel) -> List[FeatureSpec]:
    return [FeatureSpec(spec.name, spec.kind, spec.levels) for spec in m.kernel.specs]


def _write_table(table: pd.DataFrame, out: Optional[str]):
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        logger.info(f"✅ Wrote {path}")
    else:
        table.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def report_path(model_path) -> Path:
    path = Path(model_path)
    return path.with_name(f"{path.stem}.report.csv")


def _save_model(m: estimator.TrainedModel, out_model: str) -> int:
    serialization.save(m, out_model)
    m.report.to_frame().to_csv(report_path(out_model), index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.info(f"✅ Model written to {out_model} (objective {m.report.final_objective:.6g})")
    if not m.report.converged:
        logger.warning(
            f"⚠️ Training stopped at {m.report.termination.value} after {m.report.n_newton} Newton iterations"
        )
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_synth_gen(args) -> int:
    scale: Any = args.coeff_scale if args.coeff_scale == 'random' else float(args.coeff_scale)
    config = SynthConfig(
        n_train=args.n_train,
        n_test=args.n_test,
        seed=args.seed,
        coeff_scale=scale,
        target_censoring=args.censoring,
        weibull_k=args.weibull_k,
        weibull_lambda=args.weibull_lambda,
    )
    replicate = generate_replicate(config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(replicate.train, out_dir / 'train.csv')
    write_csv(replicate.test, out_dir / 'test.csv')
    meta = {
        'config': config.to_dict(),
        'censoring_fraction': replicate.censoring_fraction,
        'scale': replicate.scale,
        'tau': replicate.tau if math.isfinite(replicate.tau) else None,
        'redrawn': replicate.redrawn,
        'schema': [spec.to_dict() for spec in replicate.train.specs],
    }
    with open(out_dir / 'meta.json', 'w', encoding='utf-8') as f:
        json.dump(meta, f, indent=2)
        f.write('\n')
    logger.info(f"✅ Synthetic data written to {out_dir} (censored fraction {replicate.censoring_fraction:.3f})")
    return EXIT_OK


def cmd_train(args) -> int:
    d = _load_data(args)
    m = estimator.fit(d, _kernel(args), args.gamma, _opts(args), args.pairs, n_threads=args.threads)
    return _save_model(m, args.out_model)


def cmd_grid_search(args) -> int:
    d = _load_data(args)
    result = estimator.grid_search(
        d,
        _kernel(args),
        parse_grid(args.grid),
        n_splits=args.splits,
        train_frac=args.train_frac,
        seed=args.seed,
        opts=_opts(args),
        pair_mode=args.pairs,
        n_threads=args.threads,
    )
    table = result.table.assign(chosen=(result.table['gamma'] == result.best_gamma).astype(int))
    _write_table(table, None)
    logger.info(f"Chosen gamma: {result.best_gamma:.17g}")
    if args.out_model:
        m = estimator.fit(d, _kernel(args), result.best_gamma, _opts(args), args.pairs, n_threads=args.threads)
        return _save_model(m, args.out_model)
    return EXIT_OK


def cmd_predict(args) -> int:
    m = serialization.load(args.model)
    X = load_features(args.data, _model_schema(m))
    scores = estimator.predict(m, X)
    table = pd.DataFrame({'row': np.arange(1, scores.size + 1), 'score': scores})
    _write_table(table, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    m = serialization.load(args.model)
    d = load_csv(args.data, _model_schema(m), time_column=args.time_column, event_column=args.event_column)
    result = estimator.evaluate(m, d)
    _write_table(pd.DataFrame([result.to_dict()]), None)
    logger.info(f"✅ c-index {result.cindex:.4f} over {result.comparable} comparable pairs")
    return EXIT_OK


def cmd_describe(args) -> int:
    _write_table(pd.DataFrame([describe_dataset(_load_data(args))]), None)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    table = run_benchmark(args.sizes, seed=args.seed, repeats=args.repeats, naive=not args.no_naive)
    _write_table(table, args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = ExperimentConfig(
        replicates=args.replicates,
        n_train=args.n,
        n_test=args.n_test,
        kernels=tuple(args.kernels),
        pair_modes=tuple(args.pairs),
        seed=args.seed,
        censoring=args.censoring,
        gamma=args.gamma,
        grid=parse_grid(args.grid) if args.grid else None,
        n_splits=args.splits,
        ridge=args.ridge,
        opts=OptimizerOptions(max_newton=args.max_newton, grad_tol=args.grad_tol),
    )
    summary, details = run_experiment(config, n_threads=args.threads)
    if args.details:
        _write_table(details, args.details)
    _write_table(summary, args.out)
    return EXIT_OK


def cmd_serve(args) -> int:
    from app import add_model, create_app

    app = create_app()
    for path in args.model:
        model_id = add_model(app, serialization.load(path))
        logger.info(f"✅ Loaded {path} as model {model_id}")
    logger.info(f"🌐 Serving on http://{args.host}:{args.port}")
    app.run(host=args.host, port=args.port)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parse_args(parser, argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        return args.handler(args)
    except SurvivalSVMError as e:
        logger.error(f"❌ {e}")
        return EXIT_ERROR
    except OSError as e:
        logger.error(f"❌ {e}")
        return EXIT_ERROR
