import math

import numpy as np
import pytest

from utils.errors import DataValidationError, RegenerationSignal, SchemaError
from utils.synth import (
    RISK_LAYOUT,
    SYNTH_SPECS,
    SynthConfig,
    calibrate_tau,
    expected_censoring,
    generate,
    generate_many,
    generate_replicate,
    nonlinear_risk,
    risk_vectors,
    weibull_time,
)


def risk_input(**values):
    x = np.zeros(len(RISK_LAYOUT))
    defaults = {'sex': 1.0, 'N2': 1.0, 'N8': 1.0, 'N9': 1.0}
    for name, value in {**defaults, **values}.items():
        x[RISK_LAYOUT.index(name)] = value
    return x


def test_nonlinear_risk_hand_evaluated():
    assert nonlinear_risk(risk_input()) == pytest.approx(1.1, abs=1e-15)


def test_nonlinear_risk_linear_n7_term():
    assert nonlinear_risk(risk_input(N7=2.0)) - nonlinear_risk(risk_input(N7=1.0)) == pytest.approx(-0.1, abs=1e-12)


def test_nonlinear_risk_tanh_saturates():
    assert nonlinear_risk(risk_input(N6=50.0)) - nonlinear_risk(risk_input()) == pytest.approx(-0.9, abs=1e-12)


def test_nonlinear_risk_group_terms_divide_by_sex():
    base = nonlinear_risk(risk_input(sex=2.0))
    assert nonlinear_risk(risk_input(sex=2.0, C3=1.0)) - base == pytest.approx(0.15, abs=1e-12)


def test_nonlinear_risk_zero_denominator_signals_redraw():
    with pytest.raises(RegenerationSignal):
        nonlinear_risk(risk_input(N2=0.0))


def test_nonlinear_risk_wrong_size():
    with pytest.raises(SchemaError):
        nonlinear_risk(np.zeros(14))


def test_risk_vectors_expand_sex_and_group():
    row = np.zeros(len(SYNTH_SPECS))
    row[0], row[1], row[2] = 40.0, 1.0, 2.0
    row[3:] = np.arange(1, 11)
    x = risk_vectors(row[None, :])[0]
    assert x[:5].tolist() == [40.0, 2.0, 0.0, 0.0, 1.0]
    assert x[5:].tolist() == list(range(1, 11))


def test_weibull_time_formula():
    assert weibull_time(math.exp(-0.9), 0.0, 1.0, 0.9) == pytest.approx(1.0, rel=1e-12)
    assert weibull_time(0.5, 0.0, 2.0, 1.0) == pytest.approx(math.sqrt(math.log(2.0)), rel=1e-12)


def test_weibull_time_decreases_with_risk_and_vanishes_near_one():
    times = weibull_time(np.full(5, 0.3), np.linspace(-2, 2, 5), 1.0, 0.9)
    assert np.all(np.diff(times) < 0)
    assert 0 < weibull_time(1 - 1e-12, 0.0, 1.0, 0.9) < 1e-10


@pytest.mark.parametrize('u', [0.0, 1.0, -0.5, 1.5])
def test_weibull_time_rejects_u_outside_open_interval(u):
    with pytest.raises(DataValidationError):
        weibull_time(u, 0.0, 1.0, 0.9)


def test_calibrate_tau_constant_times():
    tau = calibrate_tau(np.ones(50), 0.5)
    assert tau == pytest.approx(2.0, rel=1e-9)
    assert expected_censoring(np.ones(50), tau) == pytest.approx(0.5, abs=1e-9)


def test_calibrate_tau_hits_target(rng):
    times = rng.exponential(2.0, size=500)
    for target in (0.1, 0.2, 0.5):
        assert abs(expected_censoring(times, calibrate_tau(times, target)) - target) <= 0.02


def test_calibrate_tau_extreme_time_range(rng):
    times = 10.0 ** rng.uniform(-3.0, 300.0, size=1500)
    tau = calibrate_tau(times, 0.2)
    assert math.isfinite(tau)
    assert expected_censoring(times, tau) == pytest.approx(0.2, abs=1e-6)


@pytest.mark.parametrize('times', [[1.0, math.inf], [0.0, 1.0], [1.0, math.nan]])
def test_calibrate_tau_rejects_bad_times(times):
    with pytest.raises(DataValidationError):
        calibrate_tau(times, 0.2)


@pytest.mark.parametrize('target', [0.0, 1.0, 1e-6])
def test_calibrate_tau_unreachable_targets(target):
    with pytest.raises(DataValidationError):
        calibrate_tau([1.0, 2.0, 3.0], target)


def test_generate_is_deterministic():
    config = SynthConfig(n_train=200, n_test=50, seed=11)
    a, b = generate_replicate(config), generate_replicate(config)
    assert np.array_equal(a.train.X, b.train.X)
    assert np.array_equal(a.train.y, b.train.y)
    assert np.array_equal(a.train.delta, b.train.delta)
    assert np.array_equal(a.test.y, b.test.y)
    assert a.scale == b.scale


def test_seeds_differ():
    a, _ = generate(SynthConfig(n_train=50, n_test=5, seed=1))
    b, _ = generate(SynthConfig(n_train=50, n_test=5, seed=2))
    assert not np.array_equal(a.y, b.y)


def test_test_set_is_uncensored_and_times_positive():
    replicate = generate_replicate(SynthConfig(n_train=300, n_test=300, seed=3))
    assert replicate.test.delta.all()
    for d in (replicate.train, replicate.test):
        assert np.all(np.isfinite(d.y)) and np.all(d.y > 0)
    assert np.all(np.isfinite(replicate.train_risk))
    assert replicate.train.feature_names[:3] == ['age', 'sex', 'group']


def test_fixed_scale_is_shared_by_train_and_test():
    replicate = generate_replicate(SynthConfig(n_train=100, n_test=100, seed=5, coeff_scale=0.5))
    assert replicate.scale == 0.5
    expected = 0.5 * np.array([nonlinear_risk(x) for x in risk_vectors(replicate.test.X)])
    assert np.allclose(replicate.test_risk, expected, rtol=1e-12)


def test_zero_target_means_no_censoring():
    replicate = generate_replicate(SynthConfig(n_train=100, n_test=10, seed=4, target_censoring=0.0))
    assert replicate.train.delta.all()
    assert math.isinf(replicate.tau)


def test_training_censoring_near_target():
    for seed in range(10):
        replicate = generate_replicate(SynthConfig(n_train=1500, n_test=1, seed=seed))
        assert math.isfinite(replicate.tau)
        assert 0.15 <= replicate.censoring_fraction <= 0.25


def test_feature_means():
    train, _ = generate(SynthConfig(n_train=10000, n_test=1, seed=0))
    n5 = train.feature_names.index('N5')
    assert abs(train.X[:, n5].mean() - 0.8) <= 0.05
    age = train.X[:, 0]
    assert age.min() >= 18.0 and age.max() <= 89.0
    assert set(np.unique(train.X[:, 1])) <= {0.0, 1.0}


def test_generate_many_keeps_order():
    configs = [SynthConfig(n_train=40, n_test=5, seed=s) for s in (9, 3, 6)]
    serial = generate_many(configs)
    threaded = generate_many(configs, n_threads=3)
    for config, a, b in zip(configs, serial, threaded):
        assert np.array_equal(a.train.y, generate_replicate(config).train.y)
        assert np.array_equal(a.train.y, b.train.y)


@pytest.mark.parametrize(
    'kwargs',
    [{'n_train': 0}, {'target_censoring': 1.0}, {'coeff_scale': 2.0}, {'weibull_k': 0.0}],
)
def test_invalid_config(kwargs):
    with pytest.raises(SchemaError):
        SynthConfig(**kwargs)
