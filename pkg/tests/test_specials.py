import math

import numpy as np
import pytest
import scipy.special

from maxent_explore.specials import digamma, gamma, log_gamma

EULER_GAMMA = 0.5772156649015329

# Tabulated reference values (Abramowitz & Stegun style spot checks).
GAMMA_TABLE = [
    (0.5, math.sqrt(math.pi)),
    (1.0, 1.0),
    (1.5, math.sqrt(math.pi) / 2.0),
    (5.0, 24.0),
    (10.0, 362880.0),
]

DIGAMMA_TABLE = [
    (1.0, -EULER_GAMMA),
    (2.0, 1.0 - EULER_GAMMA),
    (0.5, -EULER_GAMMA - 2.0 * math.log(2.0)),
    (10.0, 2.2517525890667214),
]


@pytest.mark.parametrize("x,expected", GAMMA_TABLE)
def test_gamma_tabulated(x, expected):
    assert gamma(x) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("x,expected", DIGAMMA_TABLE)
def test_digamma_tabulated(x, expected):
    assert digamma(x) == pytest.approx(expected, rel=1e-12)


def test_log_gamma_accuracy_over_range():
    xs = np.concatenate([np.linspace(0.5, 30.0, 400),
                         np.logspace(1.5, 6.0, 400)])
    ours = np.array([log_gamma(float(x)) for x in xs])
    ref = scipy.special.gammaln(xs)
    denom = np.maximum(np.abs(ref), 1.0)
    assert np.max(np.abs(ours - ref) / denom) < 1e-10


def test_digamma_accuracy_over_range():
    xs = np.concatenate([np.linspace(0.5, 30.0, 400),
                         np.logspace(1.5, 6.0, 400)])
    ours = np.array([digamma(float(x)) for x in xs])
    ref = scipy.special.digamma(xs)
    denom = np.maximum(np.abs(ref), 1.0)
    assert np.max(np.abs(ours - ref) / denom) < 1e-10


def test_small_integer_arguments_match_harmonic_series():
    # psi(n) = -gamma + sum_{i<n} 1/i
    acc = 0.0
    for n in range(1, 20):
        assert digamma(float(n)) == pytest.approx(-EULER_GAMMA + acc, abs=1e-12)
        acc += 1.0 / n


@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5])
def test_domain_errors(bad):
    with pytest.raises(ValueError):
        log_gamma(bad)
    with pytest.raises(ValueError):
        digamma(bad)
