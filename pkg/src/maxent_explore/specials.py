"""Local gamma / digamma implementations.

The entropy estimators depend on ln Gamma and the digamma function only.
Both are implemented here so the estimator stack has no special-function
dependency: ln Gamma via a (g=7, n=9) Lanczos approximation, digamma via
the recurrence plus an asymptotic (Bernoulli) series. Accurate to at
least 10 significant digits for arguments in [0.5, 1e6].
"""

import math

# Lanczos coefficients, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Asymptotic series coefficients: B_{2n} / (2n), n = 1..7.
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def log_gamma(x: float) -> float:
    """Natural log of Gamma(x) for x > 0."""
    if not x > 0.0:
        raise ValueError(f"log_gamma requires x > 0, got {x}")
    if x < 0.5:
        # Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def gamma(x: float) -> float:
    """Gamma(x) for x > 0. Overflows to inf for x beyond ~171."""
    lg = log_gamma(x)
    if lg > 709.0:
        return math.inf
    return math.exp(lg)


def digamma(x: float) -> float:
    """Digamma (psi) function for x > 0.

    Shifts the argument above 10 with psi(x) = psi(x+1) - 1/x, then applies
    psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n}).
    """
    if not x > 0.0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    value = 0.0
    while x < 10.0:
        value -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for c in _DIGAMMA_SERIES:
        series += c * power
        power *= inv2
    return value + math.log(x) - 0.5 / x - series
