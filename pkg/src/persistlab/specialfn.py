"""Log-gamma, gamma, digamma and the Gauss hypergeometric function on [0, 1].

Everything here is written for real arguments. ``hyp2f1`` accepts scalar
or array ``x``; the coefficient recursion is shared across the array.
"""

import math

import numpy as np

from .errors import ConvergenceError, DomainError

__all__ = [
    "log_gamma",
    "gamma",
    "rgamma",
    "digamma",
    "hyp2f1",
    "hyp2f1_1mx",
    "SERIES_TOL",
    "MAX_TERMS",
]

SERIES_TOL = 1e-15
CONSECUTIVE = 3
MAX_TERMS = 10**6
NEAR_ONE = 0.95
# Near integer c-a-b the connection formula loses about eps/|c-a-b-m|.
# Inside the band the direct series is used while 1-x >= band (it converges
# within MAX_TERMS there); closer to x = 1 the connection formula is kept at
# reduced accuracy. Below the floor the logarithmic formula is used as is.
DEGENERACY_BAND = 1e-4
DEGENERACY_FLOOR = 1e-9

EULER_GAMMA = 0.57721566490153286061
_HALF_LOG_2PI = 0.91893853320467274178

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

# B_2, B_4, ..., B_14
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6)


def _zeta_int(k, cut=16):
    """Riemann zeta at integer k >= 2 by Euler-Maclaurin summation."""
    head = math.fsum(n ** -k for n in range(1, cut))
    tail = cut ** (1 - k) / (k - 1) + 0.5 * cut**-k
    rising = float(k)
    fact = 2.0
    for j, b2j in enumerate(_BERNOULLI[:-1], start=1):
        tail += b2j / fact * rising * cut ** (-k - 2 * j + 1)
        rising *= (k + 2 * j - 1) * (k + 2 * j)
        fact *= (2 * j + 1) * (2 * j + 2)
    return head + tail


# lnGamma(1+z) = -gamma*z + sum_{k>=2} (-1)^k zeta(k) z^k / k, |z| < 1
_LOG_GAMMA_TAYLOR = tuple((-1) ** k * _zeta_int(k) / k for k in range(2, 42))


def _log_gamma_near_one(z):
    acc = 0.0
    for coef in reversed(_LOG_GAMMA_TAYLOR):
        acc = acc * z + coef
    return z * (acc * z - EULER_GAMMA)


def _lanczos_log_gamma(x):
    z = x - 1.0
    s = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        s += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(s)


def log_gamma(x):
    """Natural logarithm of the gamma function for ``x > 0``.

    Lanczos approximation (g = 7, nine terms) away from the zeros at
    x = 1 and x = 2; around those a Taylor series in zeta values keeps
    the relative error small where ln Gamma itself is small.
    """
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    if x < 0.5:
        return log_gamma(x + 1.0) - math.log(x)
    if abs(x - 1.0) <= 0.2:
        return _log_gamma_near_one(x - 1.0)
    if abs(x - 2.0) <= 0.2:
        return math.log1p(x - 2.0) + _log_gamma_near_one(x - 2.0)
    return _lanczos_log_gamma(x)


def _is_nonpositive_integer(v):
    return v <= 0.0 and v == math.floor(v)


def _sinpi(x):
    r = math.fmod(x, 2.0)
    if r == 0.0 or r == 1.0 or r == -1.0:
        return 0.0
    return math.sin(math.pi * r)


def gamma(x):
    """Gamma function for real ``x`` that is not a pole."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"gamma requires a finite argument, got {x!r}")
    if _is_nonpositive_integer(x):
        raise DomainError(f"gamma has a pole at {x!r}")
    if x > 0.0:
        return math.exp(log_gamma(x))
    return math.pi / (_sinpi(x) * gamma(1.0 - x))


def rgamma(x):
    """Reciprocal gamma function; zero at the poles of gamma."""
    x = float(x)
    if _is_nonpositive_integer(x):
        return 0.0
    return 1.0 / gamma(x)


def digamma(x):
    """Logarithmic derivative of the gamma function."""
    x = float(x)
    if not math.isfinite(x) or _is_nonpositive_integer(x):
        raise DomainError(f"digamma is undefined at {x!r}")
    if x < 0.0:
        return digamma(1.0 - x) - math.pi / math.tan(math.pi * math.fmod(x, 1.0))
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    # sum_{k=1..6} B_2k / (2k x^2k), Horner in 1/x^2
    tail = 0.0
    for k in range(6, 0, -1):
        tail = (tail + _BERNOULLI[k - 1] / (2 * k)) * inv2
    return acc + math.log(x) - 0.5 / x - tail


# ---------------------------------------------------------------------------
# Gauss hypergeometric function
# ---------------------------------------------------------------------------


def _check_parameters(a, b, c):
    for name, v in (("a", a), ("b", b), ("c", c)):
        if not math.isfinite(v):
            raise DomainError(f"hyp2f1 parameter {name} must be finite, got {v!r}")
    if _is_nonpositive_integer(c):
        raise DomainError(f"hyp2f1 requires c not a nonpositive integer, got c={c!r}")


def _terminating_degree(a, b):
    degrees = [int(-v) for v in (a, b) if _is_nonpositive_integer(v)]
    return min(degrees) if degrees else None


def _polynomial(a, b, c, degree, x):
    coef = 1.0
    coefs = [1.0]
    for n in range(degree):
        coef *= (a + n) * (b + n) / ((c + n) * (n + 1))
        coefs.append(coef)
    return np.polyval(coefs[::-1], x)


def _series(a, b, c, x, max_terms=MAX_TERMS):
    """Direct power series, vectorized over ``x`` and over blocks of terms.

    A point stops accumulating once CONSECUTIVE successive terms are below
    SERIES_TOL relative to its partial sum.
    """
    x = np.asarray(x, dtype=float)
    out = np.ones(x.shape)
    rows = np.flatnonzero(np.ones(x.shape, dtype=bool))
    xs = x.ravel()
    flat = out.ravel()
    total = np.ones(xs.size)
    term = np.ones(xs.size)
    carry = np.zeros(xs.size, dtype=np.int64)
    n = 0
    width = 32
    while rows.size:
        if n >= max_terms:
            raise ConvergenceError(
                f"hyp2f1 series for ({a}, {b}, {c}) has not met tolerance "
                f"after {max_terms} terms"
            )
        k = np.arange(n, n + width, dtype=float)
        ratios = (a + k) * (b + k) / ((c + k) * (k + 1.0))
        terms = term[:, None] * np.cumprod(ratios[None, :] * xs[:, None], axis=1)
        partial = total[:, None] + np.cumsum(terms, axis=1)
        small = np.abs(terms) <= SERIES_TOL * np.abs(partial)
        idx = np.arange(width)
        last_reset = np.maximum.accumulate(np.where(small, -1, idx), axis=1)
        quiet = np.where(last_reset < 0, idx + 1 + carry[:, None], idx - last_reset)
        hit = quiet >= CONSECUTIVE
        done = hit.any(axis=1)
        stop = np.argmax(hit, axis=1)
        flat[rows[done]] = partial[done, stop[done]]
        keep = ~done
        rows = rows[keep]
        xs = xs[keep]
        total = partial[keep, -1]
        term = terms[keep, -1]
        carry = quiet[keep, -1]
        n += width
        width = min(2 * width, 4096)
    return out


def _gauss_sum(a, b, c):
    s = c - a - b
    if s <= 0.0:
        raise ConvergenceError(
            f"hyp2f1({a}, {b}, {c}, 1) diverges: c - a - b = {s} <= 0"
        )
    return gamma(c) * gamma(s) * rgamma(c - a) * rgamma(c - b)


def _sum_until_quiet(terms, shape):
    """Accumulate an iterator of term arrays using the series stopping rule."""
    total = np.zeros(shape)
    quiet = np.zeros(shape, dtype=np.int64)
    for n, term in enumerate(terms):
        if n >= MAX_TERMS:
            raise ConvergenceError("hyp2f1 log-case series did not converge")
        total = total + term
        small = np.abs(term) <= SERIES_TOL * np.abs(total)
        quiet = np.where(small, quiet + 1, 0)
        if n > 0 and (quiet >= CONSECUTIVE).all():
            return total
    return total


def _degenerate(a, b, m, y):
    """F(a, b; a+b+m; 1-y) for integer m >= 0 (logarithmic case).

    Abramowitz & Stegun 15.3.10 (m = 0) and 15.3.11 (m >= 1).
    """
    log_y = np.log(y)

    def log_terms():
        coef = rgamma(1.0 + m) if m else 1.0
        power = np.ones_like(y)
        n = 0
        while True:
            if m == 0:
                bracket = (2.0 * digamma(n + 1.0) - digamma(a + n)
                           - digamma(b + n) - log_y)
            else:
                bracket = (log_y - digamma(n + 1.0) - digamma(n + m + 1.0)
                           + digamma(a + n + m) + digamma(b + n + m))
            yield coef * power * bracket
            coef *= (a + m + n) * (b + m + n) / ((n + 1.0) * (n + m + 1.0))
            power = power * y
            n += 1

    series = _sum_until_quiet(log_terms(), y.shape)
    if m == 0:
        return gamma(a + b) * rgamma(a) * rgamma(b) * series

    finite = np.zeros_like(y)
    coef = 1.0
    power = np.ones_like(y)
    for n in range(m):
        finite = finite + coef * power
        if n + 1 < m:
            coef *= (a + n) * (b + n) / ((n + 1.0) * (1.0 - m + n))
            power = power * y
    c = a + b + m
    head = gamma(float(m)) * gamma(c) * rgamma(a + m) * rgamma(b + m) * finite
    tail = (-y) ** m * gamma(c) * rgamma(a) * rgamma(b) * series
    return head - tail


def _near_one(a, b, c, y):
    """F(a, b; c; 1-y) for small y > 0 via the connection formula."""
    s = c - a - b
    m = round(s)
    if abs(s - m) < DEGENERACY_FLOOR:
        s = float(m)
        if m < 0:
            # Euler: F(a,b;c;x) = (1-x)^(c-a-b) F(c-a,c-b;c;x)
            return y**s * _evaluate(c - a, c - b, c, 1.0 - y, y)
        return _degenerate(a, b, int(m), y)
    if abs(s - m) < DEGENERACY_BAND and y.min() >= DEGENERACY_BAND:
        return _series(a, b, c, 1.0 - y)
    out = np.zeros_like(y)
    big_a = gamma(c) * gamma(s) * rgamma(c - a) * rgamma(c - b)
    if big_a != 0.0:
        out = out + big_a * _series(a, b, 1.0 - s, y)
    big_b = gamma(c) * gamma(-s) * rgamma(a) * rgamma(b)
    if big_b != 0.0:
        out = out + big_b * y**s * _series(c - a, c - b, 1.0 + s, y)
    return out


def _evaluate(a, b, c, x, y):
    degree = _terminating_degree(a, b)
    if degree is not None:
        return _polynomial(a, b, c, degree, x)
    out = np.empty_like(x)
    at_one = y == 0.0
    near = (x > NEAR_ONE) & ~at_one
    far = ~(near | at_one)
    if far.any():
        out[far] = _series(a, b, c, x[far])
    if near.any():
        out[near] = _near_one(a, b, c, y[near])
    if at_one.any():
        out[at_one] = _gauss_sum(a, b, c)
    return out


def _prepare(values, name):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"hyp2f1 requires {name} in [0, 1]")
    return arr


def hyp2f1(a, b, c, x):
    """Gauss hypergeometric function 2F1(a, b; c; x) for x in [0, 1].

    Parameters
    ----------
    a, b, c : float
        Real parameters; ``c`` must not be a nonpositive integer.
    x : float or array_like
        Argument(s) in [0, 1]. At x = 1 the Gauss summation formula is used,
        which requires c - a - b > 0 unless the series terminates.

    Returns
    -------
    float or ndarray
        Same shape as ``x``.
    """
    a, b, c = float(a), float(b), float(c)
    _check_parameters(a, b, c)
    # F is symmetric in (a, b); a canonical order makes that exact in floating point
    a, b = min(a, b), max(a, b)
    xa = _prepare(x, "x")
    flat = np.atleast_1d(xa).ravel()
    out = _evaluate(a, b, c, flat, 1.0 - flat)
    if xa.ndim == 0:
        return float(out[0])
    return out.reshape(xa.shape)


def hyp2f1_1mx(a, b, c, y):
    """2F1(a, b; c; 1 - y), taking the distance ``y`` to 1 directly.

    Useful when 1 - x is known more precisely than x, e.g. y = -expm1(-tau)
    for tiny tau.
    """
    a, b, c = float(a), float(b), float(c)
    _check_parameters(a, b, c)
    # F is symmetric in (a, b); a canonical order makes that exact in floating point
    a, b = min(a, b), max(a, b)
    ya = _prepare(y, "y")
    flat = np.atleast_1d(ya).ravel()
    out = _evaluate(a, b, c, 1.0 - flat, flat)
    if ya.ndim == 0:
        return float(out[0])
    return out.reshape(ya.shape)
