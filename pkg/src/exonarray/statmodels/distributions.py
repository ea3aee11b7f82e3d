"""Student t and F distribution functions via the regularized incomplete beta.

The incomplete beta is evaluated with the modified Lentz continued fraction
and the usual reflection ``I_x(a, b) = 1 - I_{1-x}(b, a)``; callers that need
an upper tail pass ``x`` and ``1 - x`` separately so small tail areas keep
full relative precision.
"""

import math

from ..errors import NonPositiveDf

MAX_TERMS = 200
REL_TOL = 1e-12
_TINY = 1e-300


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b) (Numerical Recipes ``betacf``)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, MAX_TERMS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < REL_TOL:
            break
    return h


def _front(a, b, x, y):
    return math.exp(a * math.log(x) + b * math.log(y)
                    + math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))


def betainc_pair(a, b, x, y=None):
    """Return ``(I_x(a, b), 1 - I_x(a, b))`` with ``y = 1 - x`` if given."""
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0, 1.0
    if y <= 0.0:
        return 1.0, 0.0
    if x < (a + 1.0) / (a + b + 2.0):
        lower = _front(a, b, x, y) * _betacf(a, b, x) / a
        return lower, 1.0 - lower
    upper = _front(a, b, x, y) * _betacf(b, a, y) / b
    return 1.0 - upper, upper


def betainc(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    return betainc_pair(a, b, x)[0]


def _check_df(*dfs):
    for df in dfs:
        if not df > 0:
            raise NonPositiveDf(f"degrees of freedom must be positive, got {df}")


def t_sf(x, df):
    """P(T > x) for Student's t with ``df`` degrees of freedom."""
    _check_df(df)
    t2 = x * x
    half_tail = 0.5 * betainc_pair(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2))[0]
    return half_tail if x > 0 else 1.0 - half_tail


def t_cdf(x, df):
    _check_df(df)
    return t_sf(-x, df)


def t_two_sided(x, df):
    """P(|T| >= |x|)."""
    _check_df(df)
    t2 = x * x
    return betainc_pair(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2))[0]


def f_cdf(x, df1, df2):
    _check_df(df1, df2)
    if x <= 0:
        return 0.0
    den = df1 * x + df2
    return betainc_pair(0.5 * df1, 0.5 * df2, df1 * x / den, df2 / den)[0]


def f_sf(x, df1, df2):
    """P(F > x), computed without cancellation in the upper tail."""
    _check_df(df1, df2)
    if x <= 0:
        return 1.0
    den = df1 * x + df2
    return betainc_pair(0.5 * df1, 0.5 * df2, df1 * x / den, df2 / den)[1]
