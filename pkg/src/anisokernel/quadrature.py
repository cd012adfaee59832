"""Gauss-Legendre, Gauss-Jacobi and triangle rules shared by the package."""

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

_GL_CACHE = {}
_GJ_CACHE = {}


def gauss_legendre(order, lo=0.0, hi=1.0):
    """Gauss-Legendre nodes and weights on the interval (lo, hi)."""
    if order not in _GL_CACHE:
        _GL_CACHE[order] = leggauss(order)
    x, w = _GL_CACHE[order]
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def gauss_jacobi_power(order, beta, lo, hi):
    """Nodes and weights such that sum(w*f(x)) = int_lo^hi (x-lo)^beta f(x) dx.

    The algebraic weight (x-lo)^beta is carried by the rule, so the
    integrand is evaluated without it.  Requires beta > -1.
    """
    if beta <= -1.0:
        raise ValueError("power weight requires beta > -1, got %g" % beta)
    key = (order, beta)
    if key not in _GJ_CACHE:
        _GJ_CACHE[key] = roots_jacobi(order, 0.0, beta)
    x, w = _GJ_CACHE[key]
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), w * half ** (beta + 1.0)


def composite_gauss(breaks, order):
    """Composite Gauss-Legendre rule over consecutive intervals in `breaks`."""
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        x, w = gauss_legendre(order, lo, hi)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


# Symmetric triangle rules in barycentric coordinates, weights sum to one.
# Standard Dunavant tables for degrees 1, 2, 4 and 6.
def _perm3(a):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _perm6(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


_TRI_RULES = {
    1: (np.array([(1 / 3, 1 / 3, 1 / 3)]), np.array([1.0])),
    2: (
        np.array(_perm3(1.0 / 6.0)),
        np.full(3, 1.0 / 3.0),
    ),
    4: (
        np.array(_perm3(0.445948490915965) + _perm3(0.091576213509771)),
        np.concatenate([
            np.full(3, 0.223381589678011),
            np.full(3, 0.109951743655322),
        ]),
    ),
    6: (
        np.array(
            _perm3(0.249286745170910)
            + _perm3(0.063089014491502)
            + _perm6(0.310352451033785, 0.053145049844816)
        ),
        np.concatenate([
            np.full(3, 0.116786275726379),
            np.full(3, 0.050844906370207),
            np.full(6, 0.082851075618374),
        ]),
    ),
}


def triangle_rule(degree, vertices):
    """Quadrature points and weights on a physical triangle.

    Parameters
    ----------
    degree : polynomial degree integrated exactly (1, 2, 4 or 6).
    vertices : (3, 2) array of triangle corners.

    Returns
    -------
    points : (m, 2) array, weights : (m,) array summing to the triangle area.
    """
    if degree not in _TRI_RULES:
        degree = min(d for d in _TRI_RULES if d >= degree) if degree < 6 else 6
    bary, w = _TRI_RULES[degree]
    v = np.asarray(vertices, dtype=float)
    area = 0.5 * abs(
        (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1])
        - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1])
    )
    return bary @ v, w * area
