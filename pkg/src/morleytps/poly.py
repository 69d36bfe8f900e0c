"""Bivariate monomials and triangle quadrature."""
from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def exponents(degree: int) -> tuple:
    """Monomial exponents ``(a, b)`` of ``s**a * t**b`` ordered by total degree."""
    return tuple((k - b, b) for k in range(degree + 1) for b in range(k + 1))


def monomials(s, t, degree: int, ds: int = 0, dt: int = 0) -> np.ndarray:
    """Values of ``d^ds/ds d^dt/dt (s**a t**b)`` for every monomial, shape (..., M)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    cols = []
    for a, b in exponents(degree):
        if a < ds or b < dt:
            cols.append(np.zeros_like(s))
            continue
        c = factorial(a) // factorial(a - ds) * factorial(b) // factorial(b - dt)
        cols.append(c * s ** (a - ds) * t ** (b - dt))
    return np.stack(cols, axis=-1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int = 11):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Exact for polynomials of total degree <= ``degree``.  Returns
    ``(points (Q, 2), weights (Q,))`` with weights summing to 1/2.
    """
    k = degree // 2 + 1
    # Gauss-Jacobi(1, 0) absorbs the Duffy Jacobian (1 - u) in the collapsed direction
    xu, wu = roots_jacobi(k, 1.0, 0.0)
    xv, wv = roots_legendre(k)
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    wu = wu / 4.0
    wv = wv / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, W.ravel()
