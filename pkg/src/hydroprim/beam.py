"""Clamped-clamped Euler-Bernoulli beam eigenfunctions on [0, 1].

The modes satisfy C(0) = C'(0) = C(1) = C'(1) = 0, so stream functions built
from products of them give velocity fields vanishing on the boundary of a
rectangle.  The textbook form ``cosh - cos - sigma (sinh - sin)`` loses
roughly ``exp(lambda)`` in relative accuracy; the hyperbolic part is evaluated
here in split exponential form instead, which is stable for any mode number.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import bisect


def _frequency_equation(lam: float) -> float:
    # cos(l) cosh(l) = 1, divided through by cosh(l) to stay bounded
    return np.cos(lam) - 1.0 / np.cosh(lam)


def beam_roots(n: int) -> np.ndarray:
    """First ``n`` positive roots of ``cos(l) cosh(l) = 1``."""
    roots = np.empty(n)
    for i in range(n):
        centre = (i + 1.5) * np.pi
        roots[i] = bisect(_frequency_equation, centre - 0.5, centre + 0.5,
                          xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return roots


def beam_derivatives(lam: float, xi: np.ndarray, order: int = 3) -> np.ndarray:
    """Values and derivatives of the clamped beam mode with root ``lam``.

    Returns an array of shape ``(order + 1, len(xi))`` holding
    C, C', C'', C''' (up to ``order``) at the points ``xi`` in [0, 1].
    The mode is left unnormalised.
    """
    xi = np.asarray(xi, dtype=float)
    s, c = np.sin(lam), np.cos(lam)
    em = np.exp(-lam)
    sigma = (np.cosh(lam) - c) / (np.sinh(lam) - s)
    # (1 - sigma)/2 * exp(lam*xi), rewritten without overflow or cancellation
    grow = (c - s - em) * np.exp(lam * (xi - 1.0)) / (1.0 - em * em - 2.0 * em * s)
    decay = 0.5 * (1.0 + sigma) * np.exp(-lam * xi)
    hyp_even = decay + grow      # cosh - sigma sinh
    hyp_odd = grow - decay       # sinh - sigma cosh
    sx, cx = np.sin(lam * xi), np.cos(lam * xi)

    out = np.empty((order + 1,) + xi.shape)
    terms = (
        hyp_even - cx + sigma * sx,
        hyp_odd + sx + sigma * cx,
        hyp_even + cx - sigma * sx,
        hyp_odd - sx - sigma * cx,
    )
    for d in range(order + 1):
        out[d] = lam**d * terms[d]
    return out
