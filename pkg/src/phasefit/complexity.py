"""Localized kernel complexity and the critical radius it defines."""

from __future__ import annotations

import math

import numpy as np

R_LO = 1e-12
RESIDUAL_TOL = 1e-10
MAX_BISECTIONS = 400


def _spectrum(eigenvalues):
    mu = np.asarray(eigenvalues, dtype=float).ravel()
    if mu.size == 0:
        raise ValueError("empty eigenvalue vector")
    if np.any(np.isnan(mu)):
        raise ValueError("eigenvalues contain NaN")
    return np.clip(mu, 0.0, None)


def kernel_complexity(r, eigenvalues):
    """``sqrt(mean(min(r^2, mu_i)))``."""
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    mu = _spectrum(eigenvalues)
    return math.sqrt(float(np.minimum(r * r, mu).sum()) / mu.size)


def critical_radius(eigenvalues, c0):
    """Smallest ``r > 0`` with ``kernel_complexity(r) = c0 * r^2``.

    ``complexity(r) / r`` is non-increasing, so ``complexity(r) - c0 r^2``
    changes sign once on ``(0, inf)`` and plain bisection finds it.
    """
    if not c0 > 0:
        raise ValueError(f"c0 must be positive, got {c0}")
    mu = _spectrum(eigenvalues)
    if not np.any(mu > 0):
        raise ValueError("all eigenvalues are zero; the critical radius is undefined")

    def gap(r):
        return kernel_complexity(r, mu) - c0 * r * r

    lo = R_LO
    hi = max(1.0, math.sqrt(float(mu.sum()) / mu.size) / c0 + 1.0)
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo < 0 or g_hi > 0:
        raise RuntimeError(
            f"critical radius not bracketed: gap({lo:g})={g_lo:.3e}, gap({hi:g})={g_hi:.3e}"
        )
    r = hi
    for _ in range(MAX_BISECTIONS):
        r = 0.5 * (lo + hi)
        g = gap(r)
        # absolute test is the stricter of the two since 1 + c0 r^2 >= 1
        if abs(g) <= RESIDUAL_TOL:
            return r
        if g > 0:
            lo = r
        else:
            hi = r
        if hi - lo <= 4 * np.spacing(hi):
            break
    # interval collapsed to adjacent floats; take the endpoint with the smaller residual
    r = min((lo, hi), key=lambda v: abs(gap(v)))
    if abs(gap(r)) > RESIDUAL_TOL * (1.0 + c0 * r * r):
        raise RuntimeError(f"bisection stalled at r={r!r} with residual {gap(r):.3e}")
    return r


def critical_radius_sigma(eigenvalues, sigma, r_radius):
    """Critical radius for noise level ``sigma`` and ball radius ``r_radius``: ``c0 = R / (2 sigma)``."""
    if not sigma > 0 or not r_radius > 0:
        raise ValueError("sigma and r_radius must be positive")
    return critical_radius(eigenvalues, r_radius / (2.0 * sigma))
