"""Sobolev reproducing kernels on [0, 1] and their Gram matrices.

The order-``k`` kernel reproduces the Sobolev space of smoothness ``k + 1``::

    K(x, z) = sum_{j<=k} x^j z^j / (j!)^2 + int_0^{x^z} (x-t)^k (z-t)^k / (k!)^2 dt

with ``K(x, z) = 1 + min(x, z)`` for ``k = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from phasefit.quadrature import gauss_legendre

EIGEN_CLAMP = 1e-9
_BLOCK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class SobolevKernel:
    order_k: int = 0

    def __post_init__(self):
        if int(self.order_k) != self.order_k or self.order_k < 0:
            raise ValueError(f"kernel order must be a non-negative integer, got {self.order_k!r}")

    def __call__(self, x, z):
        return eval_kernel(self, x, z)


def _inv_factorials(k):
    """``1/j!`` for ``j = 0..k`` accumulated as reciprocal products."""
    out = np.empty(k + 1)
    acc = 1.0
    for j in range(k + 1):
        if j:
            acc /= j
        out[j] = acc
    return out


def _check_unit_interval(*arrays):
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if np.any(np.isnan(a)):
            raise ValueError("kernel arguments contain NaN")
        if np.any(a < 0.0) or np.any(a > 1.0):
            raise ValueError("kernel arguments must lie in [0, 1]")


def _kernel_block(k, x, z):
    """Kernel values for broadcast-compatible ``x`` and ``z`` arrays."""
    m = np.minimum(x, z)
    if k == 0:
        return 1.0 + m
    invf = _inv_factorials(k)
    xz = x * z
    poly = np.zeros(np.broadcast(x, z).shape)
    power = np.ones_like(poly)
    for j in range(k + 1):
        poly += power * invf[j] ** 2
        power = power * xz
    # degree-2k integrand in t: k+1 Gauss nodes are exact
    u, w = gauss_legendre(k + 1, 0.0, 1.0)
    spline = np.zeros_like(poly)
    for uj, wj in zip(u, w):
        t = m * uj
        spline += wj * ((x - t) * (z - t)) ** k
    spline *= m * invf[k] ** 2
    return poly + spline


def eval_kernel(kernel, x, z):
    """Evaluate the order-``k`` Sobolev kernel; scalars in, scalar out."""
    _check_unit_interval(x, z)
    out = _kernel_block(kernel.order_k, np.asarray(x, float), np.asarray(z, float))
    return float(out) if np.ndim(out) == 0 else out


def cross_kernel(kernel, xs, zs):
    """Unscaled ``len(xs) x len(zs)`` matrix ``K(xs_i, zs_j)``."""
    xs = np.asarray(xs, dtype=float).ravel()
    zs = np.asarray(zs, dtype=float).ravel()
    _check_unit_interval(xs, zs)
    out = np.empty((len(xs), len(zs)))
    rows = max(1, _BLOCK_ELEMENTS // max(1, len(zs) * (kernel.order_k + 1)))
    for start in range(0, len(xs), rows):
        stop = start + rows
        out[start:stop] = _kernel_block(kernel.order_k, xs[start:stop, None], zs[None, :])
    return out


@dataclass(frozen=True)
class KernelMatrix:
    """Gram matrix with entries ``K(x_i, x_j) / n``."""

    entries: np.ndarray
    xs: np.ndarray
    order_k: int

    @property
    def n(self):
        return len(self.xs)

    @cached_property
    def eigenvalues(self):
        return eigenvalues(self.entries)


def kernel_matrix(kernel, xs):
    xs = np.asarray(xs, dtype=float).ravel()
    if xs.size == 0:
        raise ValueError("kernel_matrix needs at least one design point")
    n = len(xs)
    raw = cross_kernel(kernel, xs, xs)
    # mirror the upper triangle so the result is exactly symmetric
    upper = np.triu(raw)
    entries = (upper + np.triu(raw, 1).T) / n
    entries.setflags(write=False)
    xs = xs.copy()
    xs.setflags(write=False)
    return KernelMatrix(entries, xs, kernel.order_k)


def eigenvalues(matrix, clamp=EIGEN_CLAMP):
    """Descending eigenvalues of a symmetric PSD matrix.

    Negative values no smaller than ``-clamp`` are rounding noise and set to
    zero; anything more negative means the matrix is not PSD.
    """
    a = matrix.entries if isinstance(matrix, KernelMatrix) else np.asarray(matrix, float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    try:
        vals = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"symmetric eigensolver did not converge for a {a.shape[0]}x{a.shape[0]} matrix: {exc}"
        ) from exc
    vals = vals[::-1].copy()
    if vals.size and vals[-1] < -clamp:
        raise ValueError(f"matrix is not PSD: smallest eigenvalue {vals[-1]:.3e}")
    vals[vals < 0] = 0.0
    return vals


def rkhs_norm_sq(pi, km):
    """``pi^T K pi`` clamped at zero."""
    pi = np.asarray(pi, dtype=float).ravel()
    if pi.shape[0] != km.n:
        raise ValueError(f"weight vector has length {pi.shape[0]}, matrix is {km.n}x{km.n}")
    return max(float(pi @ km.entries @ pi), 0.0)
