"""Gauss-Legendre rules on arbitrary intervals, single-panel and composite."""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

PANEL_NODES = 8


@lru_cache(maxsize=128)
def _reference_rule(n_nodes):
    nodes, weights = leggauss(n_nodes)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(n_nodes, a=-1.0, b=1.0):
    """Nodes and weights of the ``n_nodes``-point rule on ``[a, b]``.

    Exact for polynomials of degree ``2 * n_nodes - 1``.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    u, w = _reference_rule(int(n_nodes))
    half = 0.5 * (b - a)
    return a + half * (u + 1.0), half * w


def nodes_for_degree(degree):
    """Smallest node count that integrates a degree-``degree`` polynomial exactly."""
    return max(1, degree // 2 + 1)


def composite_gauss_legendre(n_points, a=0.0, b=1.0, panel_nodes=PANEL_NODES):
    """Composite rule with ``n_points // panel_nodes`` equal panels.

    ``n_points`` below ``panel_nodes`` still gets a single full panel.
    """
    n_panels = max(1, int(n_points) // panel_nodes)
    u, w = _reference_rule(panel_nodes)
    edges = np.linspace(a, b, n_panels + 1)
    left = edges[:-1, None]
    half = 0.5 * np.diff(edges)[:, None]
    x = left + half * (u[None, :] + 1.0)
    wx = half * w[None, :]
    return x.ravel(), wx.ravel()


def integrate(func, a, b, degree=None, n_points=512):
    """Integrate ``func`` over ``[a, b]``.

    With ``degree`` given the rule is exact for polynomial integrands of that
    degree; otherwise a 64-panel composite rule is used.
    """
    if degree is not None:
        x, w = gauss_legendre(nodes_for_degree(degree), a, b)
    else:
        x, w = composite_gauss_legendre(max(n_points, 64 * PANEL_NODES), a, b)
    return float(np.dot(w, func(x)))
