"""Composite Gauss-Legendre rules on an interval."""

import numpy as np


def gauss_legendre_panels(a, b, order, panels=20):
    """Nodes and weights of a composite Gauss-Legendre rule on [a, b].

    The interval is split into ``panels`` equal panels, each carrying an
    ``order``-point Gauss-Legendre rule. Returns (nodes, weights) flattened in
    ascending node order; weights sum to b - a.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if panels < 1:
        raise ValueError(f"panels must be >= 1, got {panels}")
    if not b > a:
        raise ValueError(f"need b > a, got [{a}, {b}]")
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
