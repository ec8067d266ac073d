"""
Lagrange bases on the reference interval [0, 1] and the reference triangle.
"""
from functools import lru_cache
from typing import List, Tuple

import numpy as np


def gauss_legendre_unit(n_points: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1] (weights sum to 1)."""
    xi, w = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (xi + 1.0), 0.5 * w


class IntervalLagrange:
    """Uniform-node Lagrange basis of degree `order` on [0, 1], endpoints included."""

    def __init__(self, order: int):
        if order < 1:
            raise ValueError(f"interval Lagrange basis needs order >= 1, got {order}")
        self.order = order
        self.nodes = np.arange(order + 1) / order
        s_gauss, w_gauss = gauss_legendre_unit(order + 1)
        vals = self.values(s_gauss)
        self.mass = np.einsum("q,qi,qj->ij", w_gauss, vals, vals)

    def values(self, s) -> np.ndarray:
        """Basis values, shape s.shape + (order+1,). Exact 0/1 at the nodes."""
        s = np.asarray(s, dtype=float)
        out = np.ones(s.shape + (self.order + 1,))
        for j, sj in enumerate(self.nodes):
            for i, si in enumerate(self.nodes):
                if i != j:
                    out[..., j] *= (s - si) / (sj - si)
        return out

    def derivatives(self, s) -> np.ndarray:
        """d/ds of the basis on the reference interval."""
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + (self.order + 1,))
        for j, sj in enumerate(self.nodes):
            for k, sk in enumerate(self.nodes):
                if k == j:
                    continue
                term = np.full(s.shape, 1.0 / (sj - sk))
                for i, si in enumerate(self.nodes):
                    if i != j and i != k:
                        term = term * (s - si) / (sj - si)
                out[..., j] += term
        return out


def _lattice(order: int) -> List[Tuple[int, int, int]]:
    """
    Barycentric lattice multi-indices (c0, c1, c2), c0+c1+c2 = order.

    Vertices come first, then edge nodes edge by edge (edges 0-1, 1-2, 2-0),
    then interior nodes.
    """
    k = order
    nodes = [(k, 0, 0), (0, k, 0), (0, 0, k)]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        for m in range(1, k):
            c = [0, 0, 0]
            c[a] = k - m
            c[b] = m
            nodes.append(tuple(c))
    for c1 in range(1, k):
        for c2 in range(1, k - c1):
            nodes.append((k - c1 - c2, c1, c2))
    return nodes


class TriangleLagrange:
    """P^k Lagrange basis on the reference triangle (0,0), (1,0), (0,1)."""

    def __init__(self, order: int):
        if order < 1:
            raise ValueError(f"triangle Lagrange basis needs order >= 1, got {order}")
        self.order = order
        self.lattice = _lattice(order)
        self.n_basis = len(self.lattice)
        self.nodes = np.array([[c1 / order, c2 / order] for _, c1, c2 in self.lattice])
        self.exponents = np.array([(a, b) for a in range(order + 1) for b in range(order + 1 - a)])
        vandermonde = self._monomials(self.nodes)
        self.coefficients = np.linalg.inv(vandermonde)

    def _monomials(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        return xi[..., 0, None] ** a * xi[..., 1, None] ** b

    def values(self, xi) -> np.ndarray:
        """Shape xi.shape[:-1] + (n_basis,)."""
        return self._monomials(xi) @ self.coefficients

    def gradients(self, xi) -> np.ndarray:
        """Reference gradients, shape xi.shape[:-1] + (n_basis, 2)."""
        xi = np.asarray(xi, dtype=float)
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        x = xi[..., 0, None]
        y = xi[..., 1, None]
        dx = a * x ** np.maximum(a - 1, 0) * y ** b
        dy = b * x ** a * y ** np.maximum(b - 1, 0)
        return np.stack([dx @ self.coefficients, dy @ self.coefficients], axis=-1)


@lru_cache(maxsize=None)
def interval_basis(order: int) -> IntervalLagrange:
    return IntervalLagrange(order)


@lru_cache(maxsize=None)
def triangle_basis(order: int) -> TriangleLagrange:
    return TriangleLagrange(order)
