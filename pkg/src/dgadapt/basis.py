"""Tensor-product polynomial bases and Gauss-Legendre quadrature.

The local space on each cell is Q^p on the reference square [-1,1]^2,
spanned by a nodal Lagrange basis on Gauss-Lobatto points (well conditioned
up to p = 10).  The 1D cardinal functions are stored as Legendre series so
that values and derivatives at arbitrary points are stable to evaluate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


def gll_nodes(p: int) -> np.ndarray:
    """Gauss-Lobatto-Legendre nodes (p+1 points on [-1, 1])."""
    if p < 1:
        raise ValueError("degree must be >= 1")
    if p == 1:
        return np.array([-1.0, 1.0])
    coef = np.zeros(p + 1)
    coef[p] = 1.0
    interior = legendre.legroots(legendre.legder(coef))
    return np.concatenate(([-1.0], np.sort(interior), [1.0]))


class TensorBasis:
    """Nodal tensor-product basis of degree p in each variable.

    Local index convention: ``k = jy * (p+1) + jx`` where ``jx`` / ``jy``
    index the 1D nodes in x / y.
    """

    def __init__(self, p: int):
        if not 1 <= p <= 10:
            raise ValueError("degree p must be in [1, 10]")
        self.p = p
        self.n_loc = (p + 1) ** 2
        self.nodes_1d = gll_nodes(p)
        # Legendre coefficients of the 1D cardinal functions: column i of
        # _coef represents L_i, i.e. legval(nodes[j], _coef[:, i]) = delta_ij.
        vander = legendre.legvander(self.nodes_1d, p)
        self._coef = np.linalg.inv(vander)
        self._coef_d1 = legendre.legder(self._coef, 1, axis=0)
        self._coef_d2 = legendre.legder(self._coef, 2, axis=0)

    def eval_1d(self, x, deriv=0):
        """Values of the p+1 cardinal functions, shape ``x.shape + (p+1,)``."""
        x = np.asarray(x, dtype=float)
        coef = (self._coef, self._coef_d1, self._coef_d2)[deriv]
        out = legendre.legval(x, coef, tensor=True)
        return np.moveaxis(out, 0, -1)

    def tabulate(self, pts, nderiv=0):
        """Value / derivative tables at reference points.

        Parameters
        ----------
        pts : array, shape (..., 2)
            Points in the reference square.
        nderiv : int
            0 -> values only; 1 -> add gradients; 2 -> add second
            derivatives ``(d2x, dxdy, d2y)``.

        Returns
        -------
        tuple of arrays
            ``values`` with shape ``(..., n_loc)``; optionally ``grads``
            with shape ``(..., n_loc, 2)`` and ``hess`` with shape
            ``(..., n_loc, 3)``.  Derivatives are in reference coordinates.
        """
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        p1 = self.p + 1
        vx = self.eval_1d(x)
        vy = self.eval_1d(y)
        shape = x.shape + (self.n_loc,)
        values = np.einsum("...i,...j->...ji", vx, vy).reshape(shape)
        if nderiv == 0:
            return (values,)
        dx = self.eval_1d(x, 1)
        dy = self.eval_1d(y, 1)
        grads = np.empty(shape + (2,))
        grads[..., 0] = np.einsum("...i,...j->...ji", dx, vy).reshape(shape)
        grads[..., 1] = np.einsum("...i,...j->...ji", vx, dy).reshape(shape)
        if nderiv == 1:
            return values, grads
        d2x = self.eval_1d(x, 2)
        d2y = self.eval_1d(y, 2)
        hess = np.empty(shape + (3,))
        hess[..., 0] = np.einsum("...i,...j->...ji", d2x, vy).reshape(shape)
        hess[..., 1] = np.einsum("...i,...j->...ji", dx, dy).reshape(shape)
        hess[..., 2] = np.einsum("...i,...j->...ji", vx, d2y).reshape(shape)
        return values, grads, hess


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on the reference square and edge."""

    q: int
    points: np.ndarray  # (q*q, 2)
    weights: np.ndarray  # (q*q,), sums to 4
    edge_points: np.ndarray  # (q,)
    edge_weights: np.ndarray  # (q,), sums to 2


def gauss_rule(q: int) -> QuadratureRule:
    """Gauss-Legendre rule with q points per direction (exact to 2q-1)."""
    if not 1 <= q <= 30:
        raise ValueError("quadrature order q must be in [1, 30]")
    return _gauss_rule_cached(q)


@lru_cache(maxsize=None)
def _gauss_rule_cached(q):
    x, w = np.polynomial.legendre.leggauss(q)
    gx, gy = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    wts = np.outer(w, w).ravel()
    return QuadratureRule(q, pts, wts, x.copy(), w.copy())


@lru_cache(maxsize=None)
def get_basis(p: int) -> TensorBasis:
    return TensorBasis(p)


@dataclass(frozen=True)
class AffineMap:
    """Affine map from the reference square [-1,1]^2 to a cell rectangle."""

    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def hx(self):
        return self.x1 - self.x0

    @property
    def hy(self):
        return self.y1 - self.y0

    @property
    def jacobian(self):
        return 0.25 * self.hx * self.hy

    @property
    def grad_scale(self):
        """Diagonal reference->physical gradient factors (2/hx, 2/hy)."""
        return 2.0 / self.hx, 2.0 / self.hy

    def to_physical(self, ref):
        ref = np.asarray(ref, dtype=float)
        out = np.empty_like(ref)
        out[..., 0] = 0.5 * (self.x0 + self.x1) + 0.5 * self.hx * ref[..., 0]
        out[..., 1] = 0.5 * (self.y0 + self.y1) + 0.5 * self.hy * ref[..., 1]
        return out

    def to_reference(self, phys):
        phys = np.asarray(phys, dtype=float)
        out = np.empty_like(phys)
        out[..., 0] = (2.0 * phys[..., 0] - (self.x0 + self.x1)) / self.hx
        out[..., 1] = (2.0 * phys[..., 1] - (self.y0 + self.y1)) / self.hy
        return out
