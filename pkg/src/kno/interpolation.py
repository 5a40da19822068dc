"""Wendland kernel interpolant on the training grid.

The interpolation matrix is the sparse Wendland Gram on the nodes, which is
symmetric positive definite for distinct nodes. One factorization serves every
sample (and every channel) sharing the grid and the shape parameter.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from . import autodiff as ad
from .autodiff import Tensor, record
from .errors import ConditioningError, ContractError
from .kernels import KernelSpec, _profile_and_deps, distance_matrix, gram

DUPLICATE_TOL = 1e-12
# Above this size the factorization falls back to conjugate gradients.
MAX_DIRECT = 20000


def fill_distance(nodes) -> float:
    """Largest nearest-neighbour spacing of the nodes (fill-distance proxy)."""
    nodes = np.asarray(nodes, dtype=np.float64)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    if nodes.shape[0] < 2:
        return 1.0
    d, _ = cKDTree(nodes).query(nodes, k=2)
    return float(d[:, 1].max())


def default_eps(nodes, support_factor: float = 4.0) -> float:
    return 1.0 / (support_factor * fill_distance(nodes))


class Factorization:
    """Sparse LU of an SPD matrix with a CG fallback for very large systems."""

    def __init__(self, A: sp.spmatrix):
        self.A = sp.csc_matrix(A)
        n = self.A.shape[0]
        self.lu = None
        if n <= MAX_DIRECT:
            try:
                self.lu = spla.splu(self.A)
            except RuntimeError as exc:
                raise ConditioningError(f"interpolation matrix is singular: {exc}", min_pivot=0.0) from exc
            piv = np.abs(self.lu.U.diagonal())
            self.min_pivot = float(piv.min())
            if not np.isfinite(self.min_pivot) or self.min_pivot <= 1e-14 * piv.max():
                raise ConditioningError(
                    f"interpolation matrix is numerically singular (min pivot {self.min_pivot:.3e})",
                    min_pivot=self.min_pivot)
        else:
            self.min_pivot = float("nan")

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.lu is not None:
            return self.lu.solve(np.ascontiguousarray(b))
        b2 = b.reshape(b.shape[0], -1)
        out = np.empty_like(b2)
        for k in range(b2.shape[1]):
            x, info = spla.cg(self.A, b2[:, k], rtol=1e-12, maxiter=10 * self.A.shape[0])
            if info != 0:
                raise ConditioningError("conjugate gradients did not converge")
            out[:, k] = x
        return out.reshape(b.shape)


def _check_nodes(nodes: np.ndarray) -> None:
    if nodes.shape[0] > 1 and cKDTree(nodes).query_pairs(DUPLICATE_TOL):
        raise ContractError("interpolation nodes contain near-duplicates (< 1e-12 apart)")


@dataclass
class Interpolant:
    nodes: np.ndarray
    kernel: KernelSpec
    coeffs: np.ndarray
    factorization: Factorization

    @property
    def eps(self) -> float:
        return self.kernel.eps


def factorize(nodes, kernel: KernelSpec) -> Factorization:
    nodes = np.asarray(nodes, dtype=np.float64).reshape(-1, kernel.dim)
    _check_nodes(nodes)
    return Factorization(gram(kernel, nodes, nodes).values)


def fit(nodes, values, kernel: KernelSpec, factorization: Factorization | None = None) -> Interpolant:
    """Solve G c = values with G the Wendland Gram on the nodes."""
    if kernel.kind != "wendland_c4":
        raise ContractError("the interpolant uses the Wendland kernel")
    nodes = np.asarray(nodes, dtype=np.float64).reshape(-1, kernel.dim)
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 1
    if squeeze:
        values = values[:, None]
    if values.shape[0] != nodes.shape[0]:
        raise ContractError("one value row per node is required")
    fac = factorization or factorize(nodes, kernel)
    coeffs = fac.solve(values)
    return Interpolant(nodes, kernel, coeffs[:, 0] if squeeze else coeffs, fac)


def eval(interp: Interpolant, points) -> np.ndarray:  # noqa: A001
    """sum_n c_n K(x, x_n) at each query point."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(-1, interp.kernel.dim) if interp.kernel.dim == 1 else points[None]
    if points.shape[1] != interp.kernel.dim:
        raise ContractError(f"query points must have dimension {interp.kernel.dim}")
    return gram(interp.kernel, points, interp.nodes).values @ interp.coeffs


class InterpolationOperator:
    """Grid-to-points interpolation with a trainable shape parameter.

    Caches the factorization of the node Gram for the last eps seen; the taped
    call differentiates through the solve with the adjoint method.
    """

    def __init__(self, nodes, points):
        self.nodes = np.asarray(nodes, dtype=np.float64)
        self.points = np.asarray(points, dtype=np.float64)
        self.dim = self.nodes.shape[1]
        _check_nodes(self.nodes)
        self._dist_nn = distance_matrix(self.nodes, self.nodes)
        self._dist_qn = distance_matrix(self.points, self.nodes)
        self._cache_eps = None
        self._cache = None

    def _factor(self, eps: float):
        if self._cache_eps != eps:
            A, dA = _profile_and_deps("wendland_c4", self._dist_nn, eps)
            B, dB = _profile_and_deps("wendland_c4", self._dist_qn, eps)
            self._cache = (Factorization(sp.csc_matrix(A)), B, dA, dB)
            self._cache_eps = eps
        return self._cache

    def __call__(self, eps: Tensor, values: np.ndarray) -> Tensor:
        """Values (N_T, K) at the nodes -> interpolant at the points (N_Q, K)."""
        eps = ad.as_tensor(eps)
        e = float(eps.data.reshape(-1)[0])
        fac, B, dA, dB = self._factor(e)
        values = np.asarray(values, dtype=np.float64)
        C = fac.solve(values)
        out = B @ C

        def backward(g):
            dC = B.T @ g
            lam = fac.solve(dC)
            # d/d eps of B C - (A^-1 dA A^-1) F contracted with g
            geps = np.sum((g @ C.T) * dB) - np.sum((lam @ C.T) * dA)
            return (np.full(eps.shape, geps),)

        return record("interpolate", out, (eps,), backward)
