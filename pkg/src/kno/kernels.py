"""Closed-form kernels, Gram assembly and the taped kernel primitives.

Radial kinds (``wendland_c4``, ``gaussian``, ``matern_c4``) carry a single
shape parameter eps; ``spectral_mixture`` carries two weights, two frequency
vectors and two bandwidth vectors. Raw parameters are stored pre-softplus for
every strictly positive quantity (eps, nu); weights and frequencies are used
as-is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import autodiff as ad
from .autodiff import Tensor, record
from .errors import ContractError

RADIAL_KINDS = ("wendland_c4", "gaussian", "matern_c4")
KINDS = RADIAL_KINDS + ("spectral_mixture",)
_SQRT5 = math.sqrt(5.0)
_TWO_PI = 2.0 * math.pi
_TWO_PI_SQ = 2.0 * math.pi**2


# -- scalar/vectorised kernel profiles -------------------------------------------

def wendland_c4(r, eps):
    """C4 Wendland profile (1 - eps r)_+^6 (35 (eps r)^2 + 18 eps r + 3)."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ContractError("wendland_c4 needs r >= 0")
    if np.any(np.asarray(eps) <= 0):
        raise ContractError("wendland_c4 needs eps > 0")
    s = eps * r
    base = np.maximum(0.0, 1.0 - s)
    return base**6 * (35.0 * s * s + 18.0 * s + 3.0)


def _wendland_ds(s):
    # d/ds of the Wendland profile in s = eps r
    base = np.maximum(0.0, 1.0 - s)
    return -56.0 * s * base**5 * (5.0 * s + 1.0)


def gaussian(r, eps):
    r = np.asarray(r, dtype=np.float64)
    return np.exp(-(eps * r) ** 2)


def matern_c4(r, eps):
    """Matern nu = 5/2 profile (1 + sqrt5 s + 5/3 s^2) exp(-sqrt5 s)."""
    s = eps * np.asarray(r, dtype=np.float64)
    return (1.0 + _SQRT5 * s + (5.0 / 3.0) * s * s) * np.exp(-_SQRT5 * s)


def _profile_and_deps(kind: str, r: np.ndarray, eps):
    """Kernel values and their derivative with respect to eps."""
    s = eps * r
    if kind == "wendland_c4":
        base = np.maximum(0.0, 1.0 - s)
        b5 = base**5
        val = b5 * base * (35.0 * s * s + 18.0 * s + 3.0)
        dval = r * (-56.0 * s * b5 * (5.0 * s + 1.0))
    elif kind == "gaussian":
        val = np.exp(-s * s)
        dval = -2.0 * s * r * val
    elif kind == "matern_c4":
        e = np.exp(-_SQRT5 * s)
        val = (1.0 + _SQRT5 * s + (5.0 / 3.0) * s * s) * e
        dval = r * (-(5.0 / 3.0) * s * (1.0 + _SQRT5 * s) * e)
    else:
        raise ContractError(f"unknown radial kernel {kind!r}")
    return val, dval


def radial_profile(kind: str, r, eps):
    return _profile_and_deps(kind, np.asarray(r, dtype=np.float64), eps)[0]


def spectral_mixture(tau, lam, mu, nu):
    """sum_r lam_r prod_p cos(2 pi tau_p mu_rp) exp(-2 pi^2 tau_p^2 nu_rp).

    ``tau`` has shape (..., d); ``lam`` (2,), ``mu`` and ``nu`` (2, d).
    """
    tau = np.asarray(tau, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    nu = np.atleast_2d(np.asarray(nu, dtype=np.float64))
    if np.any(nu <= 0):
        raise ContractError("spectral mixture bandwidths must be positive")
    out = np.zeros(tau.shape[:-1])
    for r in range(lam.shape[0]):
        term = np.full(tau.shape[:-1], lam[r])
        for p in range(tau.shape[-1]):
            t = tau[..., p]
            term = term * np.cos(_TWO_PI * t * mu[r, p]) * np.exp(-_TWO_PI_SQ * t * t * nu[r, p])
        out = out + term
    return out


# -- KernelSpec -------------------------------------------------------------------

@dataclass
class KernelSpec:
    kind: str
    raw_params: np.ndarray
    dim: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.dim not in (1, 2, 3):
            raise ContractError("kernel dimension must be 1, 2 or 3")
        self.raw_params = np.asarray(self.raw_params, dtype=np.float64).ravel()
        expected = 1 if self.kind in RADIAL_KINDS else 2 + 4 * self.dim
        if self.raw_params.size != expected:
            raise ContractError(f"{self.kind} needs {expected} raw parameters, got {self.raw_params.size}")

    @classmethod
    def radial(cls, kind: str, eps: float, dim: int = 1) -> "KernelSpec":
        return cls(kind, ad.inverse_softplus([eps]), dim)

    @classmethod
    def mixture(cls, lam, mu, nu, dim: int = 1) -> "KernelSpec":
        mu = np.asarray(mu, dtype=np.float64).reshape(2, dim)
        nu = np.asarray(nu, dtype=np.float64).reshape(2, dim)
        raw = np.concatenate([np.asarray(lam, dtype=np.float64).ravel(), mu.ravel(),
                              ad.inverse_softplus(nu).ravel()])
        return cls("spectral_mixture", raw, dim)

    @property
    def eps(self) -> float:
        if self.kind not in RADIAL_KINDS:
            raise ContractError("spectral mixture kernels have no eps")
        return float(ad.softplus_np(self.raw_params[0]))

    @property
    def support_radius(self) -> float:
        return 1.0 / self.eps if self.kind == "wendland_c4" else math.inf

    def mixture_params(self):
        d = self.dim
        lam = self.raw_params[:2]
        mu = self.raw_params[2:2 + 2 * d].reshape(2, d)
        nu = ad.softplus_np(self.raw_params[2 + 2 * d:]).reshape(2, d)
        return lam, mu, nu


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != (spec.dim,) or y.shape != (spec.dim,):
        raise ContractError(f"points must have dimension {spec.dim}")
    if spec.kind == "spectral_mixture":
        return float(spectral_mixture(x - y, *spec.mixture_params()))
    return float(radial_profile(spec.kind, np.linalg.norm(x - y), spec.eps))


# -- Gram assembly ----------------------------------------------------------------

@dataclass
class GramMatrix:
    """Kernel matrix in dense or CSR storage."""

    values: object  # np.ndarray or scipy.sparse.csr_matrix

    @property
    def storage(self) -> str:
        return "compressed-sparse-rows" if sp.issparse(self.values) else "dense"

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def nnz(self) -> int:
        return self.values.nnz if sp.issparse(self.values) else int(np.count_nonzero(self.values))

    def toarray(self) -> np.ndarray:
        return self.values.toarray() if sp.issparse(self.values) else np.asarray(self.values)


def _as_points(X, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if dim == 1 else X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != dim:
        raise ContractError(f"point set must have shape (n, {dim}), got {X.shape}")
    if X.shape[0] == 0:
        raise ContractError("point set is empty")
    return X


def distance_matrix(X, Y) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("abk,abk->ab", diff, diff))


def support_pairs(X, Y, radius: float):
    """Index pairs (i, j) with ||x_i - y_j|| <= radius, via KD-trees."""
    tx, ty = cKDTree(X), cKDTree(Y)
    hits = tx.query_ball_tree(ty, radius)
    rows = np.repeat(np.arange(len(hits)), [len(h) for h in hits])
    cols = np.fromiter((j for h in hits for j in h), dtype=np.int64, count=rows.size)
    return rows, cols


def gram(spec: KernelSpec, X, Y) -> GramMatrix:
    """G_ij = k(x_i, y_j); CSR for the compactly supported Wendland kernel."""
    X = _as_points(X, spec.dim)
    Y = _as_points(Y, spec.dim)
    if spec.kind == "spectral_mixture":
        return GramMatrix(spectral_mixture(X[:, None, :] - Y[None, :, :], *spec.mixture_params()))
    eps = spec.eps
    if spec.kind != "wendland_c4":
        return GramMatrix(radial_profile(spec.kind, distance_matrix(X, Y), eps))
    rows, cols = support_pairs(X, Y, 1.0 / eps)
    r = np.linalg.norm(X[rows] - Y[cols], axis=1)
    keep = 1.0 - eps * r > 0.0
    rows, cols, r = rows[keep], cols[keep], r[keep]
    vals = radial_profile("wendland_c4", r, eps)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(X.shape[0], Y.shape[0]))
    mat.sort_indices()
    return GramMatrix(mat)


# -- taped primitives ---------------------------------------------------------------

def radial_gram(kind: str, eps: Tensor, dist: np.ndarray) -> Tensor:
    """Stack of q kernel matrices, one per entry of ``eps``; shape (q, A, B)."""
    eps = ad.as_tensor(eps)
    e = eps.data.reshape(-1, 1, 1)
    val, dval = _profile_and_deps(kind, dist[None, :, :], e)

    def backward(g):
        return (np.einsum("qab,qab->q", g, dval).reshape(eps.shape),)

    return record(f"{kind}_gram", val, (eps,), backward)


def mixture_gram(lam: Tensor, mu: Tensor, nu: Tensor, diff: np.ndarray) -> Tensor:
    """Spectral-mixture matrices for q kernels; shape (q, A, B).

    ``lam`` is (q, 2), ``mu`` and ``nu`` are (q, 2, d), ``diff`` is (A, B, d).
    """
    q, R = lam.shape
    d = diff.shape[-1]
    cosf = np.empty((q, R, d) + diff.shape[:2])
    expf = np.empty_like(cosf)
    for p in range(d):
        t = diff[None, None, :, :, p]
        cosf[:, :, p] = np.cos(_TWO_PI * t * mu.data[:, :, p, None, None])
        expf[:, :, p] = np.exp(-_TWO_PI_SQ * t * t * nu.data[:, :, p, None, None])
    factors = cosf * expf
    prods = np.prod(factors, axis=2)  # (q, R, A, B)
    out = np.einsum("qr,qrab->qab", lam.data, prods)

    def backward(g):
        glam = np.einsum("qab,qrab->qr", g, prods)
        gmu = np.zeros_like(mu.data)
        gnu = np.zeros_like(nu.data)
        for p in range(d):
            t = diff[None, None, :, :, p]
            others = np.ones_like(prods)
            for pp in range(d):
                if pp != p:
                    others = others * factors[:, :, pp]
            weighted = g[:, None] * lam.data[:, :, None, None] * others
            dcos = -np.sin(_TWO_PI * t * mu.data[:, :, p, None, None]) * _TWO_PI * t * expf[:, :, p]
            dexp = factors[:, :, p] * (-_TWO_PI_SQ * t * t)
            gmu[:, :, p] = np.einsum("qrab,qrab->qr", weighted, dcos)
            gnu[:, :, p] = np.einsum("qrab,qrab->qr", weighted, dexp)
        return glam, gmu, gnu

    return record("mixture_gram", out, (lam, mu, nu), backward)


def channel_groups(index_map: np.ndarray):
    """Contiguous channel ranges (kernel, start, stop) of a monotone index map."""
    index_map = np.asarray(index_map)
    groups = []
    start = 0
    for j in range(1, index_map.size + 1):
        if j == index_map.size or index_map[j] != index_map[start]:
            groups.append((int(index_map[start]) - 1, start, j))
            start = j
    return groups


def kernel_integral(G: Tensor, v: Tensor, index_map) -> Tensor:
    """out[j, m, a] = sum_b G[I(j), a, b] v[j, m, b] for channel-first ``v``.

    ``G`` is (q, A, B); ``v`` is (p, M, B); the result is (p, M, A). Channels
    sharing a kernel are contracted in one matrix product, and equal-size
    groups in one batched product.
    """
    G, v = ad.as_tensor(G), ad.as_tensor(v)
    p, M, B = v.shape
    q, A = G.shape[0], G.shape[1]
    groups = channel_groups(index_map)
    size = groups[0][2] - groups[0][1]
    if len(groups) == q and all(e - s == size for _, s, e in groups):
        # channel j sits in group j // size, kernel order matches group order
        vb = v.data.reshape(q, size * M, B)
        out = np.matmul(vb, G.data.transpose(0, 2, 1)).reshape(p, M, A)

        def backward(g):
            gb = g.reshape(q, size * M, A)
            gG = np.matmul(gb.transpose(0, 2, 1), vb) if G.requires_grad else None
            gv = np.matmul(gb, G.data).reshape(p, M, B) if v.requires_grad else None
            return gG, gv

        return record("kernel_integral", out, (G, v), backward)

    out = np.empty((p, M, A))
    for i, s, e in groups:
        out[s:e] = (v.data[s:e].reshape(-1, B) @ G.data[i].T).reshape(e - s, M, A)

    def backward(g):
        gG = np.zeros_like(G.data) if G.requires_grad else None
        gv = np.empty_like(v.data) if v.requires_grad else None
        for i, s, e in groups:
            gi = g[s:e].reshape(-1, A)
            if gv is not None:
                gv[s:e] = (gi @ G.data[i]).reshape(e - s, M, B)
            if gG is not None:
                gG[i] += gi.T @ v.data[s:e].reshape(-1, B)
        return gG, gv

    return record("kernel_integral", out, (G, v), backward)


def channel_mix(W: Tensor, x: Tensor, b: Tensor | None = None) -> Tensor:
    """Pointwise affine map over the leading channel axis: (k, ...) -> (p, ...).

    out[j, ...] = sum_i W[i, j] x[i, ...] + b[j].
    """
    W, x = ad.as_tensor(W), ad.as_tensor(x)
    k, p = W.shape
    if x.shape[0] != k:
        raise ContractError(f"channel_mix expects {k} input channels, got {x.shape[0]}")
    rest = x.shape[1:]
    flat = x.data.reshape(k, -1)
    out = W.data.T @ flat
    if b is not None:
        b = ad.as_tensor(b)
        out += b.data[:, None]
    out = out.reshape((p,) + rest)

    def backward(g):
        gf = g.reshape(p, -1)
        gW = flat @ gf.T if W.requires_grad else None
        gx = (W.data @ gf).reshape(x.shape) if x.requires_grad else None
        gb = gf.sum(axis=1) if b is not None and b.requires_grad else None
        return gW, gx, gb

    inputs = (W, x) if b is None else (W, x, b)
    return record("channel_mix", out, inputs, backward)
