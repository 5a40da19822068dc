"""Benchmark data: random input functions and their solution operators.

Every generator draws sample ``m`` from its own stream seeded by
``(seed, m)``, so a dataset with fewer samples is a prefix of a larger one.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConditioningError, ContractError, NumericError
from .quadrature import REFERENCE_TRIANGLE, Mesh, refine

PROBLEMS = ("burgers", "advection1", "darcy_pwc", "darcy_cont", "darcy_tri", "darcy_tri_notch")
TEST_STREAM_OFFSET = 1_000_000

# Domain of the notched triangle and its five-triangle quadrature mesh.
NOTCH_POLYGON = np.array([[0.0, 0.0], [0.49, 0.0], [0.49, 0.4], [0.51, 0.4], [0.51, 0.0],
                          [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])
NOTCH_TRIANGLES = np.array([[0, 1, 2], [0, 2, 6], [2, 3, 6], [3, 4, 5], [3, 5, 6]])


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


# -- Gaussian random fields -------------------------------------------------------------

def periodic_gp_std(N: int, scale: float = 625.0, shift: float = 25.0, power: float = 2.0) -> np.ndarray:
    """Standard deviation of Fourier modes k = 0..N/2 of N(0, scale (-Lap + shift)^-power)."""
    k = np.arange(N // 2 + 1)
    return math.sqrt(scale) * ((2.0 * math.pi * k) ** 2 + shift) ** (-power / 2.0)


def sample_periodic_gp_1d(N: int, rng: np.random.Generator, scale: float = 625.0, shift: float = 25.0,
                          power: float = 2.0) -> np.ndarray:
    """Periodic GRF on x_j = j / N with E|u_hat_k|^2 = std_k^2 for u_hat_k = mean(u e^{-2 pi i k x})."""
    if N < 2 or N & (N - 1):
        raise ContractError("the spectral sampler needs N a power of two")
    std = periodic_gp_std(N, scale, shift, power)
    coef = (rng.standard_normal(std.size) + 1j * rng.standard_normal(std.size)) / math.sqrt(2.0)
    # the mean and Nyquist modes are real
    coef[[0, -1]] = coef[[0, -1]].real * math.sqrt(2.0)
    return np.fft.irfft(coef * std, n=N) * N


def neumann_gp_2d(N: int, rng: np.random.Generator, shift: float = 9.0, power: float = 2.0) -> np.ndarray:
    """GRF N(0, (-Lap + shift)^-power) on an N x N node grid of [0,1]^2, cosine (Neumann) basis."""
    x = np.linspace(0.0, 1.0, N)
    k = np.arange(N)
    basis = np.cos(math.pi * np.outer(x, k)) * np.where(k == 0, 1.0, math.sqrt(2.0))
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    std = (math.pi**2 * (K1**2 + K2**2) + shift) ** (-power / 2.0)
    xi = rng.standard_normal((N, N))
    return basis @ (std * xi) @ basis.T


def squared_exponential_sample(x: np.ndarray, length: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from GP(0, exp(-|x - x'|^2 / (2 l^2))) at points x (n, d) via jittered Cholesky."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    C = np.exp(-d2 / (2.0 * length**2))
    n = C.shape[0]
    for jitter in (1e-12, 1e-11, 1e-10, 1e-9, 1e-8):
        try:
            L = np.linalg.cholesky(C + jitter * np.eye(n))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise ConditioningError("GP covariance is not positive definite even with 1e-8 jitter")
    return L @ rng.standard_normal(n)


# -- Burgers ----------------------------------------------------------------------------

DEFAULT_BURGERS_DT = 2.5e-4


def solve_burgers(u0, nu: float = 0.1, t_end: float = 1.0, dt: float | None = None) -> np.ndarray:
    """Periodic viscous Burgers on [0,1): pseudo-spectral, 2/3 dealiasing, integrating-factor RK4.

    ``u0`` is (N,) or (batch, N) on x_j = j / N.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    squeeze = u0.ndim == 1
    U = np.atleast_2d(u0)
    N = U.shape[-1]
    k = 2.0 * math.pi * np.fft.rfftfreq(N, d=1.0 / N)
    keep = np.abs(np.fft.rfftfreq(N, d=1.0 / N)) < N / 3.0
    umax = max(float(np.abs(U).max()), 1e-12)
    if dt is None:
        # fixed per grid, never data-dependent, so batching cannot change a sample
        dt = DEFAULT_BURGERS_DT * min(1.0, 512.0 / N)
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    dt = t_end / n_steps
    E = np.exp(-nu * k**2 * dt / 2.0)
    E2 = E * E
    g = -0.5j * k * keep

    def nonlin(v):
        return g * np.fft.rfft(np.fft.irfft(v * keep, n=N) ** 2)

    v = np.fft.rfft(U)
    for _ in range(n_steps):
        a = dt * nonlin(v)
        b = dt * nonlin(E * (v + a / 2.0))
        c = dt * nonlin(E * v + b / 2.0)
        d = dt * nonlin(E2 * v + E * c)
        v = E2 * v + (E2 * a + 2.0 * E * (b + c) + d) / 6.0
    out = np.fft.irfft(v, n=N)
    if not np.all(np.isfinite(out)) or np.abs(out).max() > 1e3 * umax + 1e3:
        raise NumericError("Burgers solution blew up (time step too large for the data)")
    return out[0] if squeeze else out


def burgers_pairs(M: int, resolution: int, seed: int, offset: int = 0, nu: float = 0.1,
                  t_end: float = 1.0, oversample: int = 4, dt: float | None = None):
    """(u0, u(., t_end)) on the periodic grid j / resolution, solved on an oversampled grid."""
    fine = resolution * oversample
    U0 = np.stack([sample_periodic_gp_1d(fine, sample_rng(seed, offset + m)) for m in range(M)])
    U1 = solve_burgers(U0, nu=nu, t_end=t_end, dt=dt)
    return U0[:, ::oversample], U1[:, ::oversample]


# -- Advection --------------------------------------------------------------------------

def square_wave(x, center: float, width: float, height: float) -> np.ndarray:
    return height * (np.abs(np.asarray(x) - center) < width / 2.0).astype(np.float64)


def advection_pair(center: float, width: float, height: float, t: float = 0.5, N: int = 40,
                   grid: np.ndarray | None = None):
    """Square wave and its exact periodic translate u0((x - t) mod 1)."""
    x = np.linspace(0.0, 1.0, N) if grid is None else np.asarray(grid)
    return square_wave(x, center, width, height), square_wave(np.mod(x - t, 1.0), center, width, height)


def advection_params(rng: np.random.Generator):
    return rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.6), rng.uniform(1.0, 2.0)


# -- Darcy on the unit square --------------------------------------------------------------

def threshold_permeability(mu) -> np.ndarray:
    """12 where the field is non-negative, 3 elsewhere."""
    return np.where(np.asarray(mu) >= 0.0, 12.0, 3.0)


def darcy_pwc_field(N: int, rng: np.random.Generator) -> np.ndarray:
    return threshold_permeability(neumann_gp_2d(N, rng, shift=9.0, power=2.0))


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def darcy_fv_system(K: np.ndarray, f, dirichlet=("left", "right", "bottom", "top")):
    """Node-centred 5-point system for -div(K grad h) = f on an N x N grid of [0,1]^2.

    Face coefficients are harmonic means of nodal K. Sides not listed in
    ``dirichlet`` (h = 0) get zero-flux conditions through half control volumes.
    Returns ``(A, b, free)`` with ``free`` the flat indices of unknown nodes.
    """
    K = np.asarray(K, dtype=np.float64)
    N = K.shape[0]
    if K.shape != (N, N):
        raise ContractError("K must be a square node field")
    if np.any(K <= 0):
        raise ContractError("permeability must be positive")
    h = 1.0 / (N - 1)
    F = np.broadcast_to(np.asarray(f, dtype=np.float64), (N, N))
    idx = np.arange(N * N).reshape(N, N)  # idx[i, j]: x = i h, y = j h
    fixed = np.zeros((N, N), dtype=bool)
    if "left" in dirichlet:
        fixed[0, :] = True
    if "right" in dirichlet:
        fixed[-1, :] = True
    if "bottom" in dirichlet:
        fixed[:, 0] = True
    if "top" in dirichlet:
        fixed[:, -1] = True
    # control-volume fractions: half at boundary lines
    wx = np.ones(N); wx[[0, -1]] = 0.5
    vol = np.outer(wx, wx)
    rows, cols, vals = [], [], []
    diag = np.zeros((N, N))
    # x-faces between (i, j) and (i+1, j); face length scales with the y half-width
    ax = _harmonic(K[:-1, :], K[1:, :]) * wx[None, :]
    ay = _harmonic(K[:, :-1], K[:, 1:]) * wx[:, None]
    for a, P, Q in ((ax, idx[:-1, :], idx[1:, :]), (ay, idx[:, :-1], idx[:, 1:])):
        a, P, Q = a.ravel(), P.ravel(), Q.ravel()
        rows += [P, Q]; cols += [Q, P]; vals += [-a, -a]
        np.add.at(diag.ravel(), P, a)
        np.add.at(diag.ravel(), Q, a)
    A = sp.csr_matrix((np.concatenate(vals + [diag.ravel()]),
                       (np.concatenate(rows + [idx.ravel()]), np.concatenate(cols + [idx.ravel()]))),
                      shape=(N * N, N * N))
    b = (F * vol * h * h).ravel()
    free = idx[~fixed]
    return A[free][:, free].tocsc(), b[free], free


def _spd_solve(A, b):
    try:
        x = spla.splu(A).solve(b)
    except RuntimeError as exc:
        raise ConditioningError(f"singular system: {exc}") from exc
    res = np.linalg.norm(A @ x - b)
    if not np.isfinite(res) or res > 1e-8 * max(np.linalg.norm(b), 1e-300):
        raise ConditioningError(f"linear solve residual too large ({res:.3e})")
    return x


def solve_darcy_grid(K: np.ndarray, f=1.0, dirichlet=("left", "right", "bottom", "top")) -> np.ndarray:
    """Pressure on the full N x N node grid, zero on Dirichlet sides."""
    K = np.asarray(K, dtype=np.float64)
    N = K.shape[0]
    out = np.zeros(N * N)
    if np.all(np.asarray(f) == 0):
        return out.reshape(N, N)
    A, b, free = darcy_fv_system(K, f, dirichlet)
    out[free] = _spd_solve(A, b)
    return out.reshape(N, N)


def square_grid(N: int) -> np.ndarray:
    xs = np.linspace(0.0, 1.0, N)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


# -- Darcy on triangulated domains -----------------------------------------------------------

def triangle_mesh(n: int = 18) -> Mesh:
    """The reference triangle split into n^2 congruent triangles."""
    return refine(Mesh(REFERENCE_TRIANGLE.copy(), [[0, 1, 2]]), n)


def notch_coarse_mesh() -> Mesh:
    return Mesh(NOTCH_POLYGON.copy(), NOTCH_TRIANGLES.copy())


def notch_mesh(n: int = 8) -> Mesh:
    return refine(notch_coarse_mesh(), n)


def boundary_gp_sample(mesh: Mesh, rng: np.random.Generator, length: float = 0.2) -> np.ndarray:
    """GP draw in the x-coordinate, evaluated at the boundary vertices (mesh order)."""
    xb = mesh.vertices[mesh.boundary_vertices, 0]
    keys = np.round(xb, 12)
    ux, inverse = np.unique(keys, return_inverse=True)
    return squared_exponential_sample(ux, length, rng)[inverse]


def p1_system(mesh: Mesh, K: float = 0.1, f: float = -1.0):
    """Stiffness matrix and load vector of -div(K grad h) = f with P1 elements."""
    V = mesh.vertices
    T = mesh.triangles
    p0, p1, p2 = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    area = 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))
    if np.any(area <= 1e-14):
        raise ContractError(f"element {int(np.argmin(area))} is degenerate")
    # gradients of the barycentric basis functions: rotated opposite edges / (2 area)
    edges = np.stack([p2 - p1, p0 - p2, p1 - p0], axis=1)  # (T, 3, 2)
    grads = np.stack([-edges[..., 1], edges[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    local = K * area[:, None, None] * np.einsum("tad,tbd->tab", grads, grads)
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    A = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(len(V), len(V)))
    b = np.zeros(len(V))
    np.add.at(b, T.ravel(), np.repeat(f * area / 3.0, 3))
    return A, b


def solve_darcy_fem(mesh: Mesh, bc: np.ndarray, K: float = 0.1, f: float = -1.0) -> np.ndarray:
    """Nodal P1 solution with Dirichlet values ``bc`` on ``mesh.boundary_vertices``."""
    bc = np.asarray(bc, dtype=np.float64)
    if bc.shape != mesh.boundary_vertices.shape:
        raise ContractError("one boundary value per boundary vertex is required")
    A, b = p1_system(mesh, K, f)
    h = np.zeros(len(mesh.vertices))
    h[mesh.boundary_vertices] = bc
    interior = np.flatnonzero(~mesh.boundary_mask)
    if interior.size:
        A = A.tocsr()
        rhs = b[interior] - A[interior][:, mesh.boundary_vertices] @ bc
        h[interior] = _spd_solve(A[interior][:, interior].tocsc(), rhs)
    return h


# -- datasets and files ------------------------------------------------------------------------

@dataclass
class DatasetSpec:
    problem: str
    m_train: int = 1000
    m_test: int = 200
    resolution: int | None = None
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ContractError(f"unknown problem {self.problem!r}; choose from {', '.join(PROBLEMS)}")
        if self.resolution is None:
            self.resolution = DEFAULT_RESOLUTION[self.problem]
        if self.resolution <= 0 or self.m_train < 0 or self.m_test < 0:
            raise ContractError("resolution and sample counts must be positive")


DEFAULT_RESOLUTION = {"burgers": 128, "advection1": 40, "darcy_pwc": 29, "darcy_cont": 20,
                      "darcy_tri": 18, "darcy_tri_notch": 8}


@dataclass
class Dataset:
    grid: np.ndarray     # (N_T, d)
    inputs: np.ndarray   # (M, N_T, d_u)
    outputs: np.ndarray  # (M, N_T, d_y)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inputs.shape[:2] != self.outputs.shape[:2] or self.inputs.shape[1] != self.grid.shape[0]:
            raise ContractError("inputs, outputs and grid disagree in shape")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.outputs))):
            raise NumericError("dataset contains non-finite values")

    @property
    def M(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.grid, self.inputs[idx], self.outputs[idx], dict(self.meta))

    def write(self, path) -> Path:
        path = Path(path)
        header = {"problem": self.meta.get("problem"), "M": self.M, "N_T": self.grid.shape[0],
                  "d": self.grid.shape[1], "d_u": self.inputs.shape[2], "d_y": self.outputs.shape[2],
                  "meta": self.meta}
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "wb") as fh:
                fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
                for arr in (self.grid, self.inputs, self.outputs):
                    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        except OSError as exc:
            raise OSError(f"could not write dataset {path}: {exc}") from exc
        return path

    @classmethod
    def read(cls, path) -> "Dataset":
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise OSError(f"could not read dataset {path}: {exc}") from exc
        nl = raw.index(b"\n")
        h = json.loads(raw[:nl])
        data = np.frombuffer(raw[nl + 1:], dtype="<f8")
        n_g = h["N_T"] * h["d"]
        n_i = h["M"] * h["N_T"] * h["d_u"]
        grid = data[:n_g].reshape(h["N_T"], h["d"]).copy()
        inputs = data[n_g:n_g + n_i].reshape(h["M"], h["N_T"], h["d_u"]).copy()
        outputs = data[n_g + n_i:].reshape(h["M"], h["N_T"], h["d_y"]).copy()
        meta = h.get("meta") or {"problem": h["problem"]}
        return cls(grid, inputs, outputs, meta)


def problem_mesh(spec: DatasetSpec) -> Mesh:
    if "mesh_path" in spec.params:
        return Mesh.read(spec.params["mesh_path"])
    if spec.problem == "darcy_tri":
        return triangle_mesh(spec.resolution)
    return notch_mesh(spec.resolution)


def generate(spec: DatasetSpec, M: int, offset: int) -> Dataset:
    """M samples of ``spec.problem`` from streams offset..offset+M-1."""
    pr, res, seed, prm = spec.problem, spec.resolution, spec.seed, spec.params
    meta = {"problem": pr, "spec": asdict(spec)}
    if pr == "burgers":
        u0, u1 = burgers_pairs(M, res, seed, offset, nu=prm.get("nu", 0.1), t_end=prm.get("t_end", 1.0),
                               oversample=prm.get("oversample", 4))
        grid = (np.arange(res) / res)[:, None]
        return Dataset(grid, u0[..., None], u1[..., None], meta)
    if pr == "advection1":
        grid = np.linspace(0.0, 1.0, res)
        pairs = [advection_pair(*advection_params(sample_rng(seed, offset + m)), t=prm.get("t", 0.5), grid=grid)
                 for m in range(M)]
        u0 = np.array([a for a, _ in pairs]).reshape(M, res, 1)
        u1 = np.array([b for _, b in pairs]).reshape(M, res, 1)
        return Dataset(grid[:, None], u0, u1, meta)
    if pr == "darcy_pwc":
        stride = prm.get("fine_stride", 4)
        fine = (res - 1) * stride + 1
        Ks, Hs = [], []
        for m in range(M):
            K = darcy_pwc_field(fine, sample_rng(seed, offset + m))
            H = solve_darcy_grid(K, f=prm.get("f", 1.0))
            Ks.append(K[::stride, ::stride].ravel())
            Hs.append(H[::stride, ::stride].ravel())
        return Dataset(square_grid(res), np.array(Ks).reshape(M, -1, 1), np.array(Hs).reshape(M, -1, 1), meta)
    if pr == "darcy_cont":
        grid = square_grid(res)
        Ks, Hs = [], []
        for m in range(M):
            rng = sample_rng(seed, offset + m)
            K = np.exp(squared_exponential_sample(grid, prm.get("length", 0.25), rng)).reshape(res, res)
            H = solve_darcy_grid(K, f=prm.get("f", 1.0), dirichlet=("left", "right"))
            Ks.append(K.ravel()); Hs.append(H.ravel())
        return Dataset(grid, np.array(Ks).reshape(M, -1, 1), np.array(Hs).reshape(M, -1, 1), meta)
    mesh = problem_mesh(spec)
    mask = mesh.boundary_mask.astype(np.float64)
    inputs, outputs = [], []
    for m in range(M):
        bc = boundary_gp_sample(mesh, sample_rng(seed, offset + m), prm.get("length", 0.2))
        h = solve_darcy_fem(mesh, bc, K=prm.get("K", 0.1), f=prm.get("f", -1.0))
        ext = np.zeros(len(mesh.vertices))
        ext[mesh.boundary_vertices] = bc
        inputs.append(np.column_stack([ext, mask]))
        outputs.append(h[:, None])
    return Dataset(mesh.vertices.copy(), np.array(inputs), np.array(outputs), meta)


def build_dataset(spec: DatasetSpec, out_dir=None) -> tuple[Dataset, Dataset, list]:
    """Train and test sets; written as ``<problem>-train.dat`` / ``-test.dat`` when ``out_dir`` is set."""
    train = generate(spec, spec.m_train, 0)
    test = generate(spec, spec.m_test, TEST_STREAM_OFFSET)
    paths = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        paths = [train.write(out_dir / f"{spec.problem}-train.dat"),
                 test.write(out_dir / f"{spec.problem}-test.dat")]
    return train, test, paths
