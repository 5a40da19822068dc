"""The discretized kernel neural operator.

Latent functions are stored channel-first, ``(p, M, N)``: channel, sample,
point. Every pointwise dense map is then a single matrix product and channels
sharing a trainable kernel are contiguous (the index map is monotone).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import autodiff as ad
from . import interpolation
from .autodiff import Tensor
from .errors import ContractError
from .kernels import (KernelSpec, channel_mix, distance_matrix, kernel_integral, mixture_gram,
                      radial_gram)
from .normalization import Normalizer
from .quadrature import QuadRule

PARAM_ORDER_VERSION = 1

KERNEL_CONFIGS = {
    "wendland-sm": ("wendland_c4", "spectral_mixture"),
    "wendland-gaussian": ("wendland_c4", "gaussian"),
    "wendland-all": ("wendland_c4", "wendland_c4"),
    "gaussian-all": ("gaussian", "gaussian"),
    "matern-sm": ("matern_c4", "spectral_mixture"),
}


@dataclass
class ModelConfig:
    d: int = 1
    d_u: int = 1
    d_y: int = 1
    p: int = 64
    q: int = 64
    depth: int = 6  # number of Wendland integral blocks, L - 1
    kernel_config: str = "wendland-sm"

    def __post_init__(self):
        if self.kernel_config not in KERNEL_CONFIGS:
            raise ContractError(f"unknown kernel config {self.kernel_config!r}")
        if not 1 <= self.q <= self.p:
            raise ContractError("need 1 <= q <= p")
        if self.depth < 0:
            raise ContractError("depth must be non-negative")

    @property
    def block_kernel(self) -> str:
        return KERNEL_CONFIGS[self.kernel_config][0]

    @property
    def final_kernel(self) -> str:
        return KERNEL_CONFIGS[self.kernel_config][1]


def make_index_map(p: int, q: int) -> np.ndarray:
    """Balanced monotone surjection [p] -> [q]: channel j uses kernel ceil(j q / p)."""
    if not 1 <= q <= p:
        raise ContractError(f"index map needs 1 <= q <= p, got p={p}, q={q}")
    j = np.arange(1, p + 1)
    return (j * q + p - 1) // p


def param_shapes(cfg: ModelConfig) -> dict:
    """Parameter names and shapes in checkpoint order."""
    p, q, d = cfg.p, cfg.q, cfg.d
    shapes = {"lift.W": (cfg.d_u + d, p), "lift.b": (p,)}
    for ell in range(1, cfg.depth + 1):
        shapes[f"block{ell}.raw_eps"] = (q,)
        shapes[f"block{ell}.W"] = (p, p)
        shapes[f"block{ell}.b"] = (p,)
    if cfg.final_kernel == "spectral_mixture":
        shapes["final.lam"] = (q, 2)
        shapes["final.mu"] = (q, 2, d)
        shapes["final.raw_nu"] = (q, 2, d)
    else:
        shapes["final.raw_eps"] = (q,)
    shapes.update({"proj.W1": (p, p), "proj.b1": (p,), "proj.W2": (p, p), "proj.b2": (p,),
                   "proj.W3": (p, cfg.d_y), "proj.b3": (cfg.d_y,), "interp.raw_eps": (1,)})
    return shapes


def layer_groups(cfg: ModelConfig) -> dict:
    """Parameter names of each kernel-based layer, keyed by layer label."""
    groups = {f"block{ell}": [f"block{ell}.raw_eps", f"block{ell}.W", f"block{ell}.b"]
              for ell in range(1, cfg.depth + 1)}
    if cfg.final_kernel == "spectral_mixture":
        groups["final"] = ["final.lam", "final.mu", "final.raw_nu"]
    else:
        groups["final"] = ["final.raw_eps"]
    return groups


def kernel_scale_names(cfg: ModelConfig) -> list:
    """Raw (pre-softplus) shape parameters that the loss regularizes."""
    names = [f"block{ell}.raw_eps" for ell in range(1, cfg.depth + 1)]
    names.append("final.raw_nu" if cfg.final_kernel == "spectral_mixture" else "final.raw_eps")
    return names


@dataclass
class KnoModel:
    config: ModelConfig
    params: dict
    quad_rule: QuadRule
    train_grid: np.ndarray
    seed: int = 0
    normalizer: Normalizer | None = None
    _interp: object = field(default=None, repr=False, compare=False)
    _dist_qq: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.train_grid = np.asarray(self.train_grid, dtype=np.float64).reshape(-1, self.config.d)
        if self.quad_rule.dim != self.config.d:
            raise ContractError("quadrature rule dimension does not match the model")
        shapes = param_shapes(self.config)
        for name, shape in shapes.items():
            if name not in self.params or tuple(np.shape(self.params[name])) != shape:
                raise ContractError(f"parameter {name!r} missing or not of shape {shape}")
        self.params = {k: np.asarray(self.params[k], dtype=np.float64) for k in shapes}

    @property
    def index_map(self) -> np.ndarray:
        return make_index_map(self.config.p, self.config.q)

    @property
    def interp_op(self):
        if self._interp is None:
            self._interp = interpolation.InterpolationOperator(self.train_grid, self.quad_rule.points)
        return self._interp

    @property
    def dist_qq(self) -> np.ndarray:
        if self._dist_qq is None:
            self._dist_qq = distance_matrix(self.quad_rule.points, self.quad_rule.points)
        return self._dist_qq

    def with_params(self, params: dict) -> "KnoModel":
        clone = KnoModel(self.config, params, self.quad_rule, self.train_grid, self.seed, self.normalizer)
        clone._interp, clone._dist_qq = self._interp, self._dist_qq
        return clone

    def interp_eps(self) -> float:
        return float(ad.softplus_np(self.params["interp.raw_eps"][0]))


def count_parameters(model_or_config) -> int:
    cfg = model_or_config.config if isinstance(model_or_config, KnoModel) else model_or_config
    return int(sum(math.prod(s) for s in param_shapes(cfg).values()))


def init_params(cfg: ModelConfig, train_grid, rng: np.random.Generator) -> dict:
    """Kernel parameters ~ N(1, 0.01) (std 0.1); dense layers U(+-1/sqrt(fan_in))."""
    params = {}
    shapes = param_shapes(cfg)
    for name, shape in shapes.items():
        if name == "interp.raw_eps":
            params[name] = ad.inverse_softplus([interpolation.default_eps(train_grid)])
        elif name.startswith(("block", "final")) and not name.endswith((".W", ".b")):
            params[name] = rng.normal(1.0, 0.1, size=shape)
        else:
            weight = name if ".W" in name else name.replace(".b", ".W")
            bound = 1.0 / math.sqrt(shapes[weight][0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def build_model(cfg: ModelConfig, quad_rule: QuadRule, train_grid, seed: int = 0) -> KnoModel:
    rng = np.random.default_rng(seed)
    return KnoModel(cfg, init_params(cfg, train_grid, rng), quad_rule, train_grid, seed)


# -- layers (channel-first) ---------------------------------------------------------

def _lift_cf(f_q: Tensor, coords: np.ndarray, W, b) -> Tensor:
    """f_q is (d_u, M, N_Q); coords is (N_Q, d)."""
    M = f_q.shape[1]
    xq = np.broadcast_to(coords.T[:, None, :], (coords.shape[1], M, coords.shape[0]))
    x = ad.concat([f_q, Tensor(np.ascontiguousarray(xq))], axis=0)
    return ad.gelu(channel_mix(W, x, b))


def _block_cf(h: Tensor, G: Tensor, weights: np.ndarray, W, b, index_map) -> Tensor:
    """Affine pointwise map plus quadrature integral; no activation."""
    S = kernel_integral(G, h * weights, index_map)
    return channel_mix(W, h, b) + S


def _project_cf(h: Tensor, P: dict) -> Tensor:
    h = ad.gelu(channel_mix(P["proj.W1"], h, P["proj.b1"]))
    h = ad.gelu(channel_mix(P["proj.W2"], h, P["proj.b2"]))
    return channel_mix(P["proj.W3"], h, P["proj.b3"])


def _final_gram(cfg: ModelConfig, P: dict, out_points: np.ndarray, quad_points: np.ndarray) -> Tensor:
    if cfg.final_kernel == "spectral_mixture":
        diff = out_points[:, None, :] - quad_points[None, :, :]
        return mixture_gram(P["final.lam"], P["final.mu"], ad.softplus(P["final.raw_nu"]), diff)
    return radial_gram(cfg.final_kernel, ad.softplus(P["final.raw_eps"]),
                       distance_matrix(out_points, quad_points))


def latent(model: KnoModel, P: dict, F: np.ndarray, upto: int | None = None) -> Tensor:
    """Interpolation, lifting and Wendland blocks 1..upto (default all).

    Normalized inputs (M, N_T, d_u) -> latent (p, M, N_Q).
    """
    cfg = model.config
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 3 or F.shape[1] != model.train_grid.shape[0] or F.shape[2] != cfg.d_u:
        raise ContractError(f"inputs must have shape (M, {model.train_grid.shape[0]}, {cfg.d_u})")
    if not np.all(np.isfinite(F)):
        raise ContractError("input functions must be finite")
    M, NT, du = F.shape
    rule = model.quad_rule
    cols = F.transpose(1, 2, 0).reshape(NT, du * M)
    fq = model.interp_op(ad.softplus(P["interp.raw_eps"]), cols)  # (N_Q, d_u*M)
    fq = ad.transpose(ad.reshape(fq, (rule.n, du, M)), (1, 2, 0))
    h = _lift_cf(fq, rule.points, P["lift.W"], P["lift.b"])
    return blocks(model, P, h, 1, cfg.depth if upto is None else upto)


def blocks(model: KnoModel, P: dict, h: Tensor, first: int, last: int) -> Tensor:
    """Apply Wendland blocks first..last (1-based, inclusive) to a latent (p, M, N_Q)."""
    cfg, rule, imap = model.config, model.quad_rule, model.index_map
    for ell in range(first, last + 1):
        G = radial_gram(cfg.block_kernel, ad.softplus(P[f"block{ell}.raw_eps"]), model.dist_qq)
        h = ad.gelu(_block_cf(h, G, rule.weights, P[f"block{ell}.W"], P[f"block{ell}.b"], imap))
    return h


def head(model: KnoModel, P: dict, h: Tensor, out_points: np.ndarray) -> Tensor:
    """Final kernel block at the output points, activation, projection -> (M, N_out, d_y)."""
    rule = model.quad_rule
    G = _final_gram(model.config, P, out_points, rule.points)
    h = ad.gelu(kernel_integral(G, h * rule.weights, model.index_map))
    return ad.transpose(_project_cf(h, P), (1, 2, 0))


def as_leaves(params: dict, trainable=None) -> dict:
    """Wrap parameter arrays as tensors; names in ``trainable`` require grad."""
    return {k: Tensor(v, requires_grad=trainable is None or k in trainable, name=k)
            for k, v in params.items()}


def forward_tensors(model: KnoModel, P: dict, F: np.ndarray, output_points=None) -> Tensor:
    out_points = model.train_grid if output_points is None else _points(output_points, model.config.d)
    return head(model, P, latent(model, P, F), out_points)


def _points(pts, d: int) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, d) if d == 1 else pts[None]
    if pts.shape[1] != d:
        raise ContractError(f"output points must have dimension {d}")
    return pts


def forward(model: KnoModel, F: np.ndarray, output_points=None, chunk: int = 4096) -> np.ndarray:
    """Raw model output (normalized space) without recording a tape.

    Output points are processed in chunks so fine evaluation grids fit memory.
    """
    P = {k: Tensor(v) for k, v in model.params.items()}
    h = latent(model, P, F)
    out_points = model.train_grid if output_points is None else _points(output_points, model.config.d)
    parts = [head(model, P, h, out_points[s:s + chunk]).data for s in range(0, out_points.shape[0], chunk)]
    return np.concatenate(parts, axis=1)


def _field_at(model: KnoModel, values: np.ndarray, points) -> np.ndarray:
    """Carry a per-grid-point field to arbitrary points with the model's interpolant.

    Points that coincide with grid nodes take the stored values exactly.
    """
    if points is None:
        return values
    points = _points(points, model.config.d)
    kernel = KernelSpec("wendland_c4", model.params["interp.raw_eps"], model.config.d)
    interp = interpolation.fit(model.train_grid, values, kernel)
    out = interpolation.eval(interp, points)
    dist, idx = cKDTree(model.train_grid).query(points)
    hit = dist <= 1e-12
    out[hit] = values[idx[hit]]
    return out


def predict(model: KnoModel, inputs: np.ndarray, output_points=None) -> np.ndarray:
    """Physical-space prediction: normalize inputs, run the model, denormalize."""
    norm = model.normalizer
    if norm is None:
        return forward(model, inputs, output_points)
    y = forward(model, norm.inputs.normalize(inputs), output_points)
    mean = _field_at(model, norm.outputs.mean, output_points)
    std = _field_at(model, norm.outputs.std, output_points)
    return y * std + mean


# -- reference layer functions (row layout) ---------------------------------------

def lift(f_at_xq, xq, W, b) -> np.ndarray:
    """GeLU((f|_XQ concat XQ) W + 1 b) for row-layout arrays (N_Q, d_u) -> (N_Q, p)."""
    f = np.asarray(f_at_xq, dtype=np.float64)
    xq = np.asarray(xq, dtype=np.float64).reshape(f.shape[0], -1)
    W = np.asarray(W, dtype=np.float64)
    if W.shape[0] != f.shape[1] + xq.shape[1]:
        raise ContractError(f"lifting weight needs {f.shape[1] + xq.shape[1]} rows, got {W.shape[0]}")
    out = _lift_cf(Tensor(f.T[:, None, :]), xq, Tensor(W), Tensor(np.asarray(b, dtype=np.float64)))
    return out.data[:, 0, :].T


def integral_block_apply(raw_eps, W, b, g, rule: QuadRule, index_map, kind: str = "wendland_c4") -> np.ndarray:
    """g W + 1 b + S with S[:, j] = G_{I(j)} (w * g[:, j]) on the quadrature points."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape[0] != rule.n:
        raise ContractError("latent rows must equal the number of quadrature points")
    G = radial_gram(kind, ad.softplus(Tensor(raw_eps)), distance_matrix(rule.points, rule.points))
    out = _block_cf(Tensor(g.T[:, None, :]), G, rule.weights, Tensor(W), Tensor(b), index_map)
    return out.data[:, 0, :].T


def final_block_apply(lam, mu, nu, g, rule: QuadRule, out_points, index_map) -> np.ndarray:
    """Column j = [psi_I(j)(x_t - y_i)]_{t,i} (w * g[:, j]); mixture params given post-softplus."""
    g = np.asarray(g, dtype=np.float64)
    out_points = np.asarray(out_points, dtype=np.float64).reshape(-1, rule.dim)
    diff = out_points[:, None, :] - rule.points[None, :, :]
    G = mixture_gram(Tensor(lam), Tensor(mu), Tensor(nu), diff)
    out = kernel_integral(G, Tensor(g.T[:, None, :]) * rule.weights, index_map)
    return out.data[:, 0, :].T


def project(latent_rows, params: dict) -> np.ndarray:
    """Two GeLU dense layers (p -> p) and a linear one (p -> d_y) on rows (N, p)."""
    x = np.asarray(latent_rows, dtype=np.float64)
    if x.shape[1] != params["proj.W1"].shape[0]:
        raise ContractError("latent width does not match the projection")
    P = {k: Tensor(v) for k, v in params.items() if k.startswith("proj.")}
    return _project_cf(Tensor(x.T[:, None, :]), P).data[:, 0, :].T


# -- flat parameter vectors and checkpoints ----------------------------------------------

def flatten(model_or_cfg, params: dict | None = None) -> np.ndarray:
    """Flat vector in checkpoint order; the mixture block is interleaved per kernel."""
    cfg = model_or_cfg.config if isinstance(model_or_cfg, KnoModel) else model_or_cfg
    params = model_or_cfg.params if params is None else params
    chunks = []
    for name in param_shapes(cfg):
        if name == "final.lam":
            lam, mu, nu = params["final.lam"], params["final.mu"], params["final.raw_nu"]
            for i in range(cfg.q):
                for r in range(2):
                    chunks += [lam[i, r:r + 1], mu[i, r], nu[i, r]]
        elif name in ("final.mu", "final.raw_nu"):
            continue
        else:
            chunks.append(np.ravel(params[name]))
    return np.concatenate(chunks)


def unflatten(cfg: ModelConfig, vec: np.ndarray) -> dict:
    vec = np.asarray(vec, dtype=np.float64)
    shapes = param_shapes(cfg)
    params, k = {}, 0
    for name, shape in shapes.items():
        if name == "final.lam":
            d = cfg.d
            lam = np.empty((cfg.q, 2)); mu = np.empty((cfg.q, 2, d)); nu = np.empty((cfg.q, 2, d))
            for i in range(cfg.q):
                for r in range(2):
                    lam[i, r] = vec[k]; k += 1
                    mu[i, r] = vec[k:k + d]; k += d
                    nu[i, r] = vec[k:k + d]; k += d
            params.update({"final.lam": lam, "final.mu": mu, "final.raw_nu": nu})
        elif name in ("final.mu", "final.raw_nu"):
            continue
        else:
            n = math.prod(shape)
            params[name] = vec[k:k + n].reshape(shape)
            k += n
    if k != vec.size:
        raise ContractError(f"parameter vector has {vec.size} entries, expected {k}")
    return params


def save_checkpoint(model: KnoModel, path, extra: dict | None = None) -> Path:
    header = {
        "format": "kno-checkpoint",
        "param_order_version": PARAM_ORDER_VERSION,
        "config": asdict(model.config),
        "seed": model.seed,
        "n_params": count_parameters(model),
        "quad_rule": {"points": model.quad_rule.points.tolist(),
                      "weights": model.quad_rule.weights.tolist(),
                      "domain_measure": model.quad_rule.domain_measure},
        "train_grid": model.train_grid.tolist(),
        "normalizer": model.normalizer.to_json() if model.normalizer else None,
    }
    if extra:
        header.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(flatten(model).astype("<f8").tobytes())
    tmp.replace(path)
    return path


def load_checkpoint(path) -> tuple[KnoModel, dict]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    if header.get("format") != "kno-checkpoint" or header.get("param_order_version") != PARAM_ORDER_VERSION:
        raise ContractError(f"{path} is not a version-{PARAM_ORDER_VERSION} KNO checkpoint")
    cfg = ModelConfig(**header["config"])
    vec = np.frombuffer(raw[nl + 1:], dtype="<f8")
    qr = header["quad_rule"]
    rule = QuadRule(np.asarray(qr["points"]), np.asarray(qr["weights"]), qr["domain_measure"])
    norm = Normalizer.from_json(header["normalizer"]) if header.get("normalizer") else None
    model = KnoModel(cfg, unflatten(cfg, vec), rule, np.asarray(header["train_grid"]), header["seed"], norm)
    return model, header
