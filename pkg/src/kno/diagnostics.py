"""Error metrics, NTK spectra, learned sparsity, super-resolution and ablations."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .autodiff import Tape
from .datasets import TEST_STREAM_OFFSET, Dataset, DatasetSpec, generate
from .errors import ContractError
from .kernels import KernelSpec, gram
from .model import KnoModel, as_leaves, count_parameters, forward_tensors, predict

NTK_ENTRY_BUDGET = 50_000_000  # float64 entries allowed in the Jacobian


def relative_l2_percent(pred, truth) -> float:
    """100 * ||pred - truth|| / ||truth|| over all entries."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ContractError(f"shape mismatch {pred.shape} vs {truth.shape}")
    den = np.linalg.norm(truth)
    if den == 0.0:
        raise ContractError("relative error is undefined for a zero-norm truth")
    return float(100.0 * np.linalg.norm(pred - truth) / den)


# -- neural tangent kernel --------------------------------------------------------------

@dataclass
class NtkReport:
    eigenvalues: list
    condition: float
    label: str

    def to_json(self) -> dict:
        return asdict(self)


def probe_points(n_grid: int, n_points: int) -> np.ndarray:
    """Evenly spread grid indices used as NTK output locations."""
    n_points = min(n_points, n_grid)
    return np.unique(np.linspace(0, n_grid - 1, n_points).round().astype(int))


def ntk_jacobian(model: KnoModel, probe_inputs, n_points: int = 16, trainable=None) -> np.ndarray:
    """Jacobian of the stacked (normalized) outputs w.r.t. the trainable parameters.

    One forward tape, one backward pass per output entry. Columns follow the
    sorted parameter names, each flattened in C order.
    """
    F = np.asarray(probe_inputs, dtype=np.float64)
    if model.normalizer is not None:
        F = model.normalizer.inputs.normalize(F)
    names = sorted(model.params if trainable is None else trainable)
    n_par = sum(model.params[k].size for k in names)
    idx = probe_points(model.train_grid.shape[0], n_points)
    n_out = F.shape[0] * idx.size * model.config.d_y
    if n_out * n_par > NTK_ENTRY_BUDGET:
        raise ContractError(f"NTK Jacobian needs {n_out} x {n_par} entries; use a smaller probe")
    with Tape() as tape:
        P = as_leaves(model.params, names)
        y = forward_tensors(model, P, F, model.train_grid[idx])
    leaves = [P[k] for k in names]
    J = np.empty((n_out, n_par))
    for row in range(n_out):
        cot = np.zeros(y.shape)
        cot.flat[row] = 1.0
        J[row] = np.concatenate([g.ravel() for g in tape.vjp(y, cot, leaves)])
    return J


def ntk_spectrum(model: KnoModel, probe_inputs, n_points: int = 16, label: str | None = None,
                 trainable=None) -> NtkReport:
    J = ntk_jacobian(model, probe_inputs, n_points, trainable)
    K = J @ J.T
    eig = np.sort(np.linalg.eigvalsh(0.5 * (K + K.T)))[::-1]
    lam_max = float(eig[0])
    positive = eig[eig > 1e-12 * lam_max]
    condition = lam_max / float(positive[-1]) if lam_max > 0 else float("inf")
    return NtkReport(eig.tolist(), condition, label or model.config.kernel_config)


# -- sparsity -----------------------------------------------------------------------------

@dataclass
class SparsityReport:
    per_layer: list
    mean: float

    def to_json(self) -> dict:
        return asdict(self)


def sparsity_report(model: KnoModel) -> SparsityReport:
    """Zero fraction of each Wendland block's Gram over the quadrature points.

    Counted from the stored entries of the sparse Gram, averaged over the
    block's q kernels.
    """
    cfg = model.config
    if cfg.block_kernel != "wendland_c4" or cfg.depth == 0:
        raise ContractError("sparsity needs at least one Wendland block")
    X = model.quad_rule.points
    total = X.shape[0] ** 2
    per_layer = []
    for ell in range(1, cfg.depth + 1):
        raws = model.params[f"block{ell}.raw_eps"]
        zeros = [1.0 - gram(KernelSpec("wendland_c4", np.array([r]), cfg.d), X, X).nnz / total for r in raws]
        per_layer.append(float(np.mean(zeros)))
    return SparsityReport(per_layer, float(np.mean(per_layer)))


# -- super-resolution ---------------------------------------------------------------------------

SUPERRES_PROBLEMS = ("burgers", "advection1", "darcy_pwc")


def refined_spec(spec: DatasetSpec, factor: int) -> DatasetSpec:
    """Spec whose grid refines ``spec``'s by ``factor`` and whose samples are the same functions."""
    if spec.problem not in SUPERRES_PROBLEMS:
        raise ContractError(f"super-resolution references are available for {', '.join(SUPERRES_PROBLEMS)}")
    if factor < 1:
        raise ContractError("factor must be a positive integer")
    params = dict(spec.params)
    if spec.problem == "burgers":
        over = params.get("oversample", 4)
        if over % factor:
            raise ContractError(f"factor must divide the solver oversampling ({over})")
        params["oversample"] = over // factor
        res = spec.resolution * factor
    elif spec.problem == "darcy_pwc":
        stride = params.get("fine_stride", 4)
        if stride % factor:
            raise ContractError(f"factor must divide the solver stride ({stride})")
        params["fine_stride"] = stride // factor
        res = (spec.resolution - 1) * factor + 1
    else:
        res = (spec.resolution - 1) * factor + 1
    return DatasetSpec(spec.problem, spec.m_train, spec.m_test, res, spec.seed, params)


def match_points(coarse: np.ndarray, fine: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Index into ``fine`` of every ``coarse`` point."""
    dist, idx = cKDTree(fine).query(coarse)
    if np.any(dist > tol):
        raise ContractError("the coarse grid is not contained in the fine grid")
    return idx


def superres_eval(model: KnoModel, spec: DatasetSpec, factor: int, split: str = "test",
                  coarse: Dataset | None = None) -> dict:
    """Errors at the training grid and at a ``factor``-refined grid.

    Inputs stay on the training grid; the fine reference is regenerated with
    the dataset solver on the refined grid. Also reports the largest gap
    between the fine prediction restricted to the coarse grid and the coarse
    prediction.
    """
    offset = 0 if split == "train" else TEST_STREAM_OFFSET
    M = spec.m_train if split == "train" else spec.m_test
    coarse = coarse if coarse is not None else generate(spec, M, offset)
    fine = generate(refined_spec(spec, factor), coarse.M, offset) if factor > 1 else coarse
    pred_c = predict(model, coarse.inputs)
    pred_f = predict(model, coarse.inputs, fine.grid)
    idx = match_points(coarse.grid, fine.grid)
    errs_c = [relative_l2_percent(p, t) for p, t in zip(pred_c, coarse.outputs)]
    errs_f = [relative_l2_percent(p, t) for p, t in zip(pred_f, fine.outputs)]
    return {
        "factor": factor,
        "coarse_points": int(coarse.grid.shape[0]),
        "fine_points": int(fine.grid.shape[0]),
        "coarse_rel_l2_pct": float(np.mean(errs_c)),
        "coarse_rel_l2_pct_std": float(np.std(errs_c)),
        "fine_rel_l2_pct": float(np.mean(errs_f)),
        "fine_rel_l2_pct_std": float(np.std(errs_f)),
        "restriction_max_abs": float(np.max(np.abs(pred_f[:, idx] - pred_c))),
    }


# -- ablations ------------------------------------------------------------------------------------

ABLATION_AXES = ("q_ratio", "n_quad", "depth")
ABLATION_COLUMNS = ("value", "train_err", "test_err", "params", "seconds")


def ablation_config(base, axis: str, value):
    if axis == "q_ratio":
        if not 0 < value <= 1:
            raise ContractError("q_ratio values must lie in (0, 1]")
        return base.replace(q=max(1, int(round(base.p * value))))
    if axis == "n_quad":
        if int(value) != value or value < 1:
            raise ContractError("n_quad values must be positive integers")
        return base.replace(n_quad=int(value))
    if axis == "depth":
        if int(value) != value or value < 0:
            raise ContractError("depth values must be non-negative integers")
        return base.replace(depth=int(value))
    raise ContractError(f"unknown ablation axis {axis!r}; choose from {', '.join(ABLATION_AXES)}")


def ablation_sweep(base, axis: str, values, train_data: Dataset, test_data: Dataset, out_csv=None) -> list:
    """Train one model per value (``base`` is a RunConfig) and tabulate errors."""
    from .training import evaluate, init_model, train

    configs = [ablation_config(base, axis, v) for v in values]
    rows = []
    for value, cfg in zip(values, configs):
        t0 = time.perf_counter()
        model = init_model(cfg.model_config(), cfg.quad_rule(), train_data.grid, cfg.seed)
        model, _ = train(model, (train_data.inputs, train_data.outputs), (test_data.inputs, test_data.outputs),
                         cfg.train_config())
        rows.append({"value": value,
                     "train_err": evaluate(model, train_data.inputs, train_data.outputs),
                     "test_err": evaluate(model, test_data.inputs, test_data.outputs),
                     "params": count_parameters(model),
                     "seconds": time.perf_counter() - t0})
    if out_csv is not None:
        write_csv(out_csv, rows, ABLATION_COLUMNS)
    return rows


def write_csv(path, rows, columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in columns})
    return path


def write_json(path, blob) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(blob, indent=2, sort_keys=True))
    tmp.replace(path)
    return path
