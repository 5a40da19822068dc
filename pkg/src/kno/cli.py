"""Command-line front end: ``kno <command> [flags]``.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure.
The output root is ``--out``, else ``$KNO_OUT_DIR``, else the config's ``out_dir``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import PRESETS, RunConfig, preset
from .datasets import PROBLEMS, TEST_STREAM_OFFSET, Dataset, DatasetSpec, build_dataset, generate
from .diagnostics import (ABLATION_AXES, ABLATION_COLUMNS, ablation_sweep, ntk_spectrum, sparsity_report,
                          superres_eval, write_csv, write_json)
from .errors import ContractError, NumericError
from .model import load_checkpoint
from .normalization import Normalizer
from .training import evaluate, init_model, train

log = logging.getLogger("kno")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def sha256_files(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def versions() -> dict:
    return {"kno": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def out_root(args, cfg: RunConfig | None = None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if os.environ.get("KNO_OUT_DIR"):
        return Path(os.environ["KNO_OUT_DIR"])
    return Path(cfg.out_dir if cfg else "runs")


# -- config assembly ------------------------------------------------------------------

def run_config(args) -> RunConfig:
    cfg = preset(args.preset)
    if getattr(args, "config", None):
        cfg = RunConfig.from_file(args.config, cfg)
    overrides = {}
    for flag, key in (("epochs", "epochs"), ("epochs_per_layer", "epochs_per_layer"), ("seed", "seed"),
                      ("m_train", "m_train"), ("m_test", "m_test"), ("data_seed", "data_seed"),
                      ("resolution", "resolution"), ("kernel_config", "kernel_config"),
                      ("data_dir", "data_dir"), ("lr_max", "lr_max"), ("reg_lambda", "reg_lambda")):
        value = getattr(args, flag, None)
        if value is not None and not isinstance(value, list):
            overrides[key] = value
    return cfg.replace(**overrides) if overrides else cfg


def load_or_build_data(cfg: RunConfig, run_dir: Path):
    """Dataset files from ``cfg.data_dir`` if present, else generated under the run directory."""
    spec = cfg.dataset_spec()
    if cfg.data_dir:
        paths = [Path(cfg.data_dir) / f"{cfg.problem}-{s}.dat" for s in ("train", "test")]
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise FileNotFoundError(f"dataset files not found: {', '.join(missing)}")
        train_ds, test_ds = Dataset.read(paths[0]), Dataset.read(paths[1])
    else:
        train_ds, test_ds, paths = build_dataset(spec, run_dir / "data")
    return train_ds, test_ds, paths


def replicate_splits(train_ds: Dataset, test_ds: Dataset, n_splits: int, seed: int):
    """Split 0 is the stored split; later splits reshuffle the pooled samples."""
    pool_in = np.concatenate([train_ds.inputs, test_ds.inputs])
    pool_out = np.concatenate([train_ds.outputs, test_ds.outputs])
    m = train_ds.M
    for s in range(n_splits):
        order = np.arange(pool_in.shape[0]) if s == 0 else np.random.default_rng([seed, s]).permutation(
            pool_in.shape[0])
        tr, te = order[:m], order[m:]
        yield s, (pool_in[tr], pool_out[tr]), (pool_in[te], pool_out[te])


# -- commands ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    params = {"fine_stride": args.fine_stride}
    if args.mesh:
        params["mesh_path"] = args.mesh
    spec = DatasetSpec(args.problem, args.m_train, args.m_test, args.resolution, args.seed, params)
    out = out_root(args) / "data" if not args.out else Path(args.out)
    _, _, paths = build_dataset(spec, out)
    for p in paths:
        print(f"{p}\t{sha256_files([p])}")
    return EXIT_OK


def _train_one(cfg: RunConfig, train_data, test_data, run_dir: Path, seed: int, dataset_hash: str):
    model = init_model(cfg.model_config(), cfg.quad_rule(), train_data[2], seed)
    tcfg = cfg.train_config()
    tcfg.seed = seed
    ckpt = run_dir / "model.ckpt"
    extra = {"run_config": cfg.replace(seed=seed).to_json(), "dataset_hash": dataset_hash}
    t0 = time.perf_counter()
    model, history = train(model, train_data[:2], test_data[:2], tcfg, checkpoint_path=ckpt,
                           log_every=max(1, cfg.epochs // 20), extra=extra)
    history.to_csv(run_dir / "history.csv")
    return {
        "seed": seed,
        "checkpoint": str(ckpt),
        "train_rel_l2_pct": evaluate(model, *train_data[:2]),
        "test_rel_l2_pct": evaluate(model, *test_data[:2]),
        "epochs_run": len(history),
        "seconds": time.perf_counter() - t0,
    }


def cmd_train(args) -> int:
    cfg = run_config(args)
    root = out_root(args, cfg) / cfg.preset
    root.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    train_ds, test_ds, paths = load_or_build_data(cfg, root)
    dataset_hash = sha256_files(paths)
    grid = train_ds.grid
    runs = []
    if args.replicates == 1:
        run_dir = root / f"seed{cfg.seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        runs.append(_train_one(cfg, (train_ds.inputs, train_ds.outputs, grid),
                               (test_ds.inputs, test_ds.outputs, grid), run_dir, cfg.seed, dataset_hash))
    else:
        for split, tr, te in replicate_splits(train_ds, test_ds, 3, cfg.data_seed):
            for k in range(3):
                seed = cfg.seed + k
                run_dir = root / f"split{split}-seed{seed}"
                run_dir.mkdir(parents=True, exist_ok=True)
                r = _train_one(cfg, tr + (grid,), te + (grid,), run_dir, seed, dataset_hash)
                r["split"] = split
                runs.append(r)
    errs = np.array([r["test_rel_l2_pct"] for r in runs])
    manifest = {
        "config": cfg.to_json(),
        "dataset_files": [str(p) for p in paths],
        "dataset_hash": dataset_hash,
        "runs": runs,
        "checkpoint": runs[0]["checkpoint"],
        "metrics": {"test_rel_l2_pct_mean": float(errs.mean()), "test_rel_l2_pct_std": float(errs.std()),
                    "n_runs": len(runs)},
        "versions": versions(),
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    path = write_json(root / "manifest.json", manifest)
    print(json.dumps(manifest["metrics"]))
    print(path)
    return EXIT_OK


def _checkpoint(args):
    path = Path(args.checkpoint)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _checkpoint_spec(header: dict) -> DatasetSpec:
    rc = header.get("run_config")
    if rc is None:
        raise ContractError("checkpoint carries no run config; pass --data")
    return RunConfig(**rc).dataset_spec()


def cmd_eval(args) -> int:
    model, header = _checkpoint(args)
    if args.data:
        ds = Dataset.read(args.data)
    else:
        spec = _checkpoint_spec(header)
        ds = generate(spec, spec.m_test, TEST_STREAM_OFFSET)
    report = {"checkpoint": str(args.checkpoint), "test_rel_l2_pct": evaluate(model, ds.inputs, ds.outputs),
              "n_samples": ds.M}
    out = Path(args.checkpoint).with_name("eval.json")
    write_json(out, report)
    print(json.dumps(report))
    return EXIT_OK


def cmd_superres(args) -> int:
    model, header = _checkpoint(args)
    spec = _checkpoint_spec(header)
    report = superres_eval(model, spec, args.factor)
    write_json(Path(args.checkpoint).with_name(f"superres-x{args.factor}.json"), report)
    print(json.dumps(report))
    return EXIT_OK


def cmd_ntk(args) -> int:
    cfg = run_config(args)
    root = out_root(args, cfg) / "ntk"
    spec = cfg.replace(m_train=args.probe, m_test=1).dataset_spec()
    probe, _, _ = build_dataset(spec)
    reports = []
    for kc in args.kernel_config:
        c = cfg.replace(kernel_config=kc)
        model = init_model(c.model_config(), c.quad_rule(), probe.grid, cfg.seed)
        model.normalizer = Normalizer.fit(probe.inputs, probe.outputs, c.normalization)
        rep = ntk_spectrum(model, probe.inputs, args.points, label=kc)
        reports.append(rep.to_json())
        write_json(root / f"ntk-{kc}.json", rep.to_json())
        write_csv(root / f"ntk-{kc}.csv", [{"index": i, "eigenvalue": v} for i, v in enumerate(rep.eigenvalues)],
                  ("index", "eigenvalue"))
        print(f"{kc}\tcondition {rep.condition:.6e}\tlambda_max {rep.eigenvalues[0]:.6e}")
    return EXIT_OK


def cmd_sparsity(args) -> int:
    model, _ = _checkpoint(args)
    rep = sparsity_report(model)
    out = Path(args.checkpoint).with_name("sparsity")
    write_json(out.with_suffix(".json"), rep.to_json())
    write_csv(out.with_suffix(".csv"), [{"layer": i + 1, "zero_fraction": f} for i, f in enumerate(rep.per_layer)],
              ("layer", "zero_fraction"))
    print(json.dumps(rep.to_json()))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = run_config(args)
    root = out_root(args, cfg) / "ablate"
    train_ds, test_ds, _ = load_or_build_data(cfg, root)
    values = [float(v) if args.axis == "q_ratio" else int(v) for v in args.values.split(",")]
    rows = ablation_sweep(cfg, args.axis, values, train_ds, test_ds,
                          root / f"{cfg.preset}-{args.axis}.csv")
    for r in rows:
        print(",".join(str(r[k]) for k in ABLATION_COLUMNS))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------------

def _add_run_flags(p):
    p.add_argument("--preset", default="burgers-desk", help=f"one of {', '.join(sorted(PRESETS))}")
    p.add_argument("--config", help="flat key = value file applied on top of the preset")
    p.add_argument("--epochs", type=int)
    p.add_argument("--epochs-per-layer", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--data-seed", type=int)
    p.add_argument("--m-train", type=int)
    p.add_argument("--m-test", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--lr-max", type=float)
    p.add_argument("--reg-lambda", type=float)
    p.add_argument("--data-dir", help="directory holding <problem>-train.dat and <problem>-test.dat")
    p.add_argument("--out", help="output root (overrides $KNO_OUT_DIR)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kno", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate train/test dataset files")
    p.add_argument("--problem", required=True, choices=PROBLEMS)
    p.add_argument("--m-train", type=int, default=1000)
    p.add_argument("--m-test", type=int, default=200)
    p.add_argument("--resolution", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fine-stride", type=int, default=4)
    p.add_argument("--mesh", help="mesh file for the triangular problems")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model (or the 3 x 3 replicate protocol)")
    _add_run_flags(p)
    p.add_argument("--kernel-config")
    p.add_argument("--replicates", type=int, choices=(1, 9), default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="test error of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset file (default: regenerate the run's test set)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("superres", help="evaluate on a refined output grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--factor", type=int, default=2)
    p.set_defaults(func=cmd_superres)

    p = sub.add_parser("ntk", help="NTK spectra at initialization")
    _add_run_flags(p)
    p.add_argument("--kernel-config", action="append", default=None)
    p.add_argument("--probe", type=int, default=8, help="number of probe inputs")
    p.add_argument("--points", type=int, default=16, help="output points per probe input")
    p.set_defaults(func=cmd_ntk)

    p = sub.add_parser("sparsity", help="zero fraction of the learned Wendland Grams")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_sparsity)

    p = sub.add_parser("ablate", help="sweep q_ratio, n_quad or depth")
    _add_run_flags(p)
    p.add_argument("--kernel-config")
    p.add_argument("--axis", required=True, choices=ABLATION_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "ntk" and not args.kernel_config:
        args.kernel_config = ["wendland-sm", "gaussian-all"]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
