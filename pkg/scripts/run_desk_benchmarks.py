"""Train the desk-scale presets over several seeds and tabulate test errors.

    python scripts/run_desk_benchmarks.py --presets advection1-desk burgers-desk --seeds 0 1 2 --out runs

Each (preset, seed) goes through the ``train`` command; results are appended
to ``<out>/desk_summary.csv``.
"""
import argparse
import csv
import json
import time
from pathlib import Path

from kno.cli import main as kno

DEFAULT = ["advection1-desk", "burgers-desk", "darcy-tri-desk"]


def run(preset, seed, out, epochs=None):
    argv = ["train", "--preset", preset, "--seed", str(seed), "--out", str(out)]
    if epochs is not None:
        argv += ["--epochs", str(epochs)]
    t0 = time.perf_counter()
    rc = kno(argv)
    if rc != 0:
        raise SystemExit(f"{preset} seed {seed} exited with {rc}")
    manifest = json.loads((Path(out) / preset / "manifest.json").read_text())
    r = manifest["runs"][0]
    return {"preset": preset, "seed": seed, "train_err": r["train_rel_l2_pct"], "test_err": r["test_rel_l2_pct"],
            "epochs": r["epochs_run"], "seconds": time.perf_counter() - t0}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", nargs="+", default=DEFAULT)
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, help="override the preset epoch budget")
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()

    path = Path(args.out) / "desk_summary.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["preset", "seed", "train_err", "test_err", "epochs", "seconds"]
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        if new:
            w.writeheader()
        for preset in args.presets:
            errs = []
            for seed in args.seeds:
                row = run(preset, seed, args.out, args.epochs)
                w.writerow(row)
                fh.flush()
                errs.append(row["test_err"])
                print(f"{preset}\tseed {seed}\ttest {row['test_err']:.3f}%\t{row['seconds'] / 60:.1f} min")
            print(f"{preset}\tmean test {sum(errs) / len(errs):.3f}%")
    print(path)


if __name__ == "__main__":
    main()
