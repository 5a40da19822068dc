"""Sweep q/p, the quadrature size and the depth for one preset.

    python scripts/ablation.py --preset burgers-desk --epochs 500

Writes ``<out>/ablate/<preset>-<axis>.csv`` per axis (value, train/test
error, parameter count, seconds).
"""
import argparse

from kno.cli import main as kno

SWEEPS = {"q_ratio": "0.125,0.25,0.5,1", "n_quad": "10,20,30,40", "depth": "1,2,4,6"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="burgers-desk")
    ap.add_argument("--axes", nargs="+", default=list(SWEEPS), choices=list(SWEEPS))
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    for axis in args.axes:
        print(f"# {axis}")
        rc = kno(["ablate", "--preset", args.preset, "--axis", axis, "--values", SWEEPS[axis],
                  "--epochs", str(args.epochs), "--out", args.out])
        if rc != 0:
            raise SystemExit(rc)


if __name__ == "__main__":
    main()
