"""Zero-shot super-resolution of a trained checkpoint.

    python scripts/superres.py runs/advection1-desk/seed0/model.ckpt --factors 2 4

Inputs stay on the training grid; outputs are predicted on refined grids and
compared with references regenerated by the dataset solvers.
"""
import argparse

from kno.config import RunConfig
from kno.diagnostics import superres_eval
from kno.model import load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint")
    ap.add_argument("--factors", nargs="+", type=int, default=[2, 4])
    args = ap.parse_args()
    model, header = load_checkpoint(args.checkpoint)
    spec = RunConfig(**header["run_config"]).dataset_spec()
    print("factor\tpoints\tcoarse_err\tfine_err\trestriction_gap")
    for f in args.factors:
        r = superres_eval(model, spec, f)
        print(f"{f}\t{r['fine_points']}\t{r['coarse_rel_l2_pct']:.3f}%\t{r['fine_rel_l2_pct']:.3f}%\t"
              f"{r['restriction_max_abs']:.2e}")


if __name__ == "__main__":
    main()
