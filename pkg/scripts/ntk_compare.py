"""NTK spectra at initialization for several kernel configurations.

    python scripts/ntk_compare.py --preset burgers-desk --probe 8 --points 16

Prints lambda_max, the lambda_max / lambda_min+ ratio and how many
eigenvalues clear the 1e-12 lambda_max cutoff, and writes one CSV of
eigenvalues per configuration under ``<out>/ntk``.
"""
import argparse

import numpy as np

from kno.config import preset
from kno.datasets import build_dataset
from kno.diagnostics import ntk_spectrum, write_csv
from kno.model import KERNEL_CONFIGS
from kno.normalization import Normalizer
from kno.training import init_model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="burgers-desk")
    ap.add_argument("--configs", nargs="+", default=sorted(KERNEL_CONFIGS))
    ap.add_argument("--probe", type=int, default=8)
    ap.add_argument("--points", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()

    cfg = preset(args.preset).replace(seed=args.seed)
    probe, _, _ = build_dataset(cfg.replace(m_train=args.probe, m_test=1).dataset_spec())
    print("config\tlambda_max\tratio\tabove_cutoff")
    for kc in args.configs:
        c = cfg.replace(kernel_config=kc)
        model = init_model(c.model_config(), c.quad_rule(), probe.grid, c.seed)
        model.normalizer = Normalizer.fit(probe.inputs, probe.outputs, c.normalization)
        rep = ntk_spectrum(model, probe.inputs, args.points, label=kc)
        eig = np.array(rep.eigenvalues)
        print(f"{kc}\t{eig[0]:.4e}\t{rep.condition:.4e}\t{int(np.sum(eig > 1e-12 * eig[0]))}/{eig.size}")
        write_csv(f"{args.out}/ntk/{args.preset}-{kc}.csv",
                  [{"index": i, "eigenvalue": v} for i, v in enumerate(eig)], ("index", "eigenvalue"))


if __name__ == "__main__":
    main()
