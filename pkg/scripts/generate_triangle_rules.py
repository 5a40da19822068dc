"""Derive fully symmetric, positive-weight triangle quadrature rules.

Solves the moment equations for each orbit structure by nonlinear least
squares from random starts and prints a Python table suitable for
``src/kno/_triangle_tables.py``. The runtime tables are produced by this
script and checked independently by the test suite.

    python scripts/generate_triangle_rules.py > src/kno/_triangle_tables.py
"""
import math
import sys

import numpy as np
from scipy.optimize import least_squares

# (n_centroid, n_s21, n_s111) per degree
STRUCTURES = {
    1: [(1, 0, 0)],
    2: [(0, 1, 0)],
    3: [(0, 2, 0)],
    4: [(0, 2, 0)],
    5: [(1, 2, 0)],
    6: [(0, 2, 1)],
    7: [(0, 3, 1), (1, 3, 1), (0, 2, 2)],
    8: [(1, 3, 1)],
    9: [(1, 4, 1)],
    10: [(1, 2, 3), (0, 3, 3), (1, 3, 3)],
}


def exact_moment(i, j):
    # mean of x^i y^j over the unit right triangle
    return 2.0 * math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)


def expand(params, structure):
    n0, n1, n2 = structure
    bary, w = [], []
    k = 0
    if n0:
        w.append(params[k]); bary.append((1 / 3, 1 / 3, 1 / 3)); k += 1
    for _ in range(n1):
        wt, a = params[k], params[k + 1]; k += 2
        for b in [(a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)]:
            bary.append(b); w.append(wt)
    for _ in range(n2):
        wt, a, b = params[k], params[k + 1], params[k + 2]; k += 3
        c = 1 - a - b
        for p in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]:
            bary.append(p); w.append(wt)
    return np.array(bary), np.array(w)


def residual(params, structure, degree):
    bary, w = expand(params, structure)
    x, y = bary[:, 1], bary[:, 2]
    res = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            res.append(np.sum(w * x**i * y**j) - exact_moment(i, j))
    return np.array(res)


def random_start(structure, rng):
    n0, n1, n2 = structure
    npts = n0 + 3 * n1 + 6 * n2
    p = []
    if n0:
        p.append(rng.uniform(0.5, 1.5) / npts)
    for _ in range(n1):
        p += [rng.uniform(0.5, 1.5) / npts, rng.uniform(0.02, 0.48)]
    for _ in range(n2):
        a = rng.uniform(0.01, 0.5)
        b = rng.uniform(0.01, 1 - a - 0.01)
        p += [rng.uniform(0.5, 1.5) / npts, a, b]
    return np.array(p)


def solve(degree, structure, rng, tries=4000):
    for _ in range(tries):
        sol = least_squares(residual, random_start(structure, rng), args=(structure, degree),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
        if np.max(np.abs(sol.fun)) > 1e-15:
            continue
        bary, w = expand(sol.x, structure)
        if np.all(w > 0) and np.all(bary > 1e-10):
            return bary, w
    return None


def main():
    rng = np.random.default_rng(20240)
    out = sys.stdout
    out.write('"""Symmetric positive-weight triangle rules (generated by\n'
              'scripts/generate_triangle_rules.py; do not edit by hand).\n\n'
              'Each entry maps degree -> (barycentric points, weights summing to 1).\n"""\n\n')
    out.write("TRIANGLE_RULES = {\n")
    for degree, structures in STRUCTURES.items():
        for structure in structures:
            found = solve(degree, structure, rng)
            if found is not None:
                break
        else:
            raise RuntimeError(f"no rule found for degree {degree}")
        bary, w = found
        out.write(f"    {degree}: (\n        [\n")
        for b in bary:
            out.write(f"            ({float(b[0])!r}, {float(b[1])!r}, {float(b[2])!r}),\n")
        out.write("        ],\n        [\n")
        for wt in w:
            out.write(f"            {float(wt)!r},\n")
        out.write("        ],\n    ),\n")
        print(f"degree {degree}: {len(w)} points {structure}", file=sys.stderr)
    out.write("}\n")


if __name__ == "__main__":
    main()
