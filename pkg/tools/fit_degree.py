"""Fit one symmetric rule: python fit_degree.py DEGREE MIN_POINTS MAX_POINTS."""
import sys

import numpy as np

from fit_triangle_rules import expand, structures, try_fit

p, lo, hi = (int(a) for a in sys.argv[1:4])
rng = np.random.default_rng(p)
for struct in structures(p, hi):
    if struct[0] + 3 * struct[1] + 6 * struct[2] < lo:
        continue
    x = try_fit(p, struct, rng, 100)
    if x is not None:
        pts, ws = expand(x, struct)
        print(f"{p}: ({struct}, {[float(v) for v in x]}),  # {len(ws)} points", flush=True)
        break
else:
    print(p, "FAILED", flush=True)
