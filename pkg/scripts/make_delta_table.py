"""Regenerate src/truh/_data/delta_mst.json (MST degree variances on the flat torus)."""

import json
import pathlib
import sys
import time

from truh.constants import estimate_delta_mst
from truh.core import RngStream, label

DIMS = list(range(1, 11)) + [15, 20, 25, 30, 35]
N_POINTS = 2000
REPS = 40

out = pathlib.Path(__file__).resolve().parents[1] / "src/truh/_data/delta_mst.json"
table = {}
for d in DIMS:
    t0 = time.time()
    value, se = estimate_delta_mst(d, N_POINTS, REPS, RngStream(label("delta-table")),
                                   return_se=True)
    table[str(d)] = {"value": value, "se": se}
    print(f"d={d} delta={value:.4f} se={se:.4f} ({time.time() - t0:.0f}s)", file=sys.stderr)
    out.write_text(json.dumps({"method": "torus", "n_points": N_POINTS, "reps": REPS,
                               "delta": table}, indent=1))
