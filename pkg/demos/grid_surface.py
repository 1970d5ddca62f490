"""Test error over the ridge coefficient C and the reservoir size cap N.

One growth per C value covers every cap, since a cap only ends the loop.

    python3 demos/grid_surface.py [seed]
"""

import sys

from hybrid_rscn import PRESETS, make_task
from hybrid_rscn.eval import grid_search

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
task = make_task("sysid", seed)
surf = grid_search(task, [1e-4, 1e-3, 1e-2, 1e-1], [20, 80, 150, 300], 1, seed,
                   settings=PRESETS["sysid"].settings)

print("C \\ N   " + "".join(f"{n:>9d}" for n in surf.n_values))
for c, row in zip(surf.c_values, surf.cells):
    print(f"{c:<8g}" + "".join(f"{v:>9.4f}" for v in row))
c, n, v = surf.best()
print(f"\nbest: C={c:g}, N={n}, test NRMSE {v:.4f}")
