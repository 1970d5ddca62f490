"""Readout adaptation after a sudden output offset.

A trained model streams the test series twice, once with a frozen readout
and once updating it by the minimal-change projection after every sample.
From sample 200 on, the measured output is shifted by +0.2.

    python3 demos/online_drift.py [seed]
"""

import sys

from hybrid_rscn import PRESETS, fit_variant, make_task
from hybrid_rscn.online import run_stream, stream_from_arrays

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
task = make_task("sysid", seed)
model = fit_variant(task, "LASSO-RSCN-L2", PRESETS["sysid"].settings, seed).model

d = model.lagged(task.test)
u = model.reservoir_input(d)
t = d.targets.copy()
t[:, 200:] += 0.2

for adapt in (False, True):
    tr = run_stream(model.net, model.readout, model.linear, stream_from_arrays(u, d.design, t), adapt=adapt)
    label = "adaptive" if adapt else "frozen  "
    print(f"{label}  NRMSE before drift {tr.nrmse(model.washout, 200):.4f}"
          f"   samples 200-400 {tr.nrmse(200, 400):.4f}   whole run {tr.nrmse(model.washout):.4f}")
