"""Identify the third-order benchmark plant with the hybrid model.

Steps: synthesize the data, pick the lag variables with the sparse linear
model, grow a reservoir on what the linear part misses, then compare with
a fixed random reservoir.

    python3 demos/sysid_walkthrough.py [seed]
"""

import sys

from hybrid_rscn import PRESETS, fit_variant, make_task, select_for_task

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
settings = PRESETS["sysid"].settings
task = make_task("sysid", seed)
print(f"train/val/test samples: {task.train.n_samples}/{task.val.n_samples}/{task.test.n_samples}")

sel = select_for_task(task, True, settings)
print(f"\nC_L = {sel.orders.c_l_used:.4g}; {len(sel.orders.selected)} of "
      f"{sel.linear.weights.shape[1]} lag variables kept")
order = sorted(zip(sel.linear.feature_map, sel.linear.weights[0]), key=lambda p: -abs(p[1]))
for (name, lag), w in order[:6]:
    print(f"  {name}(n-{lag})" if lag else f"  {name}(n)  ", f"{w:+.4f}")

for variant in ("LASSO-RSCN-L2", "ESN"):
    res = fit_variant(task, variant, settings, seed, sel if variant.startswith("LASSO") else None)
    rep = res.report
    extra = f", stop: {rep.stop_reason}" if rep is not None else ""
    print(f"\n{variant}: N={res.final_n}{extra}")
    print(f"  train NRMSE {res.train_nrmse:.4f}   test NRMSE {res.model.score(task.test):.4f}"
          f"   ({res.train_seconds:.2f}s)")
