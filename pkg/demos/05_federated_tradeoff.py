"""Federated training with and without the confidence constraint.

Runs the small configuration in both modes, then prints per-round loss and
confidence side by side with the cumulative time to convergence.  For the
full three-seed comparison use the acceptance suite.
Run: python3 demos/05_federated_tradeoff.py
"""

import dataclasses
import os

from inhocfl import report
from inhocfl.federation import run_federation

cfg = report.load_config(os.path.join(os.path.dirname(__file__), os.pardir, "configs", "quick.json"))
runs = {m: run_federation(dataclasses.replace(cfg.federation, mode=m))
        for m in ("in_hoc", "post_hoc_baseline")}

for s in cfg.federation.slices:
    print(f"\n{s}")
    for a, b in zip(runs["in_hoc"].for_slice(s), runs["post_hoc_baseline"].for_slice(s)):
        print(f"  round {a.round}: in-hoc loss {a.loss:6.3f} conf {a.confidence:.3f} | "
              f"post-hoc loss {b.loss:6.3f} conf {b.confidence:.3f}")

for m, res in runs.items():
    for t in report.timing_table(res.rounds):
        print(f"{m:18s} {t['slice']:12s} converged at round {t['convergence_round']}, "
              f"{t['cumulative_wall_time_s']:.2f}s")
