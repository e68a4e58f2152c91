"""Synthetic closed-loop data for three network slices.

Each closed-loop (CL) draws OTT traffic, CQI and MIMO rank from its own
perturbed distribution; the CPU-load target follows a fixed formula plus
noise.  Run: python3 demos/01_synthetic_slices.py
"""

import numpy as np

from inhocfl import datagen

seed = 0
truth = datagen.GroundTruth(c1=1.0, cqi_sign=-1)

for name, spec in datagen.DEFAULT_SPECS.items():
    d = datagen.generate_cl_dataset(spec, cl_id=1, size=500, noniid_shift=0.5, seed=seed, truth=truth)
    print(f"{name:12s} mean features {np.round(d.features.mean(axis=0), 2)}  "
          f"cpu mean {d.targets.mean():.2f}  cpu in [0, 3]: {np.mean(d.targets <= 3):.0%}")

# non-IID: two CLs of the same slice see different CQI distributions,
# and the gap shrinks to zero when the shift is switched off
spec = datagen.DEFAULT_SPECS["eMBB"]
for shift in (0.0, 0.5, 1.0):
    a = datagen.generate_cl_dataset(spec, 1, 2000, shift, seed)
    b = datagen.generate_cl_dataset(spec, 2, 2000, shift, seed)
    js = datagen.js_divergence(a.features[:, 3], b.features[:, 3], value_range=(1, 15))
    print(f"shift {shift:.1f}: JS divergence of CQI between CL1 and CL2 = {js:.4f}")

# the formula itself, checked on one hand-made row
row = np.array([1.0, 0.5, 0.5, 12.0, 1.0])
print("ground truth for", row, "=", datagen.ground_truth_cpu(row, truth))

train, test = datagen.train_test_split(a, seed)
print(f"split {len(a)} rows into {len(train)} train / {len(test)} test")
