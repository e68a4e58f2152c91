"""Confidence under attribution-guided mutation, and its smooth surrogate.

Samples predicted inside the SLA band get their most important features
zeroed at random; confidence is the share that stays in the band.  The
surrogate replaces the indicator with two logistics so it can be
differentiated.  Run: python3 demos/03_confidence.py
"""

import numpy as np

from inhocfl import attribution, confidence, datagen, model
from inhocfl.confidence import SlaBand

truth = datagen.GroundTruth(c1=1.0, cqi_sign=-1)
d = datagen.generate_cl_dataset(datagen.DEFAULT_SPECS["Browsing"], 1, 400, 0.5, 0, truth)
p = model.init_params([5, 16, 16, 1], seed=3, activation="tanh")
band = SlaBand(alpha=-1.0, beta=1.0, nu=0.85, mu=50.0)

preds = model.forward(p, d.features)
U = confidence.sla_subset(preds, band)
print(f"{len(U)} of {len(preds)} predictions fall in [{band.alpha}, {band.beta}]")

rows = d.features[U]
a = attribution.explain(p, rows, "IG", ig_steps=32)
mutated = confidence.mutate_features(rows, a.soft, np.random.default_rng(0))
rep = confidence.confidence_metric(p, mutated, band)
print(f"confidence {rep.c_value:.3f} ({rep.mutated_flip_count} samples left the band), "
      f"surrogate psi = {rep.surrogate_value:+.3f}")

# steeper logistics make nu - psi approach the true confidence
z = model.forward(p, mutated)
for mu in (2.0, 10.0, 50.0, 200.0):
    b = SlaBand(band.alpha, band.beta, band.nu, mu)
    print(f"mu={mu:6.1f}: nu - psi = {band.nu - confidence.surrogate_value(z, b):.3f}")
