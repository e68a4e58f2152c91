"""Feature attributions for a small trained CPU-load model.

Trains a tanh MLP on one CL with plain gradient descent, then compares
Integrated Gradients, Input x Gradient and sampled kernel SHAP, and shows
how the raw scores become per-sample mutation probabilities.
Run: python3 demos/02_explainers.py
"""

import numpy as np

from inhocfl import attribution, datagen, game, model

truth = datagen.GroundTruth(c1=1.0, cqi_sign=-1)
d = datagen.generate_cl_dataset(datagen.DEFAULT_SPECS["eMBB"], 1, 500, 0.5, 0, truth)
p = model.init_params([5, 16, 16, 1], seed=0, activation="tanh")
for epoch in range(30):
    # one shuffled mini-batch pass per epoch, no constraint
    p = game.oracle_step(p, d.features, d.targets, [], np.array([1.0, 0.0]), 0.0,
                         steps=0, lr=0.01, rng=np.random.default_rng(epoch), batch_size=32)
print(f"training MSE after 30 epochs: {model.mse_loss(model.forward(p, d.features), d.targets):.3f}")

X = d.features[:4]
names = datagen.FEATURES
for method in attribution.METHODS:
    a = attribution.explain(p, X, method, ig_steps=64, n_coalitions=256)
    print(f"\n{method}: raw attributions of the first row")
    print("  " + "  ".join(f"{n}={v:+.3f}" for n, v in zip(names, a.raw[0])))
    print("  mutation probabilities " + " ".join(f"{v:.2f}" for v in a.soft[0]))

# completeness: IG scores add up to f(x) - f(baseline)
ig = attribution.integrated_gradients(p, X, steps=128)
gap = ig.sum(axis=1) - (model.forward(p, X) - model.forward(p, np.zeros(5)))
print("\nIG completeness gaps:", np.array2string(gap, precision=2))

summary = attribution.attribution_distribution(attribution.explain(p, d.features[:200], "IG"))
for name, s in zip(names, summary):
    print(f"{name:5s} mean {s['mean']:+.3f}  median {s['quantiles'][0.5]:+.3f}")
