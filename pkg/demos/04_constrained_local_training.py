"""Local training as a two-player game on one closed-loop.

The model player descends the loss plus a multiplier-weighted surrogate
penalty; the multiplier player raises the penalty weight while confidence
stays under its target.  Compare the in-band confidence of a plain run and
a constrained run.  Run: python3 demos/04_constrained_local_training.py
"""

from inhocfl import datagen, game, model
from inhocfl.confidence import SlaBand

truth = datagen.GroundTruth(c1=1.0, cqi_sign=-1)
d = datagen.generate_cl_dataset(datagen.DEFAULT_SPECS["Browsing"], 1, 500, 0.5, 0, truth)
band = SlaBand(0.0, 3.0, nu=0.85, mu=2.0)
p0 = model.init_params([5, 16, 16, 1], seed=0, activation="tanh")

common = dict(local_epochs=40, lr=0.01, batch_size=32, oracle_steps=0, ig_steps=16,
              explain_batch=32, eta_lambda=0.02)
for label, cfg in [("plain", game.LocalConfig(constrained=False, **common)),
                   ("game", game.LocalConfig(r_lambda=5.0, **common))]:
    p, trace = game.local_train(p0, d, band, cfg, key=(0, 2, 1, 1))
    print(f"\n{label}: final loss {trace[-1].loss:.3f}")
    for t in trace[::8]:
        print(f"  epoch {t.epoch:2d} loss {t.loss:7.3f} confidence {t.confidence:.3f} "
              f"lambda1 {t.lambda1:.3f}")
