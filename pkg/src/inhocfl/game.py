"""Proxy-Lagrangian local training.

The model player descends ``mse + sum_m lambda_m * psi_m`` (smooth
surrogates), the multiplier player keeps a column-stochastic matrix ``A``
updated multiplicatively with the *original* constraint values, and its
stationary distribution gives the multipliers.  Index 0 of every
multiplier vector is the objective, indices 1..M the constraints.
"""

import time
from functools import partial
from dataclasses import dataclass, field

import numpy as np

from . import attribution, confidence, model
from . import rng as rngmod
from .errors import NumericError

STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class LocalConfig:
    local_epochs: int = 100
    lr: float = 0.01
    oracle_steps: int = 1  # 0 = one shuffled pass of mini-batches
    batch_size: int = 0  # 0 = full batch
    eta_lambda: float = 0.02
    r_lambda: float = 1e-5
    xai_method: str = "IG"
    ig_steps: int = 64
    n_coalitions: int = 256
    explain_batch: int = 128
    surrogate_mode: str = "smooth_and"
    mutation: bool = True
    constrained: bool = True

    def __post_init__(self):
        for name in ("local_epochs", "ig_steps", "explain_batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.batch_size < 0 or self.oracle_steps < 0:
            raise ValueError("batch_size and oracle_steps must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.eta_lambda < 0 or self.r_lambda < 0:
            raise ValueError("eta_lambda and r_lambda must be >= 0")
        if self.xai_method not in attribution.METHODS:
            raise ValueError(f"xai_method must be one of {attribution.METHODS}")
        if self.surrogate_mode not in confidence.SURROGATE_MODES:
            raise ValueError(f"surrogate_mode must be one of {confidence.SURROGATE_MODES}")


@dataclass
class GameState:
    a_matrix: np.ndarray
    r_lambda: float
    eta_lambda: float
    iterates: list = field(default_factory=list)

    @classmethod
    def initial(cls, n_constraints, r_lambda, eta_lambda):
        m = n_constraints + 1
        return cls(np.full((m, m), 1.0 / m), r_lambda, eta_lambda)

    @property
    def lam(self):
        return top_eigenvector(self.a_matrix)


@dataclass(frozen=True)
class EpochTrace:
    epoch: int
    loss: float
    confidence: float
    psi: float
    lambda1: float
    u_size: int
    wall_time_s: float


def _check_stochastic(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(a > 0):
        raise ValueError("matrix entries must be strictly positive")
    if np.max(np.abs(a.sum(axis=0) - 1.0)) > STOCHASTIC_TOL:
        raise ValueError("matrix columns must sum to 1")
    return a


def top_eigenvector(a_matrix, tol=1e-10, max_iter=1000):
    """Stationary distribution of a positive column-stochastic matrix (power iteration)."""
    a = _check_stochastic(a_matrix)
    v = np.full(a.shape[0], 1.0 / a.shape[0])
    for _ in range(max_iter):
        nxt = a @ v
        nxt /= nxt.sum()
        gap = np.abs(nxt - v).sum()
        v = nxt
        if gap <= tol:
            break
    return v


def lambda_gradient(phi_values):
    """Gradient of the multiplier player's Lagrangian: ``[0, phi_1, ..., phi_M]``."""
    phi = np.asarray(phi_values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(phi)):
        raise NumericError("non-finite constraint value")
    return np.concatenate([[0.0], phi])


def exponentiated_update(a_matrix, eta_lambda, delta):
    """Scale row m by ``exp(eta * delta_m)`` and renormalise every column."""
    a = np.asarray(a_matrix, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64).ravel()
    if delta.shape != (a.shape[0],) or a.shape[0] != a.shape[1]:
        raise ValueError(f"delta of length {a.shape[0]} required for a {a.shape} matrix")
    scale = np.exp(eta_lambda * (delta - delta.max()))
    new = a * scale[:, None]
    return new / new.sum(axis=0, keepdims=True)


def average_iterates(iterates):
    if len(iterates) == 0:
        raise ValueError("no iterates to average")
    first = iterates[0]
    if any(not p.same_architecture(first) for p in iterates):
        raise ValueError("iterates have different architectures")
    return first.with_flat(np.mean([p.flat() for p in iterates], axis=0))


def multiplier_weights(lam, r_lambda):
    """Penalty weights of the constraint coordinates, scaled to radius ``r_lambda``."""
    lam = np.asarray(lam, dtype=np.float64)
    return r_lambda * lam[1:] / lam.sum()


def _n_steps(n, steps, batch_size):
    if not batch_size or batch_size >= n:
        return max(steps, 1)
    return -(-n // batch_size) if steps == 0 else steps


def _minibatches(n, steps, batch_size, rng):
    if not batch_size or batch_size >= n:
        for _ in range(max(steps, 1)):
            yield None
        return
    if steps == 0:
        perm = rng.permutation(n)
        for i in range(0, n, batch_size):
            yield perm[i:i + batch_size]
        return
    for _ in range(steps):
        yield rng.choice(n, size=batch_size, replace=False)


def oracle_step(params, batch, targets, surrogates, lam, r_lambda, steps=1, lr=0.01,
                rng=None, batch_size=0):
    """Gradient-descent updates on ``mse + sum_m w_m * psi_m``.

    ``surrogates`` is a sequence of ``(mutated_rows, band, mode)``, one per
    constraint; ``w = multiplier_weights(lam, r_lambda)``.  With
    ``batch_size`` > 0 each update uses a mini-batch drawn from ``rng`` and
    a matching slice of the surrogate rows; ``steps=0`` then means one
    shuffled pass over the data.
    """
    X = np.asarray(batch, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    weights = multiplier_weights(lam, r_lambda) if len(surrogates) else np.zeros(0)
    penalties = [
        (rows, partial(_weighted_dout, wm, band, mode))
        for wm, (rows, band, mode) in zip(weights, surrogates)
        if wm != 0.0 and len(rows)
    ]
    n_steps = _n_steps(X.shape[0], int(steps), batch_size)
    if batch_size and penalties:
        # like the data, the surrogate rows are visited once per call:
        # each step sees the next window of a shuffled copy
        penalties = [(r[rng.permutation(len(r))], fn) for r, fn in penalties]
    w = params
    for step, idx in enumerate(_minibatches(X.shape[0], int(steps), batch_size, rng)):
        if idx is None:
            Xb, yb, pen = X, y, penalties
        else:
            Xb, yb = X[idx], y[idx]
            pen = [(_window(r, step, -(-len(r) // n_steps)), fn) for r, fn in penalties]
        _, grads = model.penalized_gradient(w, Xb, yb, pen)
        w = model.axpy(w, -lr, grads)
    return w


def _window(rows, step, size):
    n = len(rows)
    if n <= size:
        return rows
    start = (step * size) % n
    if start + size <= n:
        return rows[start:start + size]
    return np.concatenate([rows[start:], rows[:start + size - n]])


def _weighted_dout(weight, band, mode, z):
    _, dterm = confidence._surrogate_terms(z, band, mode)
    return dterm * (-weight / z.size)


def local_train(global_params, dataset, band, config, key=(0, 0, 0, 0)):
    """One round of local proxy-Lagrangian training on a closed-loop.

    ``key`` = (master seed, slice index, cl id, round) selects the random
    substreams.  Training mini-batches, explanation batches and mutation
    masks use separate streams, so switching the constraint off leaves the
    weight trajectory untouched.

    Returns ``(averaged params, [EpochTrace, ...])``.
    """
    seed, *rest = key
    X, y = dataset.features, dataset.targets
    n = len(y)
    if n == 0:
        raise ValueError("empty local dataset")
    train_rng = rngmod.substream(seed, rngmod.TRAIN, *rest)
    ex_rng = rngmod.substream(seed, rngmod.EXPLAIN, *rest)
    mut_rng = rngmod.substream(seed, rngmod.MUTATE, *rest)
    state = GameState.initial(1, config.r_lambda, config.eta_lambda)
    zero_bg = np.zeros((1, X.shape[1]))
    w = global_params
    trace = []

    for epoch in range(config.local_epochs):
        t0 = time.perf_counter()
        loss = model.mse_loss(model.forward(w, X), y)
        c_value, psi, lam1, u = float("nan"), float("nan"), float("nan"), 0
        surrogates = []
        lam = np.array([1.0, 0.0])
        if config.constrained:
            idx = np.sort(ex_rng.choice(n, size=min(config.explain_batch, n), replace=False))
            Xb = X[idx]
            U = confidence.sla_subset(model.forward(w, Xb), band)
            rows = Xb[U]
            if len(U) and config.mutation:
                attrs = attribution.explain(
                    w, rows, config.xai_method, ig_steps=config.ig_steps,
                    background=zero_bg, n_coalitions=config.n_coalitions,
                    seed=int(ex_rng.integers(2**32)))
                rows = confidence.mutate_features(rows, attrs.soft, mut_rng)
            report = confidence.confidence_metric(w, rows, band, config.surrogate_mode)
            c_value, psi, u = report.c_value, report.surrogate_value, report.u_size
            lam = state.lam
            lam1 = float(lam[1])
            surrogates = [(rows, band, config.surrogate_mode)]

        w_hat = oracle_step(w, X, y, surrogates, lam, config.r_lambda, config.oracle_steps,
                            config.lr, rng=train_rng, batch_size=config.batch_size)

        if config.constrained:
            rows = surrogates[0][0]
            c_after = float(np.mean(band.contains(model.forward(w_hat, rows)))) if len(rows) else 1.0
            delta = lambda_gradient([band.nu - c_after])
            state.a_matrix = exponentiated_update(state.a_matrix, config.eta_lambda, delta)

        state.iterates.append(w_hat)
        w = w_hat
        trace.append(EpochTrace(epoch, loss, c_value, psi, lam1, u, time.perf_counter() - t0))

    return average_iterates(state.iterates), trace
