"""Attribution-based confidence and its smooth surrogate.

Samples whose prediction lies in the SLA band ``[alpha, beta]`` form the
set U.  Their high-attribution features are zeroed at random (with the soft
attributions as probabilities) and the confidence is the fraction of U
whose prediction stays inside the band afterwards.

The surrogate replaces the band indicator by a product of two logistics
(``mode="smooth_and"``).  ``mode="paper_literal"`` keeps the log-sum-exp of
logistics form instead; it saturates near ``log(e + 1)`` for in-band
predictions and does not track the band indicator, so it is only there for
comparison runs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import model
from .errors import ShapeError

SURROGATE_MODES = ("smooth_and", "paper_literal")


@dataclass(frozen=True)
class SlaBand:
    alpha: float
    beta: float
    nu: float
    mu: float = 50.0

    def __post_init__(self):
        if not self.alpha < self.beta:
            raise ValueError("SLA band needs alpha < beta")
        if not 0.0 < self.nu < 1.0:
            raise ValueError("confidence threshold nu must lie in (0, 1)")
        if not self.mu > 0:
            raise ValueError("logistic steepness mu must be positive")

    def contains(self, z):
        z = np.asarray(z)
        return (z >= self.alpha) & (z <= self.beta)


@dataclass(frozen=True)
class ConfidenceReport:
    c_value: float
    u_size: int
    surrogate_value: float
    mutated_flip_count: int
    empty: bool = False


def sla_subset(preds, band):
    """Indices of predictions inside the band."""
    return np.flatnonzero(band.contains(np.asarray(preds, dtype=np.float64)))


def mutate_features(x_rows, soft, rng):
    """Zero each feature independently with probability given by ``soft``."""
    x_rows = np.asarray(x_rows, dtype=np.float64)
    soft = np.asarray(soft, dtype=np.float64)
    if x_rows.shape != soft.shape:
        raise ShapeError(f"feature rows {x_rows.shape} vs soft attributions {soft.shape}")
    p = rng.random(x_rows.shape) < soft
    return x_rows * (1.0 - p)


def logistic(theta, mu):
    if not mu > 0:
        raise ValueError("mu must be positive")
    return expit(mu * np.asarray(theta, dtype=np.float64))


def _surrogate_terms(z, band, mode):
    """Per-sample smooth membership and its derivative in z."""
    s1 = expit(band.mu * (z - band.alpha))
    s2 = expit(band.mu * (band.beta - z))
    if mode == "smooth_and":
        # d/dz s1*s2 = mu*s1*(1-s1)*s2 - mu*s2*(1-s2)*s1 = mu*s1*s2*(s2-s1)
        prod = s1 * s2
        return prod, band.mu * prod * (s2 - s1)
    d1 = band.mu * s1 * (1.0 - s1)
    d2 = -band.mu * s2 * (1.0 - s2)
    if mode == "paper_literal":
        m = np.maximum(s1, s2)
        e1, e2 = np.exp(s1 - m), np.exp(s2 - m)
        term = m + np.log(e1 + e2)
        return term, (e1 * d1 + e2 * d2) / (e1 + e2)
    raise ValueError(f"unknown surrogate mode {mode!r}")


def surrogate_value(preds, band, mode="smooth_and"):
    z = np.asarray(preds, dtype=np.float64).ravel()
    if z.size == 0:
        return band.nu - 1.0
    term, _ = _surrogate_terms(z, band, mode)
    return float(band.nu - term.mean())


def surrogate_dout(z, band, mode="smooth_and"):
    """Derivative of the surrogate value with respect to each prediction."""
    z = np.ravel(z)
    _, dterm = _surrogate_terms(z, band, mode)
    return dterm * (-1.0 / z.size)


def surrogate_constraint(params, mutated_rows, band, mode="smooth_and"):
    """Surrogate constraint value and its gradient over the parameters.

    Returns ``(psi, (d_weights, d_biases))``; ``psi <= 0`` means satisfied.
    """
    X = np.asarray(mutated_rows, dtype=np.float64).reshape(-1, params.n_inputs)
    if X.shape[0] == 0:
        zero = model.zeros_like(params)
        return band.nu - 1.0, (zero.weights, zero.biases)
    z = model.forward(params, X)
    psi = surrogate_value(z, band, mode)
    grads = model.param_gradient(params, X, surrogate_dout(z, band, mode))
    return psi, grads


def confidence_metric(params, mutated_rows, band, mode="smooth_and"):
    """Fraction of mutated in-band samples whose prediction stays in the band.

    An empty U gives ``c_value = 1`` with ``empty=True``: the constraint is
    vacuously met.
    """
    X = np.asarray(mutated_rows, dtype=np.float64).reshape(-1, params.n_inputs)
    u = X.shape[0]
    if u == 0:
        return ConfidenceReport(1.0, 0, band.nu - 1.0, 0, empty=True)
    z = model.forward(params, X)
    inside = int(np.count_nonzero(band.contains(z)))
    return ConfidenceReport(inside / u, u, surrogate_value(z, band, mode), u - inside)
