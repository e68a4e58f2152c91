"""Feature attributions and their soft (probability) form.

Three explainers are provided: Integrated Gradients, Input x Gradient and a
kernel-weighted Shapley sampling estimator.  Raw attributions are turned
into weighted attributions (attribution divided by feature value) and then
into soft attributions, a per-row softmax over the absolute weighted
attributions that later drives feature mutation.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import model
from .errors import ShapeError

METHODS = ("IG", "InputXGrad", "ShapSampling")
DEFAULT_EPS = 1e-6
QUANTILES = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)


@dataclass(frozen=True, eq=False)
class AttributionMatrix:
    raw: np.ndarray
    weighted: np.ndarray
    soft: np.ndarray
    method: str

    def __post_init__(self):
        if not (self.raw.shape == self.weighted.shape == self.soft.shape):
            raise ShapeError("raw, weighted and soft must share one shape")
        if self.method not in METHODS:
            raise ValueError(f"unknown attribution method {self.method!r}")


@dataclass(frozen=True, eq=False)
class ShapEstimate:
    values: np.ndarray
    # sum(values) - (f(x) - f(background mean)), one entry per row
    residual: np.ndarray
    regularized: bool


def _rows(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.n_inputs:
        raise ShapeError(f"expected input width {params.n_inputs}, got shape {x.shape}")
    return X, single


def _baseline(params, baseline):
    if baseline is None:
        return np.zeros(params.n_inputs)
    b = np.asarray(baseline, dtype=np.float64)
    if b.shape != (params.n_inputs,):
        raise ShapeError(f"baseline must have width {params.n_inputs}")
    return b


def integrated_gradients(params, x, baseline=None, steps=64):
    """Integrated Gradients along the straight path from ``baseline`` to ``x``.

    The path integral is a midpoint Riemann sum with ``steps`` nodes.  Works
    on a single row or a batch of rows.
    """
    if int(steps) < 2:
        raise ValueError("steps must be >= 2")
    steps = int(steps)
    X, single = _rows(params, x)
    b = _baseline(params, baseline)
    diff = X - b
    t = (np.arange(steps) + 0.5) / steps
    path = b + t[:, None, None] * diff[None, :, :]
    grads = model.input_gradient(params, path.reshape(-1, X.shape[1]))
    avg = grads.reshape(steps, X.shape[0], X.shape[1]).mean(axis=0)
    out = diff * avg
    return out[0] if single else out


def input_x_gradient(params, x):
    X, single = _rows(params, x)
    out = X * model.input_gradient(params, X)
    return out[0] if single else out


def _coalition_size_probs(q):
    sizes = np.arange(1, q)
    w = (q - 1) / (sizes * (q - sizes))
    return sizes, w / w.sum()


def sample_coalitions(q, n, rng):
    """Draw ``n`` coalition masks from the Shapley kernel distribution.

    Sizes are drawn with probability proportional to the kernel mass of each
    size, members uniformly within a size.  Draws come in complementary
    pairs, which cancels much of the variance.
    """
    sizes, probs = _coalition_size_probs(q)
    half = (n + 1) // 2
    ks = rng.choice(sizes, size=half, p=probs)
    ranks = np.argsort(np.argsort(rng.random((half, q)), axis=1), axis=1)
    first = (ranks < ks[:, None]).astype(np.float64)
    Z = np.empty((2 * half, q))
    Z[0::2] = first
    Z[1::2] = 1.0 - first
    return Z[:n]


def shap_sampling(params, x, background, n_coalitions=256, seed=0, ridge=1e-10):
    """Kernel-weighted least-squares estimate of Shapley values.

    Features outside a coalition are set to the background mean.  The
    efficiency condition (values sum to f(x) - f(background mean)) is
    imposed as an equality constraint.  Coalition masks are shared by all
    rows of a batch, so the linear system is solved once.
    """
    X, single = _rows(params, x)
    bg = np.asarray(background, dtype=np.float64)
    if bg.ndim == 1:
        bg = bg[None, :]
    if bg.shape[0] == 0 or bg.shape[1] != X.shape[1]:
        raise ValueError("background must be a non-empty matrix of width Q")
    q = X.shape[1]
    if int(n_coalitions) < q + 2:
        raise ValueError(f"n_coalitions must be >= Q + 2 = {q + 2}")
    ref = bg.mean(axis=0)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    Z = sample_coalitions(q, int(n_coalitions), rng)

    # (n_coalitions, rows, q) masked inputs
    masked = Z[:, None, :] * X[None, :, :] + (1.0 - Z[:, None, :]) * ref
    v = model.forward(params, masked.reshape(-1, q)).reshape(len(Z), X.shape[0])
    f_ref = model.forward(params, ref[None, :])[0]
    f_x = model.forward(params, X)
    y = v - f_ref
    total = f_x - f_ref

    G = Z.T @ Z
    kkt = np.zeros((q + 1, q + 1))
    kkt[:q, :q] = G
    kkt[:q, q] = 1.0
    kkt[q, :q] = 1.0
    rhs = np.vstack([Z.T @ y, total[None, :]])
    regularized = False
    if np.linalg.matrix_rank(G) < q:
        warnings.warn("degenerate coalition sample; using a ridge-regularized solve", RuntimeWarning)
        kkt[:q, :q] += ridge * max(1.0, np.trace(G)) * np.eye(q)
        regularized = True
    sol = np.linalg.solve(kkt, rhs)
    values = sol[:q].T
    residual = values.sum(axis=1) - total
    if single:
        return ShapEstimate(values[0], residual[:1], regularized)
    return ShapEstimate(values, residual, regularized)


def weighted_attributions(raw, features, eps=DEFAULT_EPS):
    """Attribution divided by the feature value, with ``|x|`` floored at ``eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    raw = np.asarray(raw, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    if raw.shape != features.shape:
        raise ShapeError(f"shape mismatch {raw.shape} vs {features.shape}")
    sign = np.where(features < 0, -1.0, 1.0)
    return raw / (sign * np.maximum(np.abs(features), eps))


def soft_attributions(weighted):
    """Row-wise softmax over ``|weighted|``."""
    a = np.abs(np.asarray(weighted, dtype=np.float64))
    single = a.ndim == 1
    A = a[None, :] if single else a
    e = np.exp(A - A.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)
    return out[0] if single else out


def raw_attributions(params, X, method, *, ig_steps=64, baseline=None,
                     background=None, n_coalitions=256, seed=0):
    if method == "IG":
        return integrated_gradients(params, X, baseline=baseline, steps=ig_steps)
    if method == "InputXGrad":
        return input_x_gradient(params, X)
    if method == "ShapSampling":
        if background is None:
            background = np.zeros((1, params.n_inputs))
        return shap_sampling(params, X, background, n_coalitions=n_coalitions, seed=seed).values
    raise ValueError(f"unknown attribution method {method!r}")


def explain(params, X, method="IG", eps=DEFAULT_EPS, **kwargs):
    """Raw, weighted and soft attributions for a batch of rows."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    raw = np.atleast_2d(raw_attributions(params, X, method, **kwargs))
    weighted = weighted_attributions(raw, X, eps)
    return AttributionMatrix(raw, weighted, soft_attributions(weighted), method)


def attribution_distribution(attrs, quantiles=QUANTILES, field="raw"):
    """Per-feature summary: mean, quantiles and sign counts."""
    M = np.asarray(getattr(attrs, field) if isinstance(attrs, AttributionMatrix) else attrs,
                   dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("attribution matrix must be non-empty and 2-D")
    qs = np.quantile(M, quantiles, axis=0)
    out = []
    for j in range(M.shape[1]):
        col = M[:, j]
        out.append({
            "feature": j,
            "mean": float(col.mean()),
            "quantiles": {float(p): float(qs[i, j]) for i, p in enumerate(quantiles)},
            "sign_histogram": {
                "neg": int(np.sum(col < 0)),
                "zero": int(np.sum(col == 0)),
                "pos": int(np.sum(col > 0)),
            },
        })
    return out


ATTRIBUTION_CSV_HEADER = ("sample_id", "feature", "raw", "weighted", "soft")


def write_attributions_csv(attrs, path, feature_names=None):
    n, q = attrs.raw.shape
    names = feature_names or [str(j) for j in range(q)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ATTRIBUTION_CSV_HEADER)
        for i in range(n):
            for j in range(q):
                w.writerow([i, names[j], repr(float(attrs.raw[i, j])),
                            repr(float(attrs.weighted[i, j])), repr(float(attrs.soft[i, j]))])


def read_attributions_csv(path, method="IG"):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r, ()))
        if header != ATTRIBUTION_CSV_HEADER:
            raise ValueError(f"{path}: bad header {header}")
        rows = [line for line in r if line]
    names = []
    for line in rows:
        if line[1] not in names:
            names.append(line[1])
    q = len(names)
    if q == 0 or len(rows) % q:
        raise ValueError(f"{path}: truncated attribution table")
    n = len(rows) // q
    out = np.zeros((3, n, q))
    for line in rows:
        i, j = int(line[0]), names.index(line[1])
        out[:, i, j] = [float(v) for v in line[2:5]]
    return AttributionMatrix(out[0], out[1], out[2], method), names

