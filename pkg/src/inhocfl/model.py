"""Feedforward regressor with hand-written reverse mode.

Parameters are stored as ``W[l]`` of shape ``(size[l+1], size[l])`` and
``b[l]`` of shape ``(size[l+1],)``.  Hidden layers use relu or tanh, the
output layer is the identity.  Everything is float64.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError

ACTIVATIONS = ("relu", "tanh")
CHECKPOINT_FORMAT = "inhocfl.mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True, eq=False)
class ModelParams:
    layer_sizes: tuple
    weights: tuple
    biases: tuple
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError("need one weight matrix and bias vector per layer")
        ws, bs = [], []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ShapeError(
                    f"layer {l}: expected W {(sizes[l + 1], sizes[l])} and b {(sizes[l + 1],)}, "
                    f"got {w.shape} and {b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError(f"non-finite parameters in layer {l}", layer=l)
            w.setflags(write=False)
            b.setflags(write=False)
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @classmethod
    def _unchecked(cls, layer_sizes, weights, biases, activation):
        # internal fast path for arrays derived from already-valid params
        obj = object.__new__(cls)
        for name, value in (("layer_sizes", layer_sizes), ("weights", tuple(weights)),
                            ("biases", tuple(biases)), ("activation", activation)):
            object.__setattr__(obj, name, value)
        return obj

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_layers(self):
        return len(self.weights)

    def flat(self):
        """All parameters as one vector (W0, b0, W1, b1, ...)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_flat(self, vec):
        """New parameters of the same architecture from a flat vector."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ShapeError(f"expected {self.size} parameters, got {vec.shape}")
        ws, bs, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[i:i + w.size].reshape(w.shape))
            i += w.size
            bs.append(vec[i:i + b.size])
            i += b.size
        return ModelParams(self.layer_sizes, tuple(ws), tuple(bs), self.activation)

    @property
    def size(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def same_architecture(self, other):
        return self.layer_sizes == other.layer_sizes and self.activation == other.activation


@dataclass(frozen=True, eq=False)
class GradientBundle:
    d_weights: tuple
    d_biases: tuple
    d_input: np.ndarray

    def flat(self):
        parts = []
        for w, b in zip(self.d_weights, self.d_biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)


def _check_sizes(layer_sizes):
    sizes = list(layer_sizes)
    if len(sizes) < 2 or any(int(s) != s or s < 1 for s in sizes):
        raise ValueError(f"invalid layer_sizes {layer_sizes!r}")
    if sizes[-1] != 1:
        raise ValueError("the regressor has a single output")
    return [int(s) for s in sizes]


def init_params(layer_sizes, seed, activation="relu"):
    """Glorot-uniform weights, zero biases."""
    sizes = _check_sizes(layer_sizes)
    g = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(g.uniform(-bound, bound, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return ModelParams(tuple(sizes), tuple(ws), tuple(bs), activation)


def zeros_like(params):
    return params.with_flat(np.zeros(params.size))


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.n_inputs:
        raise ShapeError(f"expected input width {params.n_inputs}, got shape {x.shape}")
    return X, single


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, a):
    return z > 0 if name == "relu" else 1.0 - a * a


def _first_bad(arrays):
    for l, a in enumerate(arrays):
        if not np.all(np.isfinite(a)):
            return l
    return None


def _forward_cache(params, X):
    """Run the network, keeping pre-activations and activations."""
    acts, pres = [X], []
    h = X
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T
        z += b
        pres.append(z)
        h = z if l == last else _act(params.activation, z)
        acts.append(h)
    if not np.isfinite(h).all():
        l = _first_bad(acts[1:])
        raise NumericError(f"non-finite activation in layer {l}", layer=l)
    return pres, acts


def forward(params, x):
    """Predictions for one row (returns a float) or a batch (returns a vector)."""
    X, single = _as_batch(params, x)
    _, acts = _forward_cache(params, X)
    out = acts[-1][:, 0]
    return float(out[0]) if single else out


def _backprop(params, pres, acts, dout, need_params=True, need_input=True):
    """Reverse pass for upstream gradient ``dout`` (one value per row)."""
    delta = np.asarray(dout, dtype=np.float64).reshape(-1, 1)
    L = params.n_layers
    dws = [None] * L
    dbs = [None] * L
    for l in range(L - 1, -1, -1):
        if need_params:
            dws[l] = delta.T @ acts[l]
            dbs[l] = delta.sum(axis=0)
        if l == 0 and not need_input:
            break
        delta = delta @ params.weights[l]
        if l > 0:
            delta = delta * _act_grad(params.activation, pres[l - 1], acts[l])
    check = (dws if need_params else []) + ([delta] if need_input else [])
    if not all(np.isfinite(a).all() for a in check):
        l = _first_bad(dws) if need_params else 0
        raise NumericError(f"non-finite gradient at layer {l}", layer=l)
    return tuple(dws), tuple(dbs), (delta if need_input else None)


def param_gradient(params, x, dout):
    """Gradient of ``sum_i dout_i * f(x_i)`` with respect to the parameters.

    Returns ``(d_weights, d_biases)``.
    """
    X, _ = _as_batch(params, x)
    dout = np.asarray(dout, dtype=np.float64).ravel()
    if dout.shape != (X.shape[0],):
        raise ShapeError("dout needs one entry per row")
    pres, acts = _forward_cache(params, X)
    dws, dbs, _ = _backprop(params, pres, acts, dout, need_input=False)
    return dws, dbs


def input_gradient(params, x):
    """Gradient of the scalar output with respect to each input row."""
    X, single = _as_batch(params, x)
    pres, acts = _forward_cache(params, X)
    _, _, dx = _backprop(params, pres, acts, np.ones(X.shape[0]), need_params=False)
    return dx[0] if single else dx


def mse_loss(preds, targets):
    preds = np.asarray(preds, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if preds.shape != targets.shape:
        raise ShapeError(f"length mismatch: {preds.shape} vs {targets.shape}")
    if preds.size == 0:
        raise ShapeError("empty batch")
    r = preds - targets
    return float(np.mean(r * r))


def backward(params, batch, targets):
    """MSE loss and its exact gradient.

    ``d_input`` holds the gradient of the model output (not of the loss)
    with respect to each input row; the attribution code consumes it.
    """
    X, _ = _as_batch(params, batch)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if y.shape != (X.shape[0],):
        raise ShapeError(f"{X.shape[0]} rows but {y.size} targets")
    pres, acts = _forward_cache(params, X)
    preds = acts[-1][:, 0]
    loss = mse_loss(preds, y)
    n = X.shape[0]
    dws, dbs, _ = _backprop(params, pres, acts, (2.0 / n) * (preds - y), need_input=False)
    _, _, dx = _backprop(params, pres, acts, np.ones(n), need_params=False)
    return loss, GradientBundle(dws, dbs, dx)


def penalized_gradient(params, batch, targets, penalties=()):
    """Gradient of ``mse(batch) + sum_m g_m(f(rows_m))`` in one forward/backward pass.

    ``penalties`` holds ``(rows_m, dg_m)`` pairs where ``dg_m(z)`` maps the
    predictions on ``rows_m`` to ``dg_m/dz``.  Returns
    ``(mse, (d_weights, d_biases))``.
    """
    X, _ = _as_batch(params, batch)
    y = np.asarray(targets, dtype=np.float64).ravel()
    n = X.shape[0]
    if y.shape != (n,):
        raise ShapeError(f"{n} rows but {y.size} targets")
    penalties = [(r, fn) for r, fn in penalties if len(r)]
    if penalties:
        X = np.concatenate([X] + [r for r, _ in penalties])
    pres, acts = _forward_cache(params, X)
    out = acts[-1][:, 0]
    resid = out[:n] - y
    douts = [(2.0 / n) * resid]
    i = n
    for rows, fn in penalties:
        douts.append(fn(out[i:i + len(rows)]))
        i += len(rows)
    dout = np.concatenate(douts) if len(douts) > 1 else douts[0]
    dws, dbs, _ = _backprop(params, pres, acts, dout, need_input=False)
    return float(resid @ resid) / n, (dws, dbs)


def axpy(params, alpha, grads):
    """``params + alpha * grads`` for a (d_weights, d_biases) pair."""
    dws, dbs = grads
    ws = [w + alpha * dw for w, dw in zip(params.weights, dws)]
    bs = [b + alpha * db for b, db in zip(params.biases, dbs)]
    return ModelParams._unchecked(params.layer_sizes, ws, bs, params.activation)


def to_json(params):
    return json.dumps({
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(params.layer_sizes),
        "activation": params.activation,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    })


def from_json(text):
    doc = json.loads(text)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not an inhocfl checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    return ModelParams(
        tuple(doc["layer_sizes"]),
        tuple(np.array(w, dtype=np.float64).reshape(len(w), -1) for w in doc["weights"]),
        tuple(np.array(b, dtype=np.float64) for b in doc["biases"]),
        doc["activation"],
    )


def save(params, path):
    with open(path, "w") as fh:
        fh.write(to_json(params))


def load(path):
    with open(path) as fh:
        return from_json(fh.read())
