"""Minimal dense neural-network engine: forward, exact gradients, Adam.

Everything is float64 numpy with no framework dependencies.  Parameters are
immutable during forward/backward; optimizer steps return fresh structures.
Batch reductions use fixed numpy summation order, so identical seeds give
bitwise-identical training runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricsError, ShapeError, TrainingError

ACTIVATIONS = ("tanh", "relu", "identity")


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "identity":
        return z
    raise ShapeError(f"unknown activation {kind!r}")


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "identity":
        return np.ones_like(z)
    raise ShapeError(f"unknown activation {kind!r}")


@dataclass
class MLPParams:
    """Dense network parameters: per-layer weight matrices and bias vectors."""

    layer_sizes: tuple
    weights: list
    biases: list
    activation: str = "tanh"
    final_activation: str = "identity"

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MLPParams":
        return MLPParams(self.layer_sizes, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases],
                         self.activation, self.final_activation)


@dataclass
class ForwardCache:
    """Intermediates retained by forward() for the matching backward()."""

    layer_sizes: tuple
    inputs: list      # input to each affine layer
    pre_acts: list    # affine outputs z_l
    post_acts: list   # activation outputs a_l


@dataclass
class GradientBundle:
    """Gradients mirroring MLPParams, plus the gradient w.r.t. the input batch."""

    weight_grads: list
    bias_grads: list
    input_grad: np.ndarray


def init_params(layer_sizes, activation: str, rng: np.random.Generator,
                final_activation: str = "identity") -> MLPParams:
    """Glorot-uniform weights, zero biases; deterministic per generator state."""
    layer_sizes = tuple(int(s) for s in layer_sizes)
    if len(layer_sizes) < 2:
        raise ShapeError(f"need at least 2 layer sizes, got {layer_sizes}")
    if any(s < 1 for s in layer_sizes):
        raise ShapeError(f"layer sizes must be positive, got {layer_sizes}")
    if activation not in ACTIVATIONS or final_activation not in ACTIVATIONS:
        raise ShapeError(f"activations must be one of {ACTIVATIONS}")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MLPParams(layer_sizes=layer_sizes, weights=weights, biases=biases,
                     activation=activation, final_activation=final_activation)


def forward(params: MLPParams, input_batch: np.ndarray):
    """Run the network on a batch of rows; returns (output_batch, cache)."""
    x = np.asarray(input_batch, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != params.layer_sizes[0]:
        raise ShapeError(
            f"input width {x.shape[1]} != first layer size {params.layer_sizes[0]}")
    inputs, pre_acts, post_acts = [], [], []
    a = x
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ w + b
        kind = params.final_activation if l == last else params.activation
        a = _activate(z, kind)
        pre_acts.append(z)
        post_acts.append(a)
    cache = ForwardCache(layer_sizes=params.layer_sizes, inputs=inputs,
                         pre_acts=pre_acts, post_acts=post_acts)
    out = a[0] if squeeze else a
    return out, cache


def backward(params: MLPParams, cache: ForwardCache, output_grad: np.ndarray) -> GradientBundle:
    """Exact reverse-mode gradients of forward() for the cached batch."""
    if cache.layer_sizes != params.layer_sizes:
        raise ShapeError("cache does not match these parameters")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.post_acts[-1].shape:
        raise ShapeError(
            f"output_grad shape {g.shape} != forward output shape {cache.post_acts[-1].shape}")
    weight_grads = [None] * params.n_layers
    bias_grads = [None] * params.n_layers
    last = params.n_layers - 1
    for l in range(last, -1, -1):
        kind = params.final_activation if l == last else params.activation
        dz = g * _activation_grad(cache.pre_acts[l], cache.post_acts[l], kind)
        weight_grads[l] = cache.inputs[l].T @ dz
        bias_grads[l] = dz.sum(axis=0)
        g = dz @ params.weights[l].T
    return GradientBundle(weight_grads=weight_grads, bias_grads=bias_grads, input_grad=g)


# ----------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------

@dataclass
class AdamState:
    """Optimizer moments over an ordered list of parameter arrays."""

    m: list
    v: list
    step_count: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8


def init_adam_arrays(shapes, lr: float = 0.001, beta1: float = 0.9,
                     beta2: float = 0.999, eps_hat: float = 1e-8) -> AdamState:
    m = [np.zeros(s, dtype=np.float64) for s in shapes]
    v = [np.zeros(s, dtype=np.float64) for s in shapes]
    return AdamState(m=m, v=v, lr=lr, beta1=beta1, beta2=beta2, eps_hat=eps_hat)


def adam_update_arrays(values: list, grads: list, state: AdamState):
    """One Adam step over parallel lists of arrays; returns (values, state)."""
    t = state.step_count + 1
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient at optimizer step {t}", iteration=t)
    new_vals, new_m, new_v = [], [], []
    b1, b2 = state.beta1, state.beta2
    for val, g, m, v in zip(values, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_vals.append(val - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat))
        new_m.append(m)
        new_v.append(v)
    return new_vals, AdamState(m=new_m, v=new_v, step_count=t, lr=state.lr,
                               beta1=b1, beta2=b2, eps_hat=state.eps_hat)


def init_adam(params: MLPParams, lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, eps_hat: float = 1e-8) -> AdamState:
    shapes = [w.shape for w in params.weights] + [b.shape for b in params.biases]
    return init_adam_arrays(shapes, lr=lr, beta1=beta1, beta2=beta2, eps_hat=eps_hat)


def adam_step(params: MLPParams, grads: GradientBundle, state: AdamState):
    """Standard bias-corrected Adam on a whole MLP; returns (params, state)."""
    values = list(params.weights) + list(params.biases)
    gs = list(grads.weight_grads) + list(grads.bias_grads)
    for val, g in zip(values, gs):
        if val.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {val.shape}")
    new_vals, new_state = adam_update_arrays(values, gs, state)
    k = params.n_layers
    new_params = MLPParams(layer_sizes=params.layer_sizes,
                           weights=new_vals[:k], biases=new_vals[k:],
                           activation=params.activation,
                           final_activation=params.final_activation)
    return new_params, new_state


# ----------------------------------------------------------------------
# Loss / packing helpers
# ----------------------------------------------------------------------

def mean_l2_relative_error(pred_groups, true_groups) -> float:
    """Mean over groups of ||pred - true||_2 / ||true||_2.

    Groups are per-function vectors; a zero-norm truth group is an error
    because the ratio is undefined there.
    """
    if len(pred_groups) != len(true_groups) or len(pred_groups) == 0:
        raise ShapeError("pred_groups and true_groups must be equal-length and non-empty")
    total = 0.0
    for k, (p, t) in enumerate(zip(pred_groups, true_groups)):
        p = np.asarray(p, dtype=np.float64).ravel()
        t = np.asarray(t, dtype=np.float64).ravel()
        if p.shape != t.shape:
            raise ShapeError(f"group {k}: shapes {p.shape} vs {t.shape}")
        tn = np.linalg.norm(t)
        if tn == 0.0:
            raise MetricsError(f"group {k} has zero-norm truth; relative error undefined")
        total += np.linalg.norm(p - t) / tn
    return total / len(pred_groups)


def pack_arrays(arrays: list) -> np.ndarray:
    """Concatenate arrays into one flat float64 vector."""
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def unpack_arrays(vector: np.ndarray, shapes: list) -> list:
    """Inverse of pack_arrays for the given shapes."""
    out = []
    off = 0
    for s in shapes:
        size = int(np.prod(s, dtype=np.int64)) if s else 1
        out.append(np.asarray(vector[off: off + size], dtype=np.float64).reshape(s))
        off += size
    if off != len(vector):
        raise ShapeError(f"vector length {len(vector)} != total size {off}")
    return out


def pack_params(params: MLPParams) -> np.ndarray:
    return pack_arrays(list(params.weights) + list(params.biases))


def unpack_params(params: MLPParams, vector: np.ndarray) -> MLPParams:
    shapes = [w.shape for w in params.weights] + [b.shape for b in params.biases]
    arrays = unpack_arrays(vector, shapes)
    k = params.n_layers
    return MLPParams(layer_sizes=params.layer_sizes, weights=arrays[:k],
                     biases=arrays[k:], activation=params.activation,
                     final_activation=params.final_activation)
