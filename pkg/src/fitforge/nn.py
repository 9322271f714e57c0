"""From-scratch differentiable kernels in double precision.

Dense layers with ReLU/sigmoid/SELU activations, an LSTM cell with
exact backpropagation through time, bidirectional stacking, inverted
dropout, Adam and Adagrad with decoupled weight decay, and a central-
difference gradient checker.  Everything is plain numpy float64 with
explicit RNG state; forward passes return caches that the matching
backward passes consume.

Batch conventions: feature batches are (N, D); sequence batches are
(N, L, D); hidden states are (N, H).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    out = np.empty_like(np.asarray(x, dtype=float))
    x = np.asarray(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def selu(x):
    x = np.asarray(x, dtype=float)
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * (np.exp(np.minimum(x, 0.0)) - 1.0))


def selu_grad(x):
    x = np.asarray(x, dtype=float)
    return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


_ACTIVATIONS: dict[str, Callable] = {
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": np.tanh,
    "selu": selu,
}


def activation(kind: str, x):
    """Elementwise activation dispatch over {relu, sigmoid, tanh, selu}."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(np.asarray(x, dtype=float))


def dropout(x, p: float, rng: np.random.Generator | None = None, mode: str = "train"):
    """Inverted dropout: zero with probability p, survivors scaled by 1/(1-p).

    Returns ``(output, mask)``; the mask is None in eval mode, where the
    output is the input unchanged.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    x = np.asarray(x, dtype=float)
    if mode == "eval" or p == 0.0:
        return x, None
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an explicit rng")
    mask = (rng.uniform(size=x.shape) >= p) / (1.0 - p)
    return x * mask, mask


# ---------------------------------------------------------------------------
# Dense layers and the MLP
# ---------------------------------------------------------------------------


@dataclass
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


def init_dense(rng: np.random.Generator, n_in: int, n_out: int) -> Dense:
    bound = 1.0 / np.sqrt(n_in)
    return Dense(weight=rng.uniform(-bound, bound, size=(n_out, n_in)), bias=np.zeros(n_out))


@dataclass
class MLP:
    """Hidden layers with ReLU, a width-1 sigmoid output head."""

    layers: list[Dense]

    def param_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"layer{i}.weight"] = layer.weight
            out[f"layer{i}.bias"] = layer.bias
        return out


def init_mlp(rng: np.random.Generator, n_in: int, hidden_dims: tuple[int, ...]) -> MLP:
    dims = (n_in, *hidden_dims, 1)
    return MLP(layers=[init_dense(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)])


def mlp_forward(
    mlp: MLP,
    x: np.ndarray,
    dropout_p: float = 0.0,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
):
    """Forward pass returning (sigmoid outputs (N,), cache for backward)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != mlp.layers[0].weight.shape[1]:
        raise ValueError(f"input width {x.shape[1]} does not match layer 0 width {mlp.layers[0].weight.shape[1]}")
    if mlp.layers[-1].weight.shape[0] != 1:
        raise ValueError("output head must have width 1")
    hidden_caches = []
    a = x
    for layer in mlp.layers[:-1]:
        z = a @ layer.weight.T + layer.bias
        h = relu(z)
        h, mask = dropout(h, dropout_p, rng, mode)
        hidden_caches.append((a, z, mask))
        a = h
    head = mlp.layers[-1]
    z_out = a @ head.weight.T + head.bias
    y = sigmoid(z_out)[:, 0]
    cache = (hidden_caches, a, y)
    return y, cache


def mlp_backward(mlp: MLP, cache, dy: np.ndarray):
    """Exact reverse-mode gradients; returns (grads dict, input gradient)."""
    hidden_caches, head_input, y = cache
    dy = np.asarray(dy, dtype=float).reshape(-1)
    if dy.shape[0] != y.shape[0]:
        raise ValueError("upstream gradient batch size does not match cached forward pass")
    grads: dict[str, np.ndarray] = {}
    dz = (dy * y * (1.0 - y))[:, None]
    head = mlp.layers[-1]
    grads[f"layer{len(mlp.layers) - 1}.weight"] = dz.T @ head_input
    grads[f"layer{len(mlp.layers) - 1}.bias"] = dz.sum(axis=0)
    da = dz @ head.weight
    for i in range(len(mlp.layers) - 2, -1, -1):
        a_in, z, mask = hidden_caches[i]
        if mask is not None:
            da = da * mask
        dz = da * (z > 0)
        grads[f"layer{i}.weight"] = dz.T @ a_in
        grads[f"layer{i}.bias"] = dz.sum(axis=0)
        da = dz @ mlp.layers[i].weight
    return grads, da


# ---------------------------------------------------------------------------
# LSTM cell and bidirectional layers
# ---------------------------------------------------------------------------


@dataclass
class LSTMCellParams:
    """Gate weights over the concatenation [h_prev, x_t] plus biases."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_c: np.ndarray
    w_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    @property
    def hidden(self) -> int:
        return int(self.w_f.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.w_f.shape[1] - self.w_f.shape[0])

    def param_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        sep = "." if prefix else ""
        return {f"{prefix}{sep}{name}": getattr(self, name) for name in ("w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o")}


def init_lstm(rng: np.random.Generator, n_in: int, hidden: int) -> LSTMCellParams:
    """Uniform +-1/sqrt(fan-in) gate weights; forget bias starts at 1."""
    fan_in = hidden + n_in
    bound = 1.0 / np.sqrt(fan_in)

    def w():
        return rng.uniform(-bound, bound, size=(hidden, fan_in))

    return LSTMCellParams(
        w_f=w(), w_i=w(), w_c=w(), w_o=w(),
        b_f=np.ones(hidden), b_i=np.zeros(hidden), b_c=np.zeros(hidden), b_o=np.zeros(hidden),
    )


@dataclass
class _CellCache:
    z: np.ndarray
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_cell_step(params: LSTMCellParams, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """One gated step: returns (h_t, c_t, cache).

    f, i, o are sigmoids of affine maps on [h_prev, x_t]; the candidate
    state is tanh; c_t = f*c_prev + i*g and h_t = o * tanh(c_t).
    """
    x_t = np.atleast_2d(np.asarray(x_t, dtype=float))
    h_prev = np.atleast_2d(np.asarray(h_prev, dtype=float))
    c_prev = np.atleast_2d(np.asarray(c_prev, dtype=float))
    if x_t.shape[1] != params.input_dim or h_prev.shape[1] != params.hidden:
        raise ValueError(
            f"dimension mismatch: x {x_t.shape}, h {h_prev.shape} for cell with "
            f"input {params.input_dim} and hidden {params.hidden}"
        )
    z = np.concatenate([h_prev, x_t], axis=1)
    f = sigmoid(z @ params.w_f.T + params.b_f)
    i = sigmoid(z @ params.w_i.T + params.b_i)
    g = np.tanh(z @ params.w_c.T + params.b_c)
    o = sigmoid(z @ params.w_o.T + params.b_o)
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, _CellCache(z=z, f=f, i=i, g=g, o=o, c_prev=c_prev, c=c, tanh_c=tanh_c)


def lstm_cell_backward(params: LSTMCellParams, cache: _CellCache, dh: np.ndarray, dc_in: np.ndarray):
    """Gradients for one step given dL/dh_t and the carried dL/dc_t."""
    hidden = params.hidden
    do = dh * cache.tanh_c
    dc = dc_in + dh * cache.o * (1.0 - cache.tanh_c**2)
    df = dc * cache.c_prev
    di = dc * cache.g
    dg = dc * cache.i
    da_f = df * cache.f * (1.0 - cache.f)
    da_i = di * cache.i * (1.0 - cache.i)
    da_c = dg * (1.0 - cache.g**2)
    da_o = do * cache.o * (1.0 - cache.o)
    grads = {
        "w_f": da_f.T @ cache.z,
        "w_i": da_i.T @ cache.z,
        "w_c": da_c.T @ cache.z,
        "w_o": da_o.T @ cache.z,
        "b_f": da_f.sum(axis=0),
        "b_i": da_i.sum(axis=0),
        "b_c": da_c.sum(axis=0),
        "b_o": da_o.sum(axis=0),
    }
    dz = da_f @ params.w_f + da_i @ params.w_i + da_c @ params.w_c + da_o @ params.w_o
    return grads, dz[:, hidden:], dz[:, :hidden], dc * cache.f


def lstm_forward(params: LSTMCellParams, xs: np.ndarray, reverse: bool = False):
    """Run the cell across a (N, L, D) batch; reverse=True traverses right to left.

    Hidden states are emitted aligned with the input steps regardless of
    traversal direction.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 3:
        raise ValueError(f"expected (N, L, D) input, got shape {xs.shape}")
    n, length, _ = xs.shape
    if length == 0:
        raise ValueError("empty sequence")
    h = np.zeros((n, params.hidden))
    c = np.zeros((n, params.hidden))
    hs = np.empty((n, length, params.hidden))
    caches = []
    order = range(length - 1, -1, -1) if reverse else range(length)
    for t in order:
        h, c, cache = lstm_cell_step(params, xs[:, t], h, c)
        hs[:, t] = h
        caches.append(cache)
    return hs, caches


def lstm_layer_backward(params: LSTMCellParams, caches: list, dhs: np.ndarray, reverse: bool = False):
    """BPTT through one direction; returns (param grads, input grads)."""
    dhs = np.asarray(dhs, dtype=float)
    n, length, _ = dhs.shape
    if length != len(caches):
        raise ValueError(f"upstream length {length} does not match cached {len(caches)} steps")
    grads = {name: np.zeros_like(arr) for name, arr in params.param_dict().items()}
    dxs = np.zeros((n, length, params.input_dim))
    dh_carry = np.zeros((n, params.hidden))
    dc_carry = np.zeros((n, params.hidden))
    for step_idx in reversed(range(length)):
        t = (length - 1 - step_idx) if reverse else step_idx
        step_grads, dx, dh_carry, dc_carry = lstm_cell_backward(
            params, caches[step_idx], dhs[:, t] + dh_carry, dc_carry
        )
        for name, g in step_grads.items():
            grads[name] += g
        dxs[:, t] = dx
    return grads, dxs


def bilstm_forward(fwd: LSTMCellParams, bwd: LSTMCellParams, xs: np.ndarray):
    """Both directions over the sequence, concatenated per step: [h_fwd; h_bwd]."""
    hs_f, caches_f = lstm_forward(fwd, xs, reverse=False)
    hs_b, caches_b = lstm_forward(bwd, xs, reverse=True)
    return np.concatenate([hs_f, hs_b], axis=2), (caches_f, caches_b)


def bptt_backward(fwd: LSTMCellParams, bwd: LSTMCellParams, caches, dhs: np.ndarray):
    """Exact backpropagation through time across both directions.

    ``dhs`` carries upstream per-step gradients on the concatenated
    hidden sequence; returns (forward grads, backward grads, input grads).
    """
    hidden = fwd.hidden
    caches_f, caches_b = caches
    grads_f, dxs_f = lstm_layer_backward(fwd, caches_f, dhs[:, :, :hidden], reverse=False)
    grads_b, dxs_b = lstm_layer_backward(bwd, caches_b, dhs[:, :, hidden:], reverse=True)
    return grads_f, grads_b, dxs_f + dxs_b


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    """Adam (bias-corrected, decoupled weight decay) or Adagrad accumulators."""

    kind: str
    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    adagrad_eps: float = 1e-10
    step_count: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("adam", "adagrad"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


def optimizer_step(state: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    """Apply one update in place; returns (params, state) for chaining."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} shape {p.shape}")
    if state.kind == "adam":
        state.step_count += 1
        t = state.step_count
        for name, p in params.items():
            slot = state.slots.setdefault(name, {"m": np.zeros_like(p), "v": np.zeros_like(p)})
            g = grads[name]
            slot["m"] = state.beta1 * slot["m"] + (1.0 - state.beta1) * g
            slot["v"] = state.beta2 * slot["v"] + (1.0 - state.beta2) * g * g
            m_hat = slot["m"] / (1.0 - state.beta1**t)
            v_hat = slot["v"] / (1.0 - state.beta2**t)
            p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
            if state.weight_decay:
                p -= state.lr * state.weight_decay * p
    else:
        for name, p in params.items():
            slot = state.slots.setdefault(name, {"acc": np.zeros_like(p)})
            g = grads[name]
            slot["acc"] += g * g
            p -= state.lr * g / (np.sqrt(slot["acc"]) + state.adagrad_eps)
            if state.weight_decay:
                p -= state.lr * state.weight_decay * p
    return params, state


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    per_param: dict[str, float]
    max_rel_error: float
    threshold: float
    passed: bool


def grad_check(
    loss_fn: Callable[[], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
    threshold: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients against central differences per scalar.

    ``loss_fn`` must evaluate the model at the current (live) parameter
    arrays and return ``(loss, grads)`` with grads keyed like ``params``.
    Dropout must be disabled by the caller; relative error is
    |a - n| / max(|a|, |n|, 1e-8).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    loss0, analytic = loss_fn()
    if not np.isfinite(loss0):
        raise ValueError(f"loss is not finite: {loss0}")
    per_param: dict[str, float] = {}
    for name, arr in params.items():
        worst = 0.0
        grad = analytic[name]
        flat = arr.reshape(-1)
        grad_flat = np.asarray(grad).reshape(-1)
        for idx in range(flat.shape[0]):
            original = flat[idx]
            flat[idx] = original + h
            loss_plus = loss_fn()[0]
            flat[idx] = original - h
            loss_minus = loss_fn()[0]
            flat[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            a = grad_flat[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        per_param[name] = worst
    max_rel = max(per_param.values()) if per_param else 0.0
    return GradCheckReport(per_param=per_param, max_rel_error=max_rel, threshold=threshold, passed=max_rel < threshold)
