"""Minimal MLP core: forward/backward passes, Adam steps, target-network blending.

Every learned model in the package (policies, critics, reward model, distance
model, novelty networks) is an `Mlp` over a single flat float64 parameter
vector.  Updates are functional: a gradient step returns a new `Mlp` and a new
optimizer state, so approximators can be passed around as immutable values.

Gradients are hand-derived.  Loss functions passed to `grad_step` must return
`(loss_value, grad_wrt_params)`; the loss value alone has to be recomputable
at perturbed parameters so tests can check every gradient against central
finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "sigmoid", "tanh")

_MAGIC = b"MLP1"
_FORMAT_VERSION = 1


def param_count(layer_sizes) -> int:
    """Total parameter count: sum of (n_in + 1) * n_out over consecutive layers."""
    sizes = list(layer_sizes)
    return sum((sizes[i] + 1) * sizes[i + 1] for i in range(len(sizes) - 1))


@dataclass(frozen=True)
class Mlp:
    """A fully-connected network described by layer sizes and a flat parameter vector.

    Parameters are stored weight-then-bias per layer, in layer order.  The
    instance is treated as immutable; use `with_params` to derive an updated
    network.
    """

    layer_sizes: tuple[int, ...]
    params: np.ndarray
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def with_params(self, params: np.ndarray) -> "Mlp":
        if params.shape != self.params.shape:
            raise ValueError(
                f"parameter vector has {params.shape[0]} entries, expected {self.params.shape[0]}"
            )
        return replace(self, params=params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


def init_mlp(
    layer_sizes,
    seed: int,
    hidden_activation: str = "relu",
    output_activation: str = "linear",
) -> Mlp:
    """Create an MLP with uniform fan-in-scaled weights, deterministic in `seed`.

    Each layer's weights and biases are drawn from U(-1/sqrt(n_in), 1/sqrt(n_in)).
    """
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2:
        raise ValueError("layer_sizes needs at least an input and an output size")
    if any(n <= 0 for n in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    if hidden_activation not in HIDDEN_ACTIVATIONS:
        raise ValueError(f"unknown hidden activation {hidden_activation!r}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ValueError(f"unknown output activation {output_activation!r}")

    rng = np.random.default_rng(seed)
    chunks = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        chunks.append(rng.uniform(-bound, bound, size=n_in * n_out))
        chunks.append(rng.uniform(-bound, bound, size=n_out))
    params = np.concatenate(chunks) if chunks else np.zeros(0)
    return Mlp(sizes, params, hidden_activation, output_activation)


def _layers(net: Mlp):
    """Yield (W, b) views into the flat parameter vector."""
    offset = 0
    p = net.params
    for n_in, n_out in zip(net.layer_sizes[:-1], net.layer_sizes[1:]):
        w = p[offset : offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        b = p[offset : offset + n_out]
        offset += n_out
        yield w, b


def _apply_hidden(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _apply_output(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "sigmoid":
        return sigmoid(z)
    return np.tanh(z)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on `x` of shape (in_dim,) or (batch, in_dim)."""
    y, _ = _forward_impl(net, x, keep_cache=False)
    return y


def forward_cached(net: Mlp, x: np.ndarray):
    """Forward pass that also returns the activation cache needed by `backward`."""
    return _forward_impl(net, x, keep_cache=True)


def _forward_impl(net: Mlp, x: np.ndarray, keep_cache: bool):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ValueError(f"input has shape {x.shape}, expected (*, {net.in_dim})")

    acts = [x]
    n_layers = len(net.layer_sizes) - 1
    a = x
    for i, (w, b) in enumerate(_layers(net)):
        z = a @ w + b
        if i < n_layers - 1:
            a = _apply_hidden(net.hidden_activation, z)
        else:
            a = _apply_output(net.output_activation, z)
        if keep_cache:
            acts.append(a)
    y = a[0] if single else a
    cache = (acts, single) if keep_cache else None
    return y, cache


def backward(net: Mlp, cache, d_out: np.ndarray):
    """Backpropagate `d_out` (gradient of a scalar loss wrt the network output).

    Returns `(grad_params, grad_input)` with `grad_params` flat in the same
    layout as `net.params`.  The caller folds any batch averaging into `d_out`.
    """
    acts, single = cache
    d = np.asarray(d_out, dtype=np.float64)
    if single:
        d = d[None, :]

    n_layers = len(net.layer_sizes) - 1
    weights = [w for w, _ in _layers(net)]
    grad = np.zeros_like(net.params)

    # Gradient slices mirror the parameter layout.
    offsets = []
    offset = 0
    for n_in, n_out in zip(net.layer_sizes[:-1], net.layer_sizes[1:]):
        offsets.append((offset, offset + n_in * n_out, offset + n_in * n_out + n_out))
        offset = offsets[-1][2]

    for i in range(n_layers - 1, -1, -1):
        a_out = acts[i + 1]
        if i == n_layers - 1:
            if net.output_activation == "linear":
                dz = d
            elif net.output_activation == "sigmoid":
                dz = d * a_out * (1.0 - a_out)
            else:
                dz = d * (1.0 - a_out**2)
        else:
            if net.hidden_activation == "relu":
                dz = d * (a_out > 0)
            else:
                dz = d * (1.0 - a_out**2)
        a_in = acts[i]
        w_start, b_start, end = offsets[i]
        grad[w_start:b_start] = (a_in.T @ dz).ravel()
        grad[b_start:end] = dz.sum(axis=0)
        d = dz @ weights[i].T

    grad_input = d[0] if single else d
    return grad, grad_input


@dataclass(frozen=True)
class AdamState:
    """Per-parameter first/second moment accumulators for Adam."""

    learning_rate: float
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(net: Mlp, learning_rate: float) -> AdamState:
    if learning_rate < 0:
        raise ValueError("learning rate must be nonnegative")
    n = net.params.shape[0]
    return AdamState(learning_rate, np.zeros(n), np.zeros(n))


def adam_step(opt: AdamState, params: np.ndarray, grad: np.ndarray):
    """One bias-corrected Adam update; returns `(new_opt, new_params)`."""
    if grad.shape != params.shape or opt.m.shape != params.shape:
        raise ValueError("optimizer/parameter shape mismatch")
    t = opt.step_count + 1
    m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad
    v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad**2
    m_hat = m / (1.0 - opt.beta1**t)
    v_hat = v / (1.0 - opt.beta2**t)
    new_params = params - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)
    return replace(opt, m=m, v=v, step_count=t), new_params


def grad_step(net: Mlp, loss_fn, batch, opt: AdamState):
    """Apply one optimizer step for `loss_fn(net, batch) -> (loss, grad)`.

    Returns `(new_net, new_opt, loss)` where `loss` is the pre-step value.
    Raises on a non-finite loss so training failures surface immediately.
    """
    loss, grad = loss_fn(net, batch)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    opt2, params2 = adam_step(opt, net.params, grad)
    return net.with_params(params2), opt2, float(loss)


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """Blend target toward online: theta' = (1 - tau) * theta_t + tau * theta_o."""
    if target.layer_sizes != online.layer_sizes or (
        target.hidden_activation,
        target.output_activation,
    ) != (online.hidden_activation, online.output_activation):
        raise ValueError("target/online architecture mismatch")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return target.with_params((1.0 - tau) * target.params + tau * online.params)


def to_bytes(net: Mlp) -> bytes:
    """Serialize to a little-endian binary record that round-trips bit-exactly."""
    header = struct.pack(
        "<4sIBBI",
        _MAGIC,
        _FORMAT_VERSION,
        HIDDEN_ACTIVATIONS.index(net.hidden_activation),
        OUTPUT_ACTIVATIONS.index(net.output_activation),
        len(net.layer_sizes),
    )
    sizes = struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes)
    data = np.ascontiguousarray(net.params, dtype="<f8").tobytes()
    return header + sizes + data


def from_bytes(blob: bytes) -> Mlp:
    head_len = struct.calcsize("<4sIBBI")
    if len(blob) < head_len:
        raise ValueError("truncated network record")
    magic, version, hid, out, n_sizes = struct.unpack_from("<4sIBBI", blob, 0)
    if magic != _MAGIC:
        raise ValueError("not a network record (bad magic)")
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported network record version {version}")
    offset = head_len
    sizes = struct.unpack_from(f"<{n_sizes}I", blob, offset)
    offset += 4 * n_sizes
    expected = param_count(sizes)
    body = blob[offset:]
    if len(body) != expected * 8:
        raise ValueError("truncated or oversized network record")
    params = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return Mlp(
        tuple(sizes), params, HIDDEN_ACTIVATIONS[hid], OUTPUT_ACTIVATIONS[out]
    )


def hidden_stack(in_dim: int, hidden_size: int, hidden_layers: int, out_dim: int):
    """Layer-size tuple for the standard hidden stack used across the package."""
    return (in_dim, *([hidden_size] * hidden_layers), out_dim)
