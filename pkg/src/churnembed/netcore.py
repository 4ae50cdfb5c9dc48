"""Minimal dense-network toolkit: ReLU stacks, Adam, lr decay, checkpoints.

Only what the churn model needs: fixed stacks of fully connected layers with
ReLU after every layer, exact backprop through them, a bias-corrected Adam
update, the epoch-indexed learning-rate decay, and a central finite-difference
gradient checker used by the test suites.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass
class DenseStack:
    """Ordered dense layers; ReLU is applied after every layer."""

    weights: list[np.ndarray]   # each (fan_out, fan_in)
    biases: list[np.ndarray]    # each (fan_out,)

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise DimensionError("weights and biases must pair up")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionError(f"layer shapes {w.shape} / {b.shape} do not pair")
        for prev, nxt in zip(self.weights, self.weights[1:]):
            if nxt.shape[1] != prev.shape[0]:
                raise DimensionError("consecutive layer dimensions do not chain")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "DenseStack":
        return DenseStack([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_stack(dims: list[int], rng: np.random.Generator) -> DenseStack:
    """Glorot-uniform weights, zero biases; dims chains input to output."""
    if len(dims) < 2:
        raise DimensionError("need at least an input and an output dimension")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseStack(weights, biases)


def forward(stack: DenseStack, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Run the stack on a batch (n, in_dim) or a single vector (in_dim,).

    Returns the post-ReLU output and a cache for backward.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != stack.in_dim:
        raise DimensionError(f"input width {h.shape[1]} != stack fan-in {stack.in_dim}")
    cache = []
    for w, b in zip(stack.weights, stack.biases):
        pre = h @ w.T + b
        cache.append((h, pre))
        h = relu(pre)
    out = h[0] if single else h
    return out, cache


def backward(stack: DenseStack, cache: list, d_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact gradients of the stack given the forward cache.

    ``d_out`` matches the forward output shape. Returns (param_grads, d_input)
    where param_grads interleaves [dW1, db1, dW2, db2, ...].
    """
    d_out = np.asarray(d_out, dtype=float)
    single = d_out.ndim == 1
    dh = d_out[None, :] if single else d_out
    if len(cache) != stack.n_layers:
        raise DimensionError("cache does not match stack depth")
    grads: list[np.ndarray] = [None] * (2 * stack.n_layers)  # type: ignore[list-item]
    for k in range(stack.n_layers - 1, -1, -1):
        h_in, pre = cache[k]
        dpre = dh * (pre > 0.0)
        grads[2 * k] = dpre.T @ h_in
        grads[2 * k + 1] = dpre.sum(axis=0)
        dh = dpre @ stack.weights[k]
    d_in = dh[0] if single else dh
    return grads, d_in


# -- optimizer -------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: list[np.ndarray], beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float) -> list[np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays.

    Mutates ``state`` (moments and step counter). Raises DivergenceError on a
    non-finite gradient.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads, and state must align")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient encountered")
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / (1 - b1 ** t)
        v_hat = state.v[i] / (1 - b2 ** t)
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


@dataclass(frozen=True)
class LrSchedule:
    """Epoch-indexed decay eta0 / (1 + k/2)."""

    eta0: float

    def __post_init__(self):
        if self.eta0 <= 0:
            raise DivergenceError(f"initial learning rate must be positive, got {self.eta0}")


def lr_at_epoch(schedule: LrSchedule, k: int) -> float:
    if k < 0:
        raise DimensionError(f"epoch index must be >= 0, got {k}")
    return schedule.eta0 / (1.0 + k / 2.0)


# -- gradient checking -------------------------------------------------------


def finite_difference_grads(loss_fn, arrays: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradients of loss_fn with respect to each array.

    ``loss_fn`` takes no arguments and reads the arrays in place; entries are
    perturbed one at a time. Intended for small test models only.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray],
                       floor: float = 1e-8) -> float:
    """max |a - n| / max(|a| + |n|, floor) over all entries."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


# -- checkpoint i/o -----------------------------------------------------------

CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write named matrices plus a JSON header to an npz file.

    The header always records the format version; callers add model shape
    fields (layer counts, dims).
    """
    header = dict(meta)
    header["format_version"] = CHECKPOINT_FORMAT_VERSION
    payload = {f"arr_{name}": np.asarray(a) for name, a in arrays.items()}
    payload["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise DimensionError(
                f"unsupported checkpoint format {header.get('format_version')}"
            )
        arrays = {
            name[4:]: data[name] for name in data.files if name.startswith("arr_")
        }
    return header, arrays
