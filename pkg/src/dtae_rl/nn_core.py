"""Dense-network numerical core: ReLU MLPs, reverse-mode gradients and Adam.

Everything is float64 numpy. Weights are stored as ``(in_dim, out_dim)``
matrices so a batch of row vectors is pushed through with ``x @ W + b``.
The output layer is always linear; ReLU sits between hidden layers only.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, NumericError

__all__ = [
    "MlpParams",
    "MlpCache",
    "AdamState",
    "init_mlp",
    "mlp_forward",
    "mlp_predict",
    "mlp_backward",
    "adam_init",
    "adam_step",
    "clip_grad_norm",
    "global_norm",
    "save_arrays",
    "load_arrays",
]


@dataclass
class MlpParams:
    """Weights and biases of a ReLU MLP with a linear output layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("weights and biases must be non-empty and paired")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ConfigError(
                    f"layer {i} expects {w.shape[0]} inputs, "
                    f"previous layer emits {self.weights[i - 1].shape[1]}"
                )

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        arrays = list(arrays)
        return cls(weights=arrays[0::2], biases=arrays[1::2])

    def copy(self) -> "MlpParams":
        return MlpParams.from_arrays(a.copy() for a in self.arrays())

    def zeros_like(self) -> "MlpParams":
        return MlpParams.from_arrays(np.zeros_like(a) for a in self.arrays())


@dataclass
class MlpCache:
    """Layer inputs and pre-activations recorded by :func:`mlp_forward`."""

    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    squeeze: bool


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


def init_mlp(
    rng: np.random.Generator,
    in_dim: int,
    out_dim: int,
    hidden: tuple[int, ...] = (64, 64),
    output_gain: float = 1.0,
) -> MlpParams:
    """Orthogonal init, gain sqrt(2) on hidden layers, ``output_gain`` on the head; zero biases."""
    sizes = [in_dim, *hidden, out_dim]
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = output_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        weights.append(_orthogonal(rng, n_in, n_out, gain))
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases)


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, MlpCache]:
    """Run ``x`` (one vector or a batch of rows) through the network.

    Returns the output with the same leading shape as ``x`` and a cache
    for :func:`mlp_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != params.in_dim:
        raise ConfigError(f"input dimension {x.shape} does not match network input {params.in_dim}")
    inputs, pre = [], []
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
    if not np.all(np.isfinite(h)):
        raise NumericError("non-finite network output")
    return (h[0] if squeeze else h), MlpCache(inputs, pre, squeeze)


def mlp_predict(params: MlpParams, x) -> np.ndarray:
    """Inference-only forward pass (no cache, no shape checks beyond numpy's)."""
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    if not np.isfinite(h).all():
        raise NumericError("non-finite network output")
    return h


def mlp_backward(params: MlpParams, cache: MlpCache, output_grad) -> MlpParams:
    """Gradient of ``sum(output * output_grad)`` w.r.t. every weight and bias."""
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :] if g.ndim == 1 else g
    expected = cache.pre_activations[-1].shape
    if g.shape != expected:
        raise ConfigError(f"output_grad shape {g.shape} does not match output {expected}")
    n = params.n_layers
    dws: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    dbs: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            g = g * (cache.pre_activations[i] > 0.0)
        dws[i] = cache.inputs[i].T @ g
        dbs[i] = g.sum(axis=0)
        if i:
            g = g @ params.weights[i].T
    return MlpParams(dws, dbs)


@dataclass
class AdamState:
    """First/second moment accumulators.

    ``m`` and ``v`` are per-array views (same shapes as the parameters)
    into the flat buffers ``m_flat`` / ``v_flat`` so one update touches
    every parameter with a handful of vector operations.
    """

    m_flat: np.ndarray
    v_flat: np.ndarray
    shapes: list[tuple]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @property
    def m(self) -> list[np.ndarray]:
        return _views(self.m_flat, self.shapes)

    @property
    def v(self) -> list[np.ndarray]:
        return _views(self.v_flat, self.shapes)

    def copy(self) -> "AdamState":
        return AdamState(
            self.m_flat.copy(), self.v_flat.copy(), list(self.shapes),
            self.step_count, self.beta1, self.beta2, self.eps,
        )


def _views(flat: np.ndarray, shapes) -> list[np.ndarray]:
    out, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(flat[offset : offset + size].reshape(shape))
        offset += size
    return out


def adam_init(arrays, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    shapes = [a.shape for a in arrays]
    total = sum(int(np.prod(s)) for s in shapes)
    return AdamState(np.zeros(total), np.zeros(total), shapes, beta1=beta1, beta2=beta2, eps=eps)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Rescale ``grads`` so their global L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise NumericError("non-finite gradient norm")
    if max_norm is None or max_norm <= 0 or norm <= max_norm:
        return grads, norm
    scale = max_norm / (norm + 1e-6)
    return [g * scale for g in grads], norm


def adam_step(arrays: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """In-place bias-corrected Adam update of ``arrays``.

    Rejects the whole update (nothing is modified) if any gradient is
    non-finite.
    """
    if len(arrays) != len(grads) or len(arrays) != len(state.shapes):
        raise ConfigError("parameter, gradient and optimizer state lengths differ")
    for p, g, shape in zip(arrays, grads, state.shapes):
        if p.shape != shape or g.shape != shape:
            raise ConfigError(f"gradient shape {g.shape} / parameter shape {p.shape} != {shape}")
    if lr < 0:
        raise ConfigError("learning rate must be non-negative")
    g = np.concatenate([x.ravel() for x in grads])
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient; update rejected")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step_count
    c2 = 1.0 - b2 ** state.step_count
    m, v = state.m_flat, state.v_flat
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    update = (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
    offset = 0
    for p in arrays:
        size = p.size
        p -= update[offset : offset + size].reshape(p.shape)
        offset += size


# --- checkpoint format -----------------------------------------------------
# Plain text. One block per named array:
#   <name> <rows> <cols>
#   <row-major values, one per line, shortest round-trip repr>
# Vectors are stored with cols == 0 to keep their 1-D shape.


def save_arrays(path, named: dict[str, np.ndarray]) -> None:
    lines = ["# dtae_rl checkpoint v1"]
    for name, a in named.items():
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 1:
            rows, cols = a.shape[0], 0
        elif a.ndim == 2:
            rows, cols = a.shape
        else:
            raise ConfigError(f"{name}: only 1-D and 2-D arrays can be saved")
        lines.append(f"{name} {rows} {cols}")
        lines.extend(repr(float(x)) for x in a.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def load_arrays(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    tokens = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    i = 0
    while i < len(tokens):
        name, rows, cols = tokens[i].split()
        rows, cols = int(rows), int(cols)
        count = rows * cols if cols else rows
        values = np.array([float(t) for t in tokens[i + 1 : i + 1 + count]], dtype=np.float64)
        if values.size != count:
            raise ConfigError(f"checkpoint truncated in block {name!r}")
        out[name] = values.reshape(rows, cols) if cols else values
        i += 1 + count
    return out
