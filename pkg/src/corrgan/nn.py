"""Minimal dense-network engine.

Stacked fully-connected layers with exact analytic backpropagation, an
Adam/plain-gradient parameter update, and a central finite-difference
gradient oracle used throughout the test suite. Everything is float64
numpy; there is no autodiff graph beyond what these functions compute
explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Largest float64 strictly below 1.0; used to keep sigmoid/tanh outputs
# inside their open ranges even for saturating inputs.
_ONE_MINUS = 1.0 - np.finfo(np.float64).epsneg
_TINY = np.finfo(np.float64).tiny

SUPPORTED_ACTIVATIONS = ("tanh", "sigmoid", "relu", "identity")


class DivergenceError(RuntimeError):
    """A training step ran into non-finite numbers."""


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic random stream from a 64-bit seed."""
    return np.random.default_rng(seed)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Stable in both tails, then clipped into the open interval (0, 1):
    # plain float64 sigmoid rounds to exactly 0/1 for |z| beyond ~37.
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _TINY, _ONE_MINUS)


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    """Apply the named activation elementwise."""
    if kind == "tanh":
        return np.clip(np.tanh(z), -_ONE_MINUS, _ONE_MINUS)
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "identity":
        return np.asarray(z, dtype=np.float64)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind: str, out: np.ndarray) -> np.ndarray:
    """Elementwise derivative, expressed in terms of the activation output."""
    if kind == "tanh":
        return 1.0 - out * out
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "relu":
        return (out > 0.0).astype(np.float64)
    if kind == "identity":
        return np.ones_like(out)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class DenseLayer:
    """One affine map plus activation. weights is (out_dim, in_dim)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Mlp:
    """Ordered stack of dense layers; used for generator and discriminator."""

    layers: list[DenseLayer] = field(default_factory=list)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        """Flat list of parameter arrays: [W0, b0, W1, b1, ...]."""
        return [a for layer in self.layers for a in (layer.weights, layer.bias)]

    def copy(self) -> "Mlp":
        return Mlp(
            [
                DenseLayer(l.weights.copy(), l.bias.copy(), l.activation)
                for l in self.layers
            ]
        )


def glorot_uniform(fan_out: int, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_mlp(dims: list[int], activations: list[str], rng: np.random.Generator) -> Mlp:
    """Build an Mlp with Glorot-uniform weights and zero biases.

    dims lists the layer widths including the input width, so
    len(activations) must be len(dims) - 1.
    """
    if len(dims) < 2:
        raise ValueError("need at least an input and an output dimension")
    if len(activations) != len(dims) - 1:
        raise ValueError(
            f"got {len(activations)} activations for {len(dims) - 1} layers"
        )
    if any(d <= 0 for d in dims):
        raise ValueError(f"all dims must be positive, got {dims}")
    layers = []
    for i, act in enumerate(activations):
        if act not in SUPPORTED_ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
        layers.append(
            DenseLayer(
                weights=glorot_uniform(dims[i + 1], dims[i], rng),
                bias=np.zeros(dims[i + 1]),
                activation=act,
            )
        )
    return Mlp(layers)


def mlp_forward(net: Mlp, batch: np.ndarray) -> list[np.ndarray]:
    """Run the network on a (m, in_dim) batch.

    Returns the activation cache [input, out_1, ..., out_L]; the last entry
    is the network output. The cache feeds mlp_backward.
    """
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.in_dim:
        raise ValueError(
            f"batch shape {a.shape} incompatible with input dim {net.in_dim}"
        )
    cache = [a]
    for layer in net.layers:
        a = activate(layer.activation, a @ layer.weights.T + layer.bias)
        cache.append(a)
    return cache


def mlp_output(net: Mlp, batch: np.ndarray) -> np.ndarray:
    return mlp_forward(net, batch)[-1]


def mlp_backward(
    net: Mlp, cache: list[np.ndarray], upstream_grad: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact gradients of a scalar loss through the network.

    upstream_grad is d(loss)/d(output), shaped like the output. Returns
    (grads, input_grad) where grads aligns with net.parameters() and
    input_grad is d(loss)/d(input) — the piece that flows into whatever
    network produced this one's input.
    """
    if len(cache) != len(net.layers) + 1:
        raise ValueError("cache does not match network depth")
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != cache[-1].shape:
        raise ValueError(
            f"upstream grad shape {g.shape} != output shape {cache[-1].shape}"
        )
    grads: list[np.ndarray] = []
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        delta = g * activation_grad(layer.activation, cache[i + 1])
        grads.append(delta.sum(axis=0))  # bias
        grads.append(delta.T @ cache[i])  # weights
        g = delta @ layer.weights
    grads.reverse()
    return grads, g


@dataclass
class AdamState:
    """First/second-moment accumulators for one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    maximize: bool = False,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Adaptive-moment update with bias correction, in place.

    maximize=True ascends the objective (the adversarial updates are
    written as gradient ascent), False descends.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state lengths disagree")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient entries; aborting step")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if maximize:
            g = -g
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def sgd_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    lr: float,
    maximize: bool = False,
) -> None:
    """Plain gradient step (the config switch for un-accelerated ascent)."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient entries; aborting step")
    sign = 1.0 if maximize else -1.0
    for p, g in zip(params, grads):
        p += sign * lr * g


def finite_diff_grad(loss_fn, params: list[np.ndarray], epsilon: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradient of loss_fn with respect to params.

    loss_fn is called with the (temporarily perturbed) params list and must
    be deterministic. Perturbations are undone before returning.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    grads = []
    for arr in params:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + epsilon
            hi = loss_fn(params)
            arr[idx] = orig - epsilon
            lo = loss_fn(params)
            arr[idx] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise DivergenceError("non-finite loss during finite differences")
            g[idx] = (hi - lo) / (2.0 * epsilon)
        grads.append(g)
    return grads
