"""Dense feed-forward networks with hand-written backprop, Adam and a finite-difference checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class ShapeMismatch(ValueError):
    pass


class BadArchitecture(ValueError):
    pass


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name: str, z: np.ndarray, a: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    if name == "relu":
        return upstream * (z > 0)
    if name == "tanh":
        return upstream * (1.0 - a * a)
    return upstream


@dataclass
class Network:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)) or not self.weights:
            raise BadArchitecture("weights, biases and activations must have equal nonzero length")
        for j, (w, b, name) in enumerate(zip(self.weights, self.biases, self.activations)):
            if name not in ACTIVATIONS:
                raise BadArchitecture(f"unknown activation {name!r}")
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeMismatch(f"layer {j}: weight {w.shape} / bias {b.shape}")
            if j and w.shape[1] != self.weights[j - 1].shape[0]:
                raise ShapeMismatch(f"layer {j} expects {w.shape[1]} inputs, previous layer gives {self.weights[j - 1].shape[0]}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases interleaved per layer; the arrays are live views."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> Network:
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases], list(self.activations))

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


@dataclass
class ForwardTape:
    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]
    batched: bool


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


@dataclass
class OptimizerState:
    """Adam moments for one network. ``l2`` decays weights only, never biases."""

    lr: float
    l2: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Network, lr: float, l2: float = 1e-4, **kw) -> OptimizerState:
        zeros = [np.zeros_like(p) for p in net.parameters()]
        return cls(lr=lr, l2=l2, m=zeros, v=[z.copy() for z in zeros], **kw)


def init_network(layer_dims: Sequence[int], activations: Sequence[str], seed: int | np.random.Generator) -> Network:
    """Glorot-uniform weights, zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise BadArchitecture(f"need at least two positive layer sizes, got {list(layer_dims)}")
    if len(activations) != len(dims) - 1:
        raise BadArchitecture("need one activation per layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases, list(activations))


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Run ``x`` (a vector or a batch of row vectors) through ``net``."""
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise ShapeMismatch(f"network expects {net.input_dim} inputs, got shape {x.shape}")
    h = x if batched else x[None, :]
    pre, post = [], []
    for w, b, name in zip(net.weights, net.biases, net.activations):
        z = h @ w.T + b
        h = _act(name, z)
        pre.append(z)
        post.append(h)
    tape = ForwardTape(x, pre, post, batched)
    return (h if batched else h[0]), tape


def backward(net: Network, tape: ForwardTape, output_grad: np.ndarray) -> Gradients:
    """Gradients of ``sum(output_grad * output)`` (summed over the batch) w.r.t. parameters and input."""
    g = np.asarray(output_grad, dtype=np.float64)
    out = tape.post[-1]
    if not tape.batched:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != out.shape or len(tape.pre) != len(net.weights):
        raise ShapeMismatch(f"output gradient {np.shape(output_grad)} does not match output {out.shape}")
    inputs = tape.inputs if tape.batched else tape.inputs[None, :]
    n = len(net.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for j in range(n - 1, -1, -1):
        dz = _act_grad(net.activations[j], tape.pre[j], tape.post[j], g)
        below = tape.post[j - 1] if j else inputs
        gw[j] = dz.T @ below
        gb[j] = dz.sum(axis=0)
        g = dz @ net.weights[j]
    return Gradients(gw, gb, g if tape.batched else g[0])


def optimizer_step(net: Network, grads: Gradients, opt: OptimizerState) -> tuple[Network, OptimizerState]:
    """One bias-corrected Adam step, applied in place; returns its arguments for chaining."""
    params = net.parameters()
    gparams = grads.parameters()
    if len(gparams) != len(params) or len(opt.m) != len(params):
        raise ShapeMismatch("gradient/optimizer layout does not match the network")
    opt.step += 1
    c1 = 1.0 - opt.beta1**opt.step
    c2 = 1.0 - opt.beta2**opt.step
    for k, (p, g) in enumerate(zip(params, gparams)):
        if g.shape != p.shape or opt.m[k].shape != p.shape:
            raise ShapeMismatch(f"parameter {k}: {p.shape} vs gradient {g.shape}")
        if k % 2 == 0 and opt.l2:
            g = g + opt.l2 * p
        opt.m[k] *= opt.beta1
        opt.m[k] += (1.0 - opt.beta1) * g
        opt.v[k] *= opt.beta2
        opt.v[k] += (1.0 - opt.beta2) * g * g
        p -= opt.lr * (opt.m[k] / c1) / (np.sqrt(opt.v[k] / c2) + opt.eps)
    return net, opt


def grad_check(
    net: Network,
    x: np.ndarray,
    h: float = 1e-5,
    output_grad: np.ndarray | None = None,
    corrupt: Callable[[Gradients], None] | None = None,
    floor: float = 1e-6,
) -> float:
    """Worst relative error between backprop and central differences.

    The probed scalar is ``sum(output_grad * net(x))``; ``output_grad``
    defaults to ones. Errors are taken relative to the finite-difference
    value (floored at ``floor``) over every parameter and every input
    component. ``corrupt`` may edit
    the analytic gradients in place before comparison.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    out, tape = forward(net, x)
    g = np.ones_like(out) if output_grad is None else np.asarray(output_grad, dtype=np.float64)
    grads = backward(net, tape, g)
    if corrupt is not None:
        corrupt(grads)

    def probe() -> float:
        return float(np.sum(g * forward(net, x)[0]))

    worst = 0.0
    x = x.copy()
    for p, gp in zip(net.parameters() + [x], grads.parameters() + [grads.input]):
        flat, gflat = p.reshape(-1), gp.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = probe()
            flat[i] = orig - h
            down = probe()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(gflat[i] - numeric) / max(abs(numeric), floor)
            worst = max(worst, err)
    return worst


def soft_update(target: Network, source: Network, tau: float) -> Network:
    """``target <- tau * source + (1 - tau) * target`` on every parameter, in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    tp, sp = target.parameters(), source.parameters()
    if len(tp) != len(sp) or any(a.shape != b.shape for a, b in zip(tp, sp)):
        raise ShapeMismatch("target and source architectures differ")
    for t, s in zip(tp, sp):
        if tau == 1.0:
            t[...] = s
        else:
            # same rule written as t += tau * (s - t), which leaves equal parameters untouched
            t += tau * (s - t)
    return target
