"""Feedforward networks used as regression targets.

A net is a chain of weight matrices (W1, ..., Wt) with no biases; the
activation is applied elementwise between layers (never after the last):

    f_1(x) = W1 x,    f_i(x) = Wi sigma(f_{i-1}(x)),    f = f_t.

Norms and the Lipschitz certificate sqrt(k) * ||W1||_{2,inf} * (W L)^{t-1}
(with W the summed entrywise l1 norm of the layers above the first) are
computed exactly from the weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ContractViolation, DimensionMismatch


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def relu(z):
    return np.maximum(np.asarray(z, dtype=float), 0.0)


@dataclass(frozen=True)
class Activation:
    """Activation tag: sigmoid, relu, or a custom L-Lipschitz function."""

    kind: str
    L: float = None
    fn: Optional[Callable] = None

    def __post_init__(self):
        if self.kind == "sigmoid":
            object.__setattr__(self, "L", 0.25 if self.L is None else float(self.L))
            object.__setattr__(self, "fn", sigmoid)
        elif self.kind == "relu":
            object.__setattr__(self, "L", 1.0 if self.L is None else float(self.L))
            object.__setattr__(self, "fn", relu)
        elif self.kind == "custom":
            if self.L is None or self.fn is None:
                raise ContractViolation("custom activation needs both L and fn")
        else:
            raise ContractViolation(f"unknown activation kind {self.kind!r}")
        sigma0 = float(np.asarray(self.fn(0.0)))
        if not sigma0 <= 1.0:
            raise ContractViolation(f"activation must satisfy sigma(0) <= 1, got {sigma0}")


SIGMOID = Activation("sigmoid")
RELU = Activation("relu")


@dataclass(frozen=True)
class NetNorms:
    w1_two_inf: float      # ||W1||_{2,inf}: max row 2-norm of the first layer
    w_sum_l1: float        # sum over layers i >= 2 of the entrywise l1 norm
    lipschitz_cert: float  # sqrt(k) * w1_two_inf * (w_sum_l1 * L)^(t-1)

    def to_json(self) -> dict:
        return {"w1_two_inf": self.w1_two_inf, "w_sum_l1": self.w_sum_l1,
                "lipschitz_cert": self.lipschitz_cert}


class NeuralNet:
    """Immutable layered net; ``weights[i]`` maps layer i activations up."""

    __slots__ = ("weights", "activation")

    def __init__(self, weights: Sequence[np.ndarray], activation: Activation = SIGMOID):
        ws = []
        for W in weights:
            W = np.array(W, dtype=float)
            if W.ndim != 2 or not np.all(np.isfinite(W)):
                raise ContractViolation("weights must be finite 2-d matrices")
            W.setflags(write=False)
            ws.append(W)
        if not ws:
            raise ContractViolation("a net needs at least one layer")
        for a, b in zip(ws, ws[1:]):
            if b.shape[1] != a.shape[0]:
                raise DimensionMismatch(
                    f"layer shapes do not chain: {a.shape} then {b.shape}")
        if ws[-1].shape[0] != 1:
            raise ContractViolation("output layer must have a single unit")
        self.weights = tuple(ws)
        self.activation = activation

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def first_layer_width(self) -> int:
        return self.weights[0].shape[0]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return net_eval_batch(self, X)

    def to_json(self) -> dict:
        if self.activation.kind == "custom":
            raise ContractViolation("custom activations are not serializable")
        return {"weights": [W.tolist() for W in self.weights],
                "activation": self.activation.kind}

    @staticmethod
    def from_json(obj) -> "NeuralNet":
        if isinstance(obj, str):
            obj = json.loads(obj)
        act = {"sigmoid": SIGMOID, "relu": RELU}[obj["activation"]]
        return NeuralNet([np.array(W, dtype=float) for W in obj["weights"]], act)


def net_eval(net: NeuralNet, x) -> float:
    """Evaluate the net on a single input vector."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != net.input_dim:
        raise DimensionMismatch(f"input dim {x.shape[0]} != net dim {net.input_dim}")
    return float(net_eval_batch(net, x[None, :])[0])


def net_eval_batch(net: NeuralNet, X: np.ndarray) -> np.ndarray:
    """Evaluate the net on the rows of an (n, d) array."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionMismatch(f"expected (n, {net.input_dim}) inputs, got {X.shape}")
    F = X @ net.weights[0].T
    for W in net.weights[1:]:
        F = net.activation.fn(F) @ W.T
    return F[:, 0]


def net_norms(net: NeuralNet) -> NetNorms:
    """Exact weight norms and the resulting Lipschitz certificate."""
    W1 = net.weights[0]
    w1_two_inf = float(np.sqrt(np.max(np.sum(W1 * W1, axis=1))))
    w_sum_l1 = float(sum(np.sum(np.abs(W)) for W in net.weights[1:]))
    k = net.first_layer_width
    cert = np.sqrt(k) * w1_two_inf * (w_sum_l1 * net.activation.L) ** (net.depth - 1)
    return NetNorms(w1_two_inf=w1_two_inf, w_sum_l1=w_sum_l1, lipschitz_cert=float(cert))


def net_sup_estimate(net: NeuralNet, R: float) -> float:
    """Upper bound on sup |f| over the radius-R ball:

    |f(x)| <= |f(0)| + lipschitz_cert * R, with f(0) evaluated exactly.
    """
    norms = net_norms(net)
    f0 = abs(float(net_eval_batch(net, np.zeros((1, net.input_dim)))[0]))
    return norms.lipschitz_cert * R + f0


def random_net(d: int, layer_sizes: Sequence[int], activation: Activation,
               weight_scale: float, rng_seed) -> NeuralNet:
    """Net with i.i.d. uniform[-weight_scale, weight_scale] entries."""
    if not layer_sizes or layer_sizes[-1] != 1:
        raise ContractViolation("layer_sizes must end in 1")
    rng = np.random.default_rng(rng_seed)
    sizes = [d] + list(layer_sizes)
    weights = [rng.uniform(-weight_scale, weight_scale, size=(sizes[i + 1], sizes[i]))
               for i in range(len(layer_sizes))]
    return NeuralNet(weights, activation)
