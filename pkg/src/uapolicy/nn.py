"""Minimal fully-connected network with hand-rolled backprop and Adam.

Backs the Q-networks, the builtin attacked classifier, and the
importance regressor. float64 throughout: runs are bitwise reproducible
given a seed, and every layer is checkable against central finite
differences.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class Mlp:
    """Dense layers, rectifier on hidden layers, identity output.

    Weights use uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    """

    def __init__(self, dims: Sequence[int], rng: np.random.Generator | None = None):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        self.dims = [int(d) for d in dims]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            if rng is None:
                w = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            self.weights.append(w)
            self.biases.append(b)

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(np.asarray(x, dtype=np.float64))
        return out

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping pre-activations for backward."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if l == last else np.maximum(z, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray):
        """Gradients of a scalar loss wrt all parameters.

        `grad_out` is dLoss/dOutput for the batch that produced `acts`.
        Returns (weight grads, bias grads) shaped like the parameters.
        """
        grad_out = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        gw = [np.empty_like(w) for w in self.weights]
        gb = [np.empty_like(b) for b in self.biases]
        delta = grad_out
        for l in range(len(self.weights) - 1, -1, -1):
            gw[l] = acts[l].T @ delta
            gb[l] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ self.weights[l].T) * (acts[l] > 0.0)
        return gw, gb

    def copy(self) -> "Mlp":
        net = Mlp(self.dims)
        net.load_arrays([w.copy() for w in self.weights], [b.copy() for b in self.biases])
        return net

    def load_arrays(self, weights: list[np.ndarray], biases: list[np.ndarray]) -> None:
        if [w.shape for w in weights] != [w.shape for w in self.weights]:
            raise ValueError("weight shapes do not match dims")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64).ravel() for b in biases]

    def param_arrays(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def to_lists(self) -> dict:
        """Serializable form: per-layer row-major flattened weights."""
        return {
            "dims": list(self.dims),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_lists(cls, payload: dict) -> "Mlp":
        net = cls(payload["dims"])
        weights = [
            np.array(flat, dtype=np.float64).reshape(fan_in, fan_out)
            for flat, fan_in, fan_out in zip(payload["weights"], net.dims[:-1], net.dims[1:])
        ]
        biases = [np.array(b, dtype=np.float64) for b in payload["biases"]]
        net.load_arrays(weights, biases)
        return net


@dataclass
class Adam:
    """Standard bias-corrected Adam over an Mlp's parameter arrays."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(z)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and its gradient wrt the logits."""
    probs = softmax(logits)
    n = logits.shape[0]
    eps = 1e-12
    loss = -float(np.mean(np.log(probs[np.arange(n), labels] + eps)))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
