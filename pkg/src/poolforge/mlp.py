"""Minimal dense-layer stacks with manual backprop and SGD-momentum updates.

A "stack" is a plain list of DenseLayer; tanh is applied between layers and
the final output stays linear. All math runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)


def init_layers(dims, rng) -> list[DenseLayer]:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init per layer."""
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        bias = rng.uniform(-bound, bound, size=fan_out)
        layers.append(DenseLayer(weights, bias))
    return layers


def embed(layers, x) -> np.ndarray:
    """Forward pass. An empty stack is the identity map."""
    h = np.asarray(x, dtype=np.float64)
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        h = h @ layer.weights.T + layer.bias
        if i < last:
            h = np.tanh(h)
    return h


def forward_cached(layers, x):
    """Forward pass keeping per-layer (input, tanh output) for backprop."""
    h = np.asarray(x, dtype=np.float64)
    caches = []
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        z = h @ layer.weights.T + layer.bias
        act = np.tanh(z) if i < last else None
        caches.append((h, act))
        h = act if act is not None else z
    return h, caches


def backward(layers, caches, grad_out):
    """Backprop dL/d(output) through the stack.

    Returns ([(dW, db) per layer], dL/d(input)).
    """
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        h_in, act = caches[i]
        dz = g if act is None else g * (1.0 - act * act)
        grads[i] = (dz.T @ h_in, dz.sum(axis=0))
        g = dz @ layers[i].weights
    return grads, g


def zero_velocity(layers):
    return [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers]


def sgd_update(layers, grads, velocity, lr, momentum, weight_decay):
    """In-place SGD step: g += wd*p, v = mu*v + g, p -= lr*v."""
    for layer, (gw, gb), (vw, vb) in zip(layers, grads, velocity):
        if weight_decay:
            gw = gw + weight_decay * layer.weights
            gb = gb + weight_decay * layer.bias
        vw *= momentum
        vw += gw
        vb *= momentum
        vb += gb
        layer.weights -= lr * vw
        layer.bias -= lr * vb


def copy_layers(layers) -> list[DenseLayer]:
    return [DenseLayer(l.weights.copy(), l.bias.copy()) for l in layers]


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * epoch / total_epochs))
