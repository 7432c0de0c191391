"""Mean squared error and the Adam optimiser."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, TrainingError


def mse_loss(pred, target):
    """Mean over all elements of (pred - target)^2 and its gradient w.r.t. pred."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ContractError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


class Adam:
    """Bias-corrected Adam. Moments are created lazily, keyed by parameter name."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place."""
        for name in params:
            g = grads[name]
            if g.shape != params[name].shape:
                raise ContractError(f"gradient for {name} has shape {g.shape}, expected {params[name].shape}")
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in parameter block {name!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)
