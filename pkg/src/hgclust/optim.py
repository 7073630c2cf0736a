"""Adam with bias correction, one optimizer per module group."""

from __future__ import annotations

import numpy as np

from .engine import Tensor
from .errors import NumericsError


class Adam:
    """Standard Adam over a named parameter dict.

    ``step`` applies the bias-corrected update wherever a gradient is
    populated and then clears all gradients. Parameters whose grad is
    None are skipped (their moments do not decay either; this keeps a
    disabled loss term from perturbing unrelated parameters).
    """

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise NumericsError("Adam betas must lie in (0, 1)")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericsError(f"Adam: non-finite gradient for '{name}'")
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            mhat = m / (1.0 - b1 ** t)
            vhat = v / (1.0 - b2 ** t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
        for p in self.params.values():
            p.zero_grad()
