"""Parameter updates: plain SGD and Adam, plus global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from .autodiff import GradError, Tensor


def ensure_grads(params: list[Tensor]) -> None:
    """Zero-fill gradients of parameters the loss never touched.

    A parameter outside the differentiated graph (an ablated branch, or the
    matching network in a one-question game) has gradient exactly zero;
    materializing that lets the optimizers keep their missing-grad error for
    genuine misuse.
    """
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def clip_global_norm(params: list[Tensor], max_norm: float) -> float:
    """Rescale all gradients in place so their joint L2 norm is <= max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class Sgd:
    """param -= lr * grad; gradients are cleared after the step."""

    kind = "sgd"

    def __init__(self, params: list[Tensor], lr: float):
        self.params = list(params)
        self.lr = lr
        self.step_count = 0

    def step(self) -> None:
        self.step_count += 1
        for p in self.params:
            if p.grad is None:
                raise GradError("optimizer step with missing gradient")
            p.data -= self.lr * p.grad
            p.grad = None


class Adam:
    """Adam with bias correction; moments allocated per parameter."""

    kind = "adam"

    def __init__(
        self,
        params: list[Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                raise GradError("optimizer step with missing gradient")
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.grad = None
