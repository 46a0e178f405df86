"""Bộ tối ưu cập nhật tại chỗ trên Parameter.value"""

import logging
from typing import Iterable, List, Tuple

import numpy as np

from autograd.tape import Parameter

logger = logging.getLogger(__name__)


class Optimizer:
    def __init__(self, params: Iterable[Parameter], lr: float):
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.steps = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params: Iterable[Parameter], lr: float, momentum: float = 0.0):
        super().__init__(params, lr)
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.steps += 1
        for p, v in zip(self.params, self._velocity):
            if not p.trainable:
                continue
            v *= self.momentum
            v += p.grad
            p.value -= (self.lr * v).astype(p.value.dtype)


class Adam(Optimizer):
    def __init__(self, params: Iterable[Parameter], lr: float,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.betas = betas
        self.eps = eps
        self._m = [np.zeros_like(p.value, dtype=np.float64) for p in self.params]
        self._v = [np.zeros_like(p.value, dtype=np.float64) for p in self.params]

    def step(self):
        self.steps += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.steps
        c2 = 1.0 - b2 ** self.steps
        for p, m, v in zip(self.params, self._m, self._v):
            if not p.trainable:
                continue
            g = p.grad.astype(np.float64)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.value -= update.astype(p.value.dtype)


def adam_step(params: Iterable[Parameter], lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
              state: Adam = None) -> Adam:
    """Một bước Adam; truyền lại `state` để giữ moment giữa các bước"""
    optimizer = state or Adam(params, lr, betas, eps)
    optimizer.step()
    return optimizer


def make_optimizer(name: str, params: Iterable[Parameter], lr: float) -> Optimizer:
    name = name.lower()
    if name == 'adam':
        return Adam(params, lr)
    if name == 'sgd':
        return SGD(params, lr)
    raise ValueError(f"optimizer không hỗ trợ: {name}")
