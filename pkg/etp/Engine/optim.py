from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from etp.Utils.errors import InputError, TrainingError
from logs import logger


@dataclass
class OptimizerState:
    learning_rate: float
    momentum_coeff: float = 0.9
    decay_factor: float = 0.1
    decay_every: int = 5000
    # decay stops once the rate has fallen below this value
    min_learning_rate: Optional[float] = None
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.decay_every < 1:
            raise InputError(f"decay_every must be >= 1, got {self.decay_every}")

    def effective_lr(self, iteration: int) -> float:
        steps = iteration // self.decay_every
        lr = self.learning_rate
        for _ in range(steps):
            if self.min_learning_rate is not None and lr < self.min_learning_rate:
                break
            lr *= self.decay_factor
        return lr


def sgd_step(params, opt: OptimizerState, iteration: int) -> float:
    """One momentum step ``v = m v - lr g; w = w + v``; gradients are zeroed after."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            logger.error(f"non-finite gradient in parameter {p.name} at iteration {iteration}")
            raise TrainingError(f"non-finite gradient in parameter {p.name}")
    lr = opt.effective_lr(iteration)
    for p in params:
        v = opt.velocity.get(p.name)
        if v is None or v.shape != p.value.shape:
            v = np.zeros_like(p.value)
        v = opt.momentum_coeff * v - lr * p.grad
        opt.velocity[p.name] = v
        p.value = p.value + v
        p.zero_grad()
    return lr
