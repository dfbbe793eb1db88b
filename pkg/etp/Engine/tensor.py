"""Tensors are float64 numpy arrays; parameters pair a value with its gradient."""
from dataclasses import dataclass, field

import numpy as np

from etp.Utils.errors import ShapeError

DTYPE = np.float64
Tensor = np.ndarray


def as_tensor(data) -> Tensor:
    return np.asarray(data, dtype=DTYPE)


def check_shape(name: str, actual, expected):
    if tuple(actual) != tuple(expected):
        raise ShapeError(f"{name}: expected shape {tuple(expected)}, got {tuple(actual)}")


@dataclass
class Parameter:
    name: str
    value: Tensor
    grad: Tensor = field(default=None)

    def __post_init__(self):
        self.value = as_tensor(self.value)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        check_shape(self.name, self.grad.shape, self.value.shape)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


class Module:
    """Anything that owns named parameters.

    Sub-classes list their parameters in ``self._params`` and child
    modules in ``self._children``; names are prefixed by the owner.
    """

    def __init__(self, name: str):
        self.name = name
        self._params = []
        self._children = []

    def add_param(self, key: str, value) -> Parameter:
        param = Parameter(f"{self.name}.{key}", value)
        self._params.append(param)
        return param

    def add_child(self, child):
        self._children.append(child)
        return child

    def parameters(self) -> list:
        params = list(self._params)
        for child in self._children:
            params.extend(child.parameters())
        return params

    def named_parameters(self) -> dict:
        return {p.name: p for p in self.parameters()}

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict):
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        if missing:
            raise ShapeError(f"state is missing parameters: {missing}")
        for name, param in params.items():
            check_shape(name, np.shape(state[name]), param.shape)
            param.value = as_tensor(state[name]).copy()
