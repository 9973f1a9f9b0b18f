from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from milvse.numerics.tensor import Tensor
from milvse.utils.errors import ContractError


@dataclass
class AdamState:
    """First/second moments and step count, keyed by parameter name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    steps: dict[str, int] = field(default_factory=dict)


class ParamStore:
    """Ordered name -> array map of learnable weights plus their ADAM state."""

    def __init__(self, params: Mapping[str, np.ndarray] | None = None):
        self._params: dict[str, np.ndarray] = {}
        self.adam = AdamState()
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._params:
            raise ContractError(f"Duplicate parameter name '{name}'.")
        array = np.array(value, copy=True)
        self._params[name] = array
        self.adam.m[name] = np.zeros_like(array)
        self.adam.v[name] = np.zeros_like(array)
        self.adam.steps[name] = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    @property
    def dtype(self) -> np.dtype:
        dtypes = {p.dtype for p in self._params.values()}
        if len(dtypes) != 1:
            raise ContractError(f"Mixed parameter dtypes: {sorted(map(str, dtypes))}")
        return dtypes.pop()

    def leaves(self, requires_grad: bool = True) -> dict[str, Tensor]:
        """Fresh graph leaves for one forward pass."""
        return {
            name: Tensor(value, requires_grad=requires_grad)
            for name, value in self._params.items()
        }

    def astype(self, dtype) -> ParamStore:
        return ParamStore({n: p.astype(dtype) for n, p in self._params.items()})

    def copy(self) -> ParamStore:
        clone = ParamStore(self._params)
        for name in self._params:
            clone.adam.m[name] = self.adam.m[name].copy()
            clone.adam.v[name] = self.adam.v[name].copy()
            clone.adam.steps[name] = self.adam.steps[name]
        return clone


def adam_step(
    params: ParamStore,
    grads: Mapping[str, np.ndarray],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> ParamStore:
    """One bias-corrected ADAM update, in place."""
    missing = [name for name in params if name not in grads]
    if missing:
        raise ContractError(f"Missing gradients for: {', '.join(missing)}")

    beta1, beta2 = betas
    state = params.adam
    for name in params:
        g = grads[name]
        if g.shape != params[name].shape:
            raise ContractError(
                f"Gradient for '{name}' has shape {g.shape}, expected {params[name].shape}"
            )
        state.steps[name] += 1
        t = state.steps[name]

        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)

        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        params[name][...] -= lr * m_hat / (np.sqrt(v_hat) + eps)

    return params
