"""Fully connected networks built on the autodiff primitives."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .autodiff import ShapeError, Tensor, affine, relu, tanh

ACTIVATIONS = ("linear", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths ``(input, *hidden, output)``; hidden layers use ReLU."""

    widths: Tuple[int, ...]
    output_activation: str = "linear"

    def __post_init__(self):
        w = tuple(int(v) for v in self.widths)
        object.__setattr__(self, "widths", w)
        if len(w) < 2 or min(w) < 1:
            raise ValueError("an MLP needs at least input and output widths >= 1")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"output activation must be one of {ACTIVATIONS}")

    @classmethod
    def build(cls, n_in: int, hidden: Sequence[int], n_out: int, output_activation: str = "linear"):
        return cls((n_in, *hidden, n_out), output_activation)

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1


def init_params(spec: MlpSpec, rng: np.random.Generator) -> List[Tensor]:
    """Glorot-uniform weights and zero biases, as ``[W0, b0, W1, b1, ...]``."""
    params = []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(Tensor(rng.uniform(-lim, lim, (fan_in, fan_out)), requires_grad=True))
        params.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return params


def mlp_forward(spec: MlpSpec, params: Sequence[Tensor], x: Tensor) -> Tensor:
    if x.value.ndim != 2 or x.shape[1] != spec.n_in:
        raise ShapeError(f"network expects input width {spec.n_in}, got {x.shape}")
    if len(params) != 2 * spec.n_layers:
        raise ShapeError("parameter list does not match the layer plan")
    h = x
    for layer in range(spec.n_layers):
        h = affine(h, params[2 * layer], params[2 * layer + 1])
        if layer < spec.n_layers - 1:
            h = relu(h)
    if spec.output_activation == "tanh":
        h = tanh(h)
    return h


@dataclass
class Mlp:
    spec: MlpSpec
    params: List[Tensor] = field(default_factory=list)

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "Mlp":
        return cls(spec, init_params(spec, rng))

    def __call__(self, x) -> Tensor:
        return mlp_forward(self.spec, self.params, x if isinstance(x, Tensor) else Tensor(x))

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def arrays(self) -> List[np.ndarray]:
        return [p.value for p in self.params]

    def copy(self) -> "Mlp":
        return Mlp(self.spec, [Tensor(p.value.copy(), requires_grad=True) for p in self.params])
