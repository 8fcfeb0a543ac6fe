"""Adam updates and reduce-on-plateau learning-rate control."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .autodiff import ShapeError, Tensor


class TrainingAborted(RuntimeError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: Sequence[Tensor], grads: Optional[Sequence[np.ndarray]] = None) -> AdamState:
    """Bias-corrected Adam update applied in place to ``params``.

    Missing gradients (``None``) count as zero.
    """
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params):
        raise ShapeError("one gradient per parameter required")
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = 0.0
        elif np.shape(g) != p.shape:
            raise ShapeError(f"gradient {np.shape(g)} does not match parameter {p.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


@dataclass
class PlateauState:
    lr: float = 1e-3
    factor: float = 0.5
    patience: int = 20
    threshold: float = 1e-3
    min_lr: float = 1e-8
    best: float = math.inf
    bad_evals: int = 0

    @property
    def at_floor(self) -> bool:
        return self.lr <= self.min_lr


def lr_schedule_step(state: PlateauState, epoch_loss: float) -> PlateauState:
    """Halve the rate after ``patience`` evaluations without a relative
    improvement of ``threshold`` over the best loss so far."""
    if not math.isfinite(epoch_loss):
        raise TrainingAborted(f"non-finite training loss {epoch_loss!r}")
    if epoch_loss < state.best * (1 - state.threshold):
        state.best = epoch_loss
        state.bad_evals = 0
    else:
        state.bad_evals += 1
        if state.bad_evals >= state.patience:
            state.lr = max(state.lr * state.factor, state.min_lr)
            state.bad_evals = 0
    return state
