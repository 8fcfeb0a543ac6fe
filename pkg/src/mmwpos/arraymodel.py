"""Uniform linear array models: ideal steering, spacing perturbation and
mutual coupling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class ArrayModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CouplingSpec:
    """Coupling coefficients ``[1, c_1, ..., c_M]`` with strictly decaying
    magnitudes below one."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex).reshape(-1)
        object.__setattr__(self, "c", c)
        if c.size == 0 or c[0] != 1:
            raise ArrayModelError("coupling vector must start with 1")
        mags = np.abs(c[1:])
        if np.any(mags <= 0) or np.any(mags >= 1):
            raise ArrayModelError("coupling magnitudes must lie in (0, 1)")
        if np.any(np.diff(mags) >= 0):
            raise ArrayModelError("coupling magnitudes must strictly decrease")
        c.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, CouplingSpec):
            return NotImplemented
        return np.array_equal(self.c, other.c)

    def __hash__(self):
        return hash(self.c.tobytes())

    @property
    def bandwidth(self) -> int:
        return self.c.size - 1


REFERENCE_COUPLING = CouplingSpec(
    np.array([
        1.0,
        0.9 * np.exp(-1j * np.pi / 3),
        0.75 * np.exp(1j * np.pi / 4),
        0.55 * np.exp(-1j * np.pi / 10),
        0.25 * np.exp(-1j * np.pi / 6),
    ])
)


def coupling_matrix(spec: CouplingSpec, n_tx: int) -> np.ndarray:
    """Banded symmetric Toeplitz matrix with ``B[i, j] = c[|i-j|]``."""
    if spec.bandwidth >= n_tx:
        raise ArrayModelError("coupling bandwidth must be smaller than the array size")
    lag = np.abs(np.subtract.outer(np.arange(n_tx), np.arange(n_tx)))
    padded = np.zeros(n_tx, dtype=complex)
    padded[: spec.c.size] = spec.c
    return padded[lag]


def coupling_from_decay(zeta: float, n_tx: int, reference: CouplingSpec = REFERENCE_COUPLING) -> np.ndarray:
    """Coupling matrix with ``|c_k| = exp(zeta*k)``, phases of ``reference``,
    rescaled to the Frobenius norm of the reference matrix."""
    if not zeta < 0:
        raise ArrayModelError("decay parameter zeta must be negative")
    k = np.arange(reference.c.size)
    c = np.exp(zeta * k) * np.exp(1j * np.angle(reference.c))
    lag = np.abs(np.subtract.outer(np.arange(n_tx), np.arange(n_tx)))
    padded = np.zeros(n_tx, dtype=complex)
    padded[: c.size] = c
    # built directly: for very negative zeta the magnitudes underflow and
    # would violate the strict-decay check of CouplingSpec
    B = padded[lag]
    B_ref = coupling_matrix(reference, n_tx)
    return B * (np.linalg.norm(B_ref) / np.linalg.norm(B))


@dataclass(frozen=True)
class ArrayModel:
    element_positions: np.ndarray
    wavelength: float
    coupling: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.element_positions, dtype=float).reshape(-1)
        object.__setattr__(self, "element_positions", x)
        if x.size < 2 or x[0] != 0 or np.any(np.diff(x) <= 0):
            raise ArrayModelError("element positions must start at 0 and strictly increase")
        if self.coupling is not None:
            B = np.asarray(self.coupling, dtype=complex)
            if B.shape != (x.size, x.size):
                raise ArrayModelError("coupling matrix shape does not match the array")
            if not np.array_equal(B, B.T):
                raise ArrayModelError("coupling matrix must be symmetric")
            if not all(np.all(np.diag(B, k) == B[0, k]) for k in range(x.size)):
                raise ArrayModelError("coupling matrix must be Toeplitz")
            B.setflags(write=False)
            object.__setattr__(self, "coupling", B)
        x.setflags(write=False)

    @classmethod
    def ideal(cls, n_tx: int, wavelength: float) -> "ArrayModel":
        return cls(np.arange(n_tx) * (wavelength / 2), wavelength)

    @property
    def n_tx(self) -> int:
        return self.element_positions.size

    @property
    def is_ideal(self) -> bool:
        nominal = np.arange(self.n_tx) * (self.wavelength / 2)
        return self.coupling is None and np.allclose(self.element_positions, nominal, rtol=0, atol=1e-15)

    def with_coupling(self, B: Optional[np.ndarray]) -> "ArrayModel":
        return ArrayModel(self.element_positions, self.wavelength, B)

    def _phase_rate(self):
        return 2 * np.pi * self.element_positions / self.wavelength

    def _couple(self, v):
        if self.coupling is None:
            return v
        return v @ self.coupling.T

    def steering(self, theta) -> np.ndarray:
        """Steering vector(s); a scalar angle gives shape (N,), an array of
        angles gives shape (..., N)."""
        th = np.asarray(theta, dtype=float)
        v = np.exp(1j * np.multiply.outer(np.sin(th), self._phase_rate()))
        return self._couple(v)

    def steering_derivative(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        k = self._phase_rate()
        v = 1j * np.multiply.outer(np.cos(th), k) * np.exp(1j * np.multiply.outer(np.sin(th), k))
        return self._couple(v)


def perturb_spacing(rng: np.random.Generator, n_tx: int, sigma_lambda: float, wavelength: float) -> np.ndarray:
    """Element positions with Gaussian inter-element distance errors.

    Distances are ``lambda/2 + N(0, sigma_lambda^2)``; non-positive draws are
    redrawn so the positions stay strictly increasing.
    """
    if sigma_lambda < 0:
        raise ArrayModelError("sigma_lambda must be non-negative")
    d = wavelength / 2 + sigma_lambda * rng.standard_normal(n_tx - 1)
    bad = d <= 0
    while np.any(bad):
        d[bad] = wavelength / 2 + sigma_lambda * rng.standard_normal(int(bad.sum()))
        bad = d <= 0
    return np.concatenate([[0.0], np.cumsum(d)])


def impaired_array(n_tx: int, wavelength: float, rng: Optional[np.random.Generator] = None,
                   sigma_lambda: float = 0.0, coupling: Optional[np.ndarray] = None) -> ArrayModel:
    """Convenience constructor; coupling multiplies the spacing-perturbed vector."""
    if sigma_lambda > 0:
        if rng is None:
            raise ArrayModelError("a random generator is needed to draw spacing errors")
        x = perturb_spacing(rng, n_tx, sigma_lambda, wavelength)
    else:
        x = np.arange(n_tx) * (wavelength / 2)
    return ArrayModel(x, wavelength, coupling)
