"""Received pilot model ``y = alpha * (F^T a(theta)) * s + n``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .arraymodel import ArrayModel


class ChannelError(ValueError):
    pass


def noise_variance(snr_db: float) -> float:
    """Noise variance for a unit-magnitude channel gain."""
    return 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class GainModel:
    """Complex channel gain with unit magnitude and the matching noise level."""

    snr_db: float
    phase: float = 0.0
    magnitude: float = 1.0

    @classmethod
    def draw(cls, rng: np.random.Generator, snr_db: float) -> "GainModel":
        return cls(snr_db, rng.uniform(0.0, 2 * np.pi))

    @property
    def alpha(self) -> complex:
        return self.magnitude * np.exp(1j * self.phase)

    @property
    def noise_var(self) -> float:
        return self.magnitude**2 * noise_variance(self.snr_db)


@dataclass
class Observation:
    y: np.ndarray
    snr_db: float
    bs_index: int = 0


def frobenius_normalize(F: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(F)
    if nrm == 0:
        raise ChannelError("cannot normalise an all-zero precoder")
    return F / nrm


def pilots(T: int) -> np.ndarray:
    return np.ones(T, dtype=complex)


def noiseless_response(F: np.ndarray, a: np.ndarray, s: Optional[np.ndarray] = None) -> np.ndarray:
    """``(F^T a) * s``; ``a`` may carry leading batch axes."""
    F = np.asarray(F)
    a = np.asarray(a)
    if F.ndim != 2 or a.shape[-1] != F.shape[0]:
        raise ChannelError(f"precoder {F.shape} does not match steering vector {a.shape}")
    b = a @ F
    if s is None:
        return b
    s = np.asarray(s)
    if s.shape != (F.shape[1],):
        raise ChannelError(f"pilot vector must have length {F.shape[1]}")
    return b * s


def complex_noise(rng: np.random.Generator, shape, noise_var: float) -> np.ndarray:
    """Circularly-symmetric Gaussian noise, two real draws of variance
    ``noise_var/2`` per entry (real block first)."""
    std = np.sqrt(noise_var / 2)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return std * (re + 1j * im)


def simulate_observation(rng: np.random.Generator, F: np.ndarray, theta: float, gain: GainModel,
                         array: ArrayModel, s: Optional[np.ndarray] = None, bs_index: int = 0) -> Observation:
    """One noisy observation through the true (possibly impaired) array."""
    T = F.shape[1]
    s = pilots(T) if s is None else s
    mu = gain.alpha * noiseless_response(F, array.steering(theta), s)
    n = complex_noise(rng, T, gain.noise_var) if gain.noise_var > 0 else 0.0
    return Observation(mu + n, gain.snr_db, bs_index)


def simulate_batch(rng: np.random.Generator, F: np.ndarray, theta, snr_db: float,
                   array: ArrayModel, n_trials: int, s: Optional[np.ndarray] = None) -> np.ndarray:
    """``n_trials`` independent observations (fresh gain phase and noise).

    ``theta`` is a scalar or an array of ``n_trials`` angles. Returns a
    complex array of shape (n_trials, T).
    """
    T = F.shape[1]
    s = pilots(T) if s is None else s
    th = np.broadcast_to(np.asarray(theta, dtype=float), (n_trials,))
    phase = rng.uniform(0.0, 2 * np.pi, n_trials)
    mu = np.exp(1j * phase)[:, None] * noiseless_response(F, array.steering(th), s)
    return mu + complex_noise(rng, mu.shape, noise_variance(snr_db))


def snr_sweep_grid(start_db: float, stop_db: float, step_db: float) -> list:
    """Inclusive arithmetic SNR grid in dB."""
    if step_db <= 0:
        raise ChannelError("SNR step must be positive")
    if stop_db < start_db:
        raise ChannelError("empty SNR grid")
    n = int(np.floor((stop_db - start_db) / step_db + 1e-9)) + 1
    return [float(start_db + i * step_db) for i in range(n)]


def aggregate_gain(F: np.ndarray, array: ArrayModel, thetas) -> np.ndarray:
    """Beampattern ``||F^T a(theta)||^2`` on a grid of angles."""
    b = noiseless_response(F, array.steering(np.asarray(thetas, dtype=float)))
    return np.sum(np.abs(b) ** 2, axis=-1)
