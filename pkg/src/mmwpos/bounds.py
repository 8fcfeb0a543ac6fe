"""Fisher information, AoD Cramér-Rao bound and position error bound."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .arraymodel import ArrayModel
from .channel import GainModel
from .scenario import Scenario, aod_from_position, aod_gradient

# relative threshold on the nuisance-projected curvature
UNIDENTIFIABLE_RTOL = 1e-12


class BoundError(ValueError):
    pass


class UnidentifiableError(BoundError):
    """The AoD cannot be separated from the unknown channel gain."""


class SingularFisherError(BoundError):
    pass


@dataclass(frozen=True)
class AodFisher:
    fim: np.ndarray
    theta: float
    snr_db: Optional[float] = None


@dataclass(frozen=True)
class PositionFisher:
    fim: np.ndarray


def _responses(F, theta, array: ArrayModel, s):
    b = array.steering(theta) @ F
    db = array.steering_derivative(theta) @ F
    if s is not None:
        b = b * s
        db = db * s
    return b, db


def aod_fim(F: np.ndarray, theta: float, alpha: complex, sigma2: float, array: ArrayModel,
            s: Optional[np.ndarray] = None, snr_db: Optional[float] = None) -> AodFisher:
    """3x3 FIM over (theta, Re alpha, Im alpha) for complex Gaussian noise."""
    b, db = _responses(F, theta, array, s)
    if not np.any(b) and not np.any(db):
        raise UnidentifiableError("precoder gives zero response and zero derivative")
    D = np.stack([alpha * db, b, 1j * b], axis=1)
    fim = (2.0 / sigma2) * np.real(D.conj().T @ D)
    return AodFisher(0.5 * (fim + fim.T), float(theta), snr_db)


def _projected_curvature(b, db):
    """``||db||^2 - |b^H db|^2 / ||b||^2`` along the last axis."""
    bb = np.sum(np.abs(b) ** 2, axis=-1)
    dd = np.sum(np.abs(db) ** 2, axis=-1)
    cross = np.sum(b.conj() * db, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = np.where(bb > 0, np.abs(cross) ** 2 / bb, np.inf)
    return dd - proj, dd


def aod_crb(F, theta, alpha, sigma2, array: ArrayModel, s=None) -> float:
    """AoD CRB (rad^2) by inverting the 3x3 Fisher matrix."""
    info = aod_fim(F, theta, alpha, sigma2, array, s)
    curv, dd = _projected_curvature(*_responses(F, theta, array, s))
    if not curv > UNIDENTIFIABLE_RTOL * dd:
        raise UnidentifiableError(f"AoD not identifiable at {np.degrees(theta):.3f} deg")
    return float(np.linalg.inv(info.fim)[0, 0])


def aod_crb_closed_form(F, theta, alpha, sigma2, array: ArrayModel, s=None):
    """Gain-eliminated closed form; vectorised over ``theta``."""
    curv, dd = _projected_curvature(*_responses(F, np.asarray(theta, dtype=float), array, s))
    if np.any(~(curv > UNIDENTIFIABLE_RTOL * dd)):
        raise UnidentifiableError("AoD not identifiable for this precoder")
    out = sigma2 / (2 * np.abs(alpha) ** 2) / curv
    return out if np.ndim(out) else float(out)


def position_fim(scenario: Scenario, precoders: Sequence[np.ndarray], p, gains: Sequence[GainModel],
                 arrays: Sequence[ArrayModel], s=None, strict: bool = True) -> PositionFisher:
    """Position FIM from per-BS AoD information chained through the bearing
    gradients. ``arrays`` are the true (possibly impaired) arrays."""
    n = len(precoders)
    if not (n == len(gains) == len(arrays)) or n > scenario.n_bs:
        raise BoundError("every per-BS list needs one entry per base station")
    p = np.asarray(p, dtype=float)
    J = np.zeros((2, 2))
    for i in range(n):
        q, psi = scenario.bs_positions[i], scenario.bs_orientations[i]
        theta = aod_from_position(p, q, psi)
        crb = aod_crb_closed_form(precoders[i], theta, gains[i].alpha, gains[i].noise_var, arrays[i], s)
        g = aod_gradient(p, q)
        J += np.outer(g, g) / crb
    pf = PositionFisher(J)
    if strict:
        _check_invertible(J)
    return pf


def _check_invertible(J):
    w = np.linalg.eigvalsh(J)
    if w[0] <= 1e-12 * max(w[-1], np.finfo(float).tiny):
        raise SingularFisherError("position FIM is singular; need two non-parallel bearings")


def peb(pf: PositionFisher) -> float:
    """Position error bound ``sqrt(trace(FIM^-1))`` in metres."""
    _check_invertible(pf.fim)
    return float(np.sqrt(np.trace(np.linalg.inv(pf.fim))))
