"""World geometry and training-scene sampling.

Angles are radians everywhere in this module. The AoD is measured from the
array broadside: a UE straight in front of an un-rotated BS has AoD 0, and
positive angles open towards +x.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HALF_PI = np.pi / 2
DEG = np.pi / 180


class GeometryError(ValueError):
    """Raised for degenerate geometry (coincident points, bad sectors)."""


class ScenarioConfigError(ValueError):
    """Raised when a scenario cannot support the requested sampling."""


def wrap_angle(x):
    """Wrap angles to (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    out = np.pi - np.mod(np.pi - x, 2 * np.pi)
    return out if out.ndim else float(out)


def _default_region(center=(0.5, 5.0), area=10.0):
    half = np.sqrt(area) / 2
    return (center[0] - half, center[0] + half, center[1] - half, center[1] + half)


@dataclass(frozen=True)
class Scenario:
    bs_positions: np.ndarray
    bs_orientations: np.ndarray
    n_tx: int = 32
    n_transmissions: int = 20
    wavelength: float = 10.7e-3
    prior_region: tuple = field(default_factory=_default_region)

    def __post_init__(self):
        q = np.asarray(self.bs_positions, dtype=float).reshape(-1, 2)
        psi = np.asarray(self.bs_orientations, dtype=float).reshape(-1)
        object.__setattr__(self, "bs_positions", q)
        object.__setattr__(self, "bs_orientations", psi)
        object.__setattr__(self, "prior_region", tuple(float(v) for v in self.prior_region))
        if len(q) != len(psi):
            raise GeometryError("need one orientation per BS")
        if len(q) < 2:
            raise GeometryError("positioning needs at least two base stations")
        if np.any(np.abs(psi) > HALF_PI):
            raise GeometryError("BS orientations must lie in [-pi/2, pi/2]")
        if self.n_tx < 2:
            raise GeometryError("n_tx must be >= 2")
        if self.n_transmissions < 2 or self.n_transmissions % 2:
            raise GeometryError("n_transmissions must be even and >= 2")
        if self.wavelength <= 0:
            raise GeometryError("wavelength must be positive")
        x0, x1, y0, y1 = self.prior_region
        if not (x0 < x1 and y0 < y1):
            raise GeometryError("prior region must be a non-empty rectangle [xmin, xmax, ymin, ymax]")

    @property
    def n_bs(self) -> int:
        return len(self.bs_positions)

    def aods(self, p) -> np.ndarray:
        """Local AoD of point(s) ``p`` seen from every BS, shape (..., I)."""
        return np.stack(
            [aod_from_position(p, q, psi) for q, psi in zip(self.bs_positions, self.bs_orientations)],
            axis=-1,
        )


def reference_scenario(**overrides) -> Scenario:
    """Two-BS scenario used throughout the experiments (28 GHz, 32 antennas)."""
    kw = dict(
        bs_positions=[[-5.0, 0.0], [3.0, 0.0]],
        bs_orientations=[0.0, 10 * DEG],
        n_tx=32,
        n_transmissions=20,
        wavelength=10.7e-3,
    )
    kw.update(overrides)
    return Scenario(**kw)


@dataclass(frozen=True)
class AngularSector:
    theta_min: float
    theta_max: float

    def __post_init__(self):
        lo, hi = float(self.theta_min), float(self.theta_max)
        # tolerate rounding at the +-90 deg edges
        eps = 1e-12
        if not (-HALF_PI - eps <= lo < hi <= HALF_PI + eps):
            raise GeometryError(
                f"invalid sector [{np.degrees(lo):.4f}, {np.degrees(hi):.4f}] deg"
            )
        object.__setattr__(self, "theta_min", lo)
        object.__setattr__(self, "theta_max", hi)

    @classmethod
    def from_degrees(cls, lo: float, hi: float) -> "AngularSector":
        return cls(np.radians(lo), np.radians(hi))

    @property
    def width(self) -> float:
        return self.theta_max - self.theta_min

    @property
    def center(self) -> float:
        return 0.5 * (self.theta_min + self.theta_max)

    def contains(self, theta) -> bool:
        return bool(np.all((theta >= self.theta_min) & (theta <= self.theta_max)))

    def grid(self, n: int) -> np.ndarray:
        return np.linspace(self.theta_min, self.theta_max, n)


def sector_parameterization(u: AngularSector) -> np.ndarray:
    """Over-determined sector encoding fed to the beamformer network."""
    return np.array([u.theta_min, u.theta_max, (u.theta_max - u.theta_min) / 2])


def _delta(p, q):
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    r2 = np.sum(d * d, axis=-1)
    if np.any(r2 == 0):
        raise GeometryError("UE and BS positions coincide")
    return d, r2


def bearing(p, q):
    """Global bearing of ``p`` from ``q`` measured from the +y axis."""
    d, _ = _delta(p, q)
    out = np.arctan2(d[..., 0], d[..., 1])
    return out if np.ndim(out) else float(out)


def aod_from_position(p, q, psi: float):
    """AoD from BS at ``q`` (orientation ``psi``) towards ``p``, in (-pi, pi]."""
    return wrap_angle(bearing(p, q) - psi)


def aod_gradient(p, q) -> np.ndarray:
    """Gradient of the AoD with respect to the UE position, rad/m."""
    d, r2 = _delta(p, q)
    return np.stack([d[..., 1], -d[..., 0]], axis=-1) / np.expand_dims(r2, -1)


def sample_aod_batch(rng: np.random.Generator, n: int, width_range, mean_range):
    """Vectorised draw of ``n`` (theta, theta_min, theta_max) training cases."""
    w = rng.uniform(width_range[0], width_range[1], n)
    mean = rng.uniform(mean_range[0], mean_range[1], n)
    mean = np.clip(mean, -HALF_PI + w / 2, HALF_PI - w / 2)
    lo = mean - w / 2
    hi = mean + w / 2
    theta = rng.uniform(lo, hi)
    return theta, lo, hi


def sample_aod_training_case(rng: np.random.Generator, width_range, mean_range):
    """Draw one sector (mean and width uniform) and a true AoD inside it."""
    theta, lo, hi = sample_aod_batch(rng, 1, width_range, mean_range)
    return float(theta[0]), AngularSector(float(lo[0]), float(hi[0]))


POSITION_HALF_WIDTH = 15 * DEG


def check_training_region(scenario: Scenario, half_width: float = POSITION_HALF_WIDTH):
    """Every corner of the prior region must sit in front of every BS, with
    room for a ``2*half_width`` sector around its AoD."""
    x0, x1, y0, y1 = scenario.prior_region
    corners = np.array([[x0, y0], [x0, y1], [x1, y0], [x1, y1]])
    limit = HALF_PI - half_width
    for i, (q, psi) in enumerate(zip(scenario.bs_positions, scenario.bs_orientations)):
        if x0 <= q[0] <= x1 and y0 <= q[1] <= y1:
            raise ScenarioConfigError(f"BS {i} lies inside the training region")
        th = aod_from_position(corners, q, psi)
        if np.any(np.abs(th) > limit):
            raise ScenarioConfigError(
                f"training region leaves the field of view of BS {i} "
                f"(|AoD| up to {np.degrees(np.max(np.abs(th))):.1f} deg)"
            )


def sample_position_batch(rng: np.random.Generator, scenario: Scenario, n: int,
                          half_width: float = POSITION_HALF_WIDTH):
    """Vectorised positioning training draw.

    Returns ``(p, theta, lo, hi)`` with ``p`` of shape (n, 2) and the angle
    arrays of shape (n, I). Each sector is ``2*half_width`` wide and centred
    on ``theta + nu`` with ``nu ~ U(-half_width, half_width)``; the centre is
    clamped so the sector stays inside [-pi/2, pi/2].
    """
    check_training_region(scenario, half_width)
    x0, x1, y0, y1 = scenario.prior_region
    p = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
    theta = scenario.aods(p)
    nu = rng.uniform(-half_width, half_width, theta.shape)
    mid = np.clip(theta + nu, -HALF_PI + half_width, HALF_PI - half_width)
    return p, theta, mid - half_width, mid + half_width


def sample_position_training_case(rng: np.random.Generator, scenario: Scenario,
                                  half_width: float = POSITION_HALF_WIDTH):
    p, _, lo, hi = sample_position_batch(rng, scenario, 1, half_width)
    return p[0], [AngularSector(a, b) for a, b in zip(lo[0], hi[0])]
