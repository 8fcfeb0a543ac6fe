"""Model-based benchmark: hybrid directional/derivative codebook with
CRB-driven power allocation, grid+golden-section ML AoD estimation and
weighted-bearing ML positioning."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .arraymodel import ArrayModel
from .bounds import aod_crb_closed_form
from .channel import Observation, noise_variance
from .scenario import AngularSector, Scenario, aod_gradient, bearing, wrap_angle

log = logging.getLogger(__name__)

GOLDEN = (np.sqrt(5.0) - 1) / 2


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PowerAllocation:
    rho: np.ndarray
    worst_crb: float
    converged: bool = True


@dataclass(frozen=True)
class AodEstimate:
    theta_hat: float
    variance: float
    bs_index: int = 0


@dataclass(frozen=True)
class PositionEstimate:
    position: np.ndarray
    converged: bool
    objective: float


@dataclass(frozen=True)
class GridConfig:
    points: int = 2000
    tol: float = 1e-6
    pos_points: int = 200
    gn_iters: int = 50
    gn_tol: float = 1e-9


def heuristic_codebook(u: AngularSector, T: int, array: ArrayModel) -> np.ndarray:
    """``T/2`` beams on an even grid over the sector followed by their angle
    derivatives.

    Columns are conjugated steering vectors: with the ``F^T a`` transmit
    model, ``conj(a(theta_g))`` is the beam that points at ``theta_g``.
    """
    if T % 2:
        raise ValueError("the hybrid codebook needs an even number of transmissions")
    grid = u.grid(T // 2)
    beams = np.conj(array.steering(grid)).T
    derivs = np.conj(array.steering_derivative(grid)).T
    return np.hstack([beams, derivs])


def project_simplex(v: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = total}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, v.size + 1)
    k = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[k] / (k + 1)
    return np.maximum(v - tau, 0.0)


class _WorstCaseCrb:
    """Worst-case (over an angle grid) gain-eliminated AoD information of the
    precoder ``G diag(sqrt(p))`` with unit-norm columns ``G``."""

    def __init__(self, G, array, thetas):
        A = array.steering(thetas)
        dA = array.steering_derivative(thetas)
        self.b = A @ G  # (grid, T)
        self.db = dA @ G
        self.b2 = np.abs(self.b) ** 2
        self.d2 = np.abs(self.db) ** 2
        self.x = self.b.conj() * self.db

    def info(self, p):
        bb = self.b2 @ p
        dd = self.d2 @ p
        c = self.x @ p
        return dd - np.abs(c) ** 2 / bb, bb, c

    def value_and_subgradient(self, p):
        """``-log(min_g info_g)`` and a subgradient at the active angle."""
        s, bb, c = self.info(p)
        g = int(np.argmin(s))
        grad_s = (self.d2[g] - 2 * np.real(np.conj(c[g]) * self.x[g]) / bb[g]
                  + np.abs(c[g]) ** 2 * self.b2[g] / bb[g] ** 2)
        return -np.log(s[g]), -grad_s / s[g]


def optimize_power_allocation(F_heur: np.ndarray, u: AngularSector, snr_db: float, array: ArrayModel,
                              grid_size: int = 10, iters: int = 500, restarts: int = 5,
                              rng: Optional[np.random.Generator] = None, step: float = 0.1):
    """Min-max CRB power allocation over the codebook columns.

    Projected subgradient descent on the power simplex (worst grid angle
    active), restarted from the uniform allocation and ``restarts-1``
    Dirichlet draws. Returns ``(PowerAllocation, F_b)`` with ``F_b``
    Frobenius-normalised.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    T = F_heur.shape[1]
    w = np.sum(np.abs(F_heur) ** 2, axis=0)
    G = F_heur / np.sqrt(w)
    obj = _WorstCaseCrb(G, array, u.grid(grid_size))

    best_f, best_p, history = np.inf, None, []
    for r in range(restarts):
        p = np.full(T, 1.0 / T) if r == 0 else rng.dirichlet(np.ones(T))
        run_best = np.inf
        for k in range(iters):
            f, g = obj.value_and_subgradient(p)
            if f < run_best:
                run_best = f
                if f < best_f:
                    best_f, best_p = f, p.copy()
            history.append(best_f)
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            p = project_simplex(p - step / np.sqrt(k + 1) * g / gn)
    # settled = best log-objective (log CRB) moved < 5e-3 over the last tenth
    tail = history[-max(1, len(history) // 10):]
    converged = bool(abs(tail[0] - tail[-1]) < 5e-3)
    if not converged:
        log.warning("power allocation did not settle; returning best iterate")

    rho = best_p / w
    rho *= T / rho.sum()
    F_b = F_heur * np.sqrt(rho)
    F_b = F_b / np.linalg.norm(F_b)
    worst = noise_variance(snr_db) / 2 * np.exp(best_f)
    return PowerAllocation(rho, float(worst), converged), F_b


def worst_case_crb(F: np.ndarray, u: AngularSector, snr_db: float, array: ArrayModel, grid_size: int = 10) -> float:
    crb = aod_crb_closed_form(F, u.grid(grid_size), 1.0, noise_variance(snr_db), array)
    return float(np.max(crb))


def benchmark_precoder(u: AngularSector, T: int, snr_db: float, array: ArrayModel, rng=None, **kw) -> np.ndarray:
    """Codebook plus power allocation, Frobenius-normalised."""
    return optimize_power_allocation(heuristic_codebook(u, T, array), u, snr_db, array, rng=rng, **kw)[1]


# -- ML AoD ------------------------------------------------------------------

def _ml_metric(Y, C):
    """``|y^H c|^2 / ||c||^2`` for every (trial, candidate) pair."""
    num = np.abs(Y.conj() @ C.T) ** 2
    return num / np.sum(np.abs(C) ** 2, axis=-1)


def ml_aod_estimate_batch(Y: np.ndarray, F: np.ndarray, u: AngularSector, array: ArrayModel,
                          grid: GridConfig = GridConfig(), s: Optional[np.ndarray] = None) -> np.ndarray:
    """ML AoD for each row of ``Y`` (n, T): coarse grid then golden section."""
    Y = np.atleast_2d(Y)
    s = np.ones(F.shape[1]) if s is None else s

    def candidates(theta):
        return (array.steering(theta) @ F) * s

    thetas = u.grid(grid.points)
    C = candidates(thetas)
    if not np.any(C):
        raise EstimationError("precoder response vanishes over the whole sector")
    k = np.argmax(_ml_metric(Y, C), axis=1)
    lo = thetas[np.maximum(k - 1, 0)]
    hi = thetas[np.minimum(k + 1, grid.points - 1)]

    def metric(theta):
        Ct = candidates(theta)  # (n, T)
        num = np.abs(np.sum(Y.conj() * Ct, axis=1)) ** 2
        return num / np.sum(np.abs(Ct) ** 2, axis=1)

    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = metric(x1), metric(x2)
    while np.max(hi - lo) > grid.tol:
        right = f1 < f2  # maximum lies in [x1, hi]
        lo = np.where(right, x1, lo)
        hi = np.where(right, hi, x2)
        nx1 = np.where(right, x2, hi - GOLDEN * (hi - lo))
        nx2 = np.where(right, lo + GOLDEN * (hi - lo), x1)
        nf1 = np.where(right, f2, 0.0)
        nf2 = np.where(right, 0.0, f1)
        new = np.where(right, nx2, nx1)
        fn = metric(new)
        f1 = np.where(right, nf1, fn)
        f2 = np.where(right, fn, nf2)
        x1, x2 = nx1, nx2
    return 0.5 * (lo + hi)


def ml_aod_estimate(obs: Observation, F: np.ndarray, u: AngularSector, array: ArrayModel,
                    grid: GridConfig = GridConfig(), s: Optional[np.ndarray] = None) -> AodEstimate:
    """ML AoD of a single observation. ``array`` is the receiver's assumed
    model; the variance field is the CRB at the estimate under that model."""
    theta = float(ml_aod_estimate_batch(obs.y[None, :], F, u, array, grid, s)[0])
    var = aod_crb_closed_form(F, theta, 1.0, noise_variance(obs.snr_db), array, s)
    return AodEstimate(theta, float(var), obs.bs_index)


# -- ML position ---------------------------------------------------------------

def _region_grid(region, n):
    x0, x1, y0, y1 = region
    X, Yg = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
    return np.column_stack([X.ravel(), Yg.ravel()])


class BearingSolver:
    """Weighted bearing least squares with a cached coarse grid.

    Minimises ``sum_i (theta_i + psi_i - bearing_i(p))^2 / (2 var_i)`` with
    wrapped residuals.
    """

    def __init__(self, scenario: Scenario, region=None, grid: GridConfig = GridConfig()):
        self.scenario = scenario
        self.grid_cfg = grid
        self.points = _region_grid(scenario.prior_region if region is None else region, grid.pos_points)
        self.grid_bearings = np.stack([bearing(self.points, q) for q in scenario.bs_positions], axis=1)

    def _residuals(self, p, target):
        b = np.array([bearing(p, q) for q in self.scenario.bs_positions])
        return wrap_angle(target - b)

    def solve(self, theta_hat, variances) -> PositionEstimate:
        sc = self.scenario
        theta_hat = np.asarray(theta_hat, dtype=float)
        variances = np.asarray(variances, dtype=float)
        if theta_hat.size < 2 or np.any(variances <= 0):
            raise EstimationError("need at least two AoD estimates with positive variance")
        target = theta_hat + sc.bs_orientations[: theta_hat.size]
        wts = 1.0 / variances
        res = wrap_angle(target[None, :] - self.grid_bearings[:, : theta_hat.size])
        cost = 0.5 * np.sum(res**2 * wts, axis=1)
        k = int(np.argmin(cost))
        p0, f0 = self.points[k], float(cost[k])

        p, f = p0.copy(), f0
        sw = np.sqrt(wts)
        converged = False
        for _ in range(self.grid_cfg.gn_iters):
            r = self._residuals(p, target) * sw
            J = np.stack([aod_gradient(p, q) for q in sc.bs_positions[: theta_hat.size]]) * sw[:, None]
            # r = target - bearing, so dr/dp = -J and the GN step is +J^+ r
            try:
                delta = np.linalg.solve(J.T @ J, J.T @ r)
            except np.linalg.LinAlgError:
                break
            t = 1.0
            while t > 1e-6:
                cand = p + t * delta
                fc = 0.5 * float(np.sum(self._residuals(cand, target) ** 2 * wts))
                if fc <= f:
                    break
                t *= 0.5
            else:
                converged = bool(np.linalg.norm(delta) < 1e-6)
                break
            step = t * delta
            p, f = cand, fc
            if np.linalg.norm(step) < self.grid_cfg.gn_tol:
                converged = True
                break
        if not np.isfinite(f) or f > f0:
            return PositionEstimate(p0, False, f0)
        return PositionEstimate(p, converged, f)


def ml_position_estimate(estimates: Sequence[AodEstimate], scenario: Scenario, search_region=None,
                         grid: GridConfig = GridConfig()) -> PositionEstimate:
    """Weighted ML position from per-BS AoD estimates (ordered by BS index)."""
    if len(estimates) < 2:
        raise EstimationError("positioning needs AoD estimates from at least two BSs")
    est = sorted(estimates, key=lambda e: e.bs_index)
    solver = BearingSolver(scenario, search_region, grid)
    return solver.solve([e.theta_hat for e in est], [e.variance for e in est])
