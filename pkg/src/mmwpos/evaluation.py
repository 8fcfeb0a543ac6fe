"""Monte-Carlo RMSE curves for the benchmark and the learned systems, paired
with the CRB/PEB of the precoders actually used on the true arrays."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .arraymodel import ArrayModel
from .baseline import BearingSolver, GridConfig, benchmark_precoder, ml_aod_estimate_batch
from .bounds import aod_crb_closed_form, peb, position_fim
from .channel import GainModel, noise_variance, simulate_batch
from .e2e import AodAutoencoder, PosAutoencoder
from .impairments import ImpairmentSpec
from .scenario import DEG, AngularSector, Scenario

# stream tags for SeedSequence-derived generators
_ARRAY_STREAM = 1
_TRIAL_STREAM = 2


def stream(seed: int, *tags: int) -> np.random.Generator:
    """Independent generator for a (seed, tag...) tuple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


@dataclass(frozen=True)
class EvalSpec:
    """What to evaluate.

    With ``position`` unset the AoD from BS ``bs_index`` is evaluated in
    ``sector``, at ``theta`` if given or uniformly in the sector otherwise.
    With ``position`` set, each BS uses a sector of ``position_sector_width``
    centred on the true AoD. ``draws`` independent impairment draws share
    the trials; explicit ``arrays`` override the impairment spec.
    """

    snr_grid: Tuple[float, ...] = (20.0,)
    trials: int = 2000
    sector: AngularSector = AngularSector.from_degrees(40.0, 60.0)
    theta: Optional[float] = None
    bs_index: int = 0
    position: Optional[Tuple[float, float]] = None
    position_sector_width: float = 30 * DEG
    impairment: ImpairmentSpec = field(default_factory=ImpairmentSpec)
    draws: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1 or self.draws < 1:
            raise ValueError("trials and draws must be positive")
        if self.impairment.random and self.trials < self.draws:
            raise ValueError("need at least one trial per impairment draw")
        if self.theta is not None and not self.sector.contains(self.theta):
            raise ValueError("evaluation angle lies outside the sector")

    @property
    def is_position(self) -> bool:
        return self.position is not None


@dataclass(frozen=True)
class RmsePoint:
    """One SNR point. AoD values are in degrees, positions in metres."""

    snr_db: float
    rmse: float
    stderr: float
    bound: float
    trials: int
    failures: int = 0


class BenchmarkSystem:
    """Codebook + power allocation + ML estimation, all on the ideal array."""

    def __init__(self, scenario: Scenario, grid: GridConfig = GridConfig(), **power_kw):
        self.scenario = scenario
        self.grid = grid
        self.power_kw = power_kw
        self.assumed = ArrayModel.ideal(scenario.n_tx, scenario.wavelength)
        self._cache: Dict[Tuple[float, float], np.ndarray] = {}
        self._solver: Optional[BearingSolver] = None

    def precoder(self, sector: AngularSector, bs_index: int = 0) -> np.ndarray:
        # the worst-case allocation is SNR-free, so one design per sector
        key = (sector.theta_min, sector.theta_max)
        if key not in self._cache:
            self._cache[key] = benchmark_precoder(sector, self.scenario.n_transmissions, 0.0,
                                                  self.assumed, **self.power_kw)
        return self._cache[key]

    def estimate_aod(self, Y, F, sector: AngularSector) -> np.ndarray:
        return ml_aod_estimate_batch(Y, F, sector, self.assumed, self.grid)

    def estimate_position(self, Ys, Fs, sectors, snr_db):
        if self._solver is None:
            self._solver = BearingSolver(self.scenario, None, self.grid)
        s2 = noise_variance(snr_db)
        th = np.column_stack([self.estimate_aod(Y, F, u) for Y, F, u in zip(Ys, Fs, sectors)])
        var = np.column_stack([aod_crb_closed_form(F, th[:, i], 1.0, s2, self.assumed)
                               for i, F in enumerate(Fs)])
        out = np.empty((th.shape[0], 2))
        failures = 0
        for k in range(th.shape[0]):
            est = self._solver.solve(th[k], var[k])
            out[k] = est.position
            failures += not est.converged
        return out, failures


def _rmse_stats(sq: np.ndarray) -> Tuple[float, float]:
    """RMSE and its delta-method standard error from squared errors."""
    rmse = float(np.sqrt(np.mean(sq)))
    if sq.size < 2 or rmse == 0:
        return rmse, 0.0
    return rmse, float(np.std(sq, ddof=1) / np.sqrt(sq.size) / (2 * rmse))


def _split(trials, draws):
    base = np.full(draws, trials // draws)
    base[: trials % draws] += 1
    return base


def _draw_arrays(spec: EvalSpec, scenario: Scenario, arrays) -> List[List[ArrayModel]]:
    if arrays is not None:
        return [list(arrays)]
    rng = stream(spec.seed, _ARRAY_STREAM)
    n = spec.draws if spec.impairment.random else 1
    return [spec.impairment.true_arrays(scenario.n_bs, scenario.n_tx, scenario.wavelength, rng)
            for _ in range(n)]


def position_sectors(scenario: Scenario, p, width: float) -> List[AngularSector]:
    th = scenario.aods(p)
    return [AngularSector(t - width / 2, t + width / 2) for t in th]


def evaluate_rmse(system, spec: EvalSpec, scenario: Scenario,
                  arrays: Optional[Sequence[ArrayModel]] = None) -> List[RmsePoint]:
    """RMSE per SNR point for ``system`` (benchmark or autoencoder)."""
    draws = _draw_arrays(spec, scenario, arrays)
    counts = _split(spec.trials, len(draws))
    if spec.is_position:
        if isinstance(system, AodAutoencoder):
            raise TypeError("an AoD autoencoder cannot be evaluated on positions")
        return [_position_point(system, spec, scenario, draws, counts, snr, k)
                for k, snr in enumerate(spec.snr_grid)]
    if isinstance(system, PosAutoencoder):
        raise TypeError("a positioning autoencoder cannot be evaluated on AoDs")
    return [_aod_point(system, spec, draws, counts, snr, k) for k, snr in enumerate(spec.snr_grid)]


def _aod_point(system, spec: EvalSpec, draws, counts, snr, k) -> RmsePoint:
    u, i = spec.sector, spec.bs_index
    F = system.precoder(u, i)
    s2 = noise_variance(snr)
    sq, crb = [], []
    for d, (arrs, n) in enumerate(zip(draws, counts)):
        rng = stream(spec.seed, _TRIAL_STREAM, k, d)
        th = np.full(n, spec.theta) if spec.theta is not None else rng.uniform(u.theta_min, u.theta_max, n)
        Y = simulate_batch(rng, F, th, snr, arrs[i], n)
        est = system.estimate_aod(Y, F, u) if isinstance(system, BenchmarkSystem) else system.estimate(Y)
        sq.append((est - th) ** 2)
        crb.append(np.atleast_1d(aod_crb_closed_form(F, th, 1.0, s2, arrs[i])))
    rmse, se = _rmse_stats(np.concatenate(sq))
    bound = float(np.sqrt(np.mean(np.concatenate(crb))))
    return RmsePoint(float(snr), rmse / DEG, se / DEG, bound / DEG, int(sum(counts)))


def _position_point(system, spec: EvalSpec, scenario: Scenario, draws, counts, snr, k) -> RmsePoint:
    p = np.asarray(spec.position, dtype=float)
    sectors = position_sectors(scenario, p, spec.position_sector_width)
    th = scenario.aods(p)
    Fs = [system.precoder(u, i) for i, u in enumerate(sectors)]
    gains = [GainModel(snr)] * scenario.n_bs
    sq, pebs, failures = [], [], 0
    for d, (arrs, n) in enumerate(zip(draws, counts)):
        rng = stream(spec.seed, _TRIAL_STREAM, k, d)
        Ys = [simulate_batch(rng, F, th[i], snr, arrs[i], n) for i, F in enumerate(Fs)]
        if isinstance(system, BenchmarkSystem):
            est, nf = system.estimate_position(Ys, Fs, sectors, snr)
            failures += nf
        else:
            est = system.estimate(Ys)
        sq.append(np.sum((est - p) ** 2, axis=1))
        pebs.append(peb(position_fim(scenario, Fs, p, gains, arrs)) ** 2)
    rmse, se = _rmse_stats(np.concatenate(sq))
    return RmsePoint(float(snr), rmse, se, float(np.sqrt(np.mean(pebs))), int(sum(counts)), failures)
