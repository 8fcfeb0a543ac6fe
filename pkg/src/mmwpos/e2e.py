"""End-to-end autoencoders trained through a differentiable channel.

Per-BS beamformer networks feed a shared AoD or position decoder."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .arraymodel import ArrayModel
from .channel import noise_variance
from .impairments import ImpairmentSpec
from .neural import (
    AdamState,
    Mlp,
    MlpSpec,
    PlateauState,
    Tensor,
    TrainingAborted,
    adam_step,
    ccontract,
    cmul,
    concat,
    div,
    lr_schedule_step,
    mean,
    mul,
    reshape,
    scale,
    sqrt,
    sub,
    sum_axes,
    sum_of_squares,
    take,
)
from .neural.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .scenario import (
    DEG,
    POSITION_HALF_WIDTH,
    AngularSector,
    Scenario,
    sample_aod_batch,
    sample_position_batch,
    sector_parameterization,
)

log = logging.getLogger(__name__)

NORM_EPS = 1e-12
ANGLE_SCALE = np.pi / 2


def beamformer_spec(n_tx: int, T: int, hidden: int) -> MlpSpec:
    return MlpSpec.build(3, [hidden] * 6, 2 * n_tx * T, "linear")


def aod_decoder_spec(T: int, hidden: int) -> MlpSpec:
    return MlpSpec.build(2 * T, [hidden] * 4 + [2 * hidden] * 2, 1, "tanh")


def pos_decoder_spec(T: int, n_bs: int, hidden: int) -> MlpSpec:
    return MlpSpec.build(2 * T * n_bs, [hidden] * 4 + [2 * hidden] * 2, 2, "linear")


@dataclass(frozen=True)
class TrainConfig:
    scenario: Scenario
    snr_db: float = 20.0
    batch_size: int = 10000
    iterations: int = 3000
    hidden: int = 256
    seed: int = 0
    impairment: ImpairmentSpec = field(default_factory=ImpairmentSpec)
    width_range: Tuple[float, float] = (10 * DEG, 20 * DEG)
    mean_range: Tuple[float, float] = (-60 * DEG, 60 * DEG)
    position_half_width: float = POSITION_HALF_WIDTH
    lr: float = 1e-3
    min_lr: float = 1e-8
    epoch_length: int = 25
    patience: int = 20

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1 or self.hidden < 1:
            raise ValueError("training sizes must be positive")
        if self.epoch_length < 1 or self.patience < 1:
            raise ValueError("epoch length and patience must be positive")

    @classmethod
    def reduced(cls, scenario: Scenario, **kw) -> "TrainConfig":
        """Desk-scale settings: S=1024, H=128, 1500 iterations."""
        base = dict(batch_size=1024, hidden=128, iterations=1500)
        base.update(kw)
        return cls(scenario, **base)


# -- differentiable pieces --------------------------------------------------------

def _pair(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1)


def beamformer_forward(net: Mlp, xi, n_tx: int, T: int) -> Tensor:
    """Precoders for a batch of sector encodings ``xi`` (S, 3).

    The network output is read as ``N*T`` interleaved (re, im) pairs in
    row-major (antenna, transmission) order; each precoder is divided by
    ``sqrt(||F||_F^2 + 1e-12)``. Returns a (S, N, T, 2) tensor.
    """
    xi = xi if isinstance(xi, Tensor) else Tensor(np.atleast_2d(xi))
    raw = net(xi)
    F = reshape(raw, (raw.shape[0], n_tx, T, 2))
    energy = sum_axes(mul(F, F), axis=(1, 2, 3), keepdims=True)
    return div(F, sqrt(energy + Tensor(NORM_EPS)))


def channel_forward(F: Tensor, steering: np.ndarray, alpha: np.ndarray, noise: np.ndarray,
                    pilots: Optional[np.ndarray] = None) -> Tensor:
    """``alpha * (F^T a) * s + n`` on pair tensors; ``steering`` (S, N)
    complex, ``alpha`` (S,) complex, ``noise`` (S, T) complex."""
    b = ccontract(F, Tensor(_pair(steering)))
    if pilots is not None:
        b = cmul(b, Tensor(_pair(pilots)))
    y = cmul(Tensor(_pair(alpha)[:, None, :]), b)
    return y + Tensor(_pair(noise))


def observation_features(y: Tensor) -> Tensor:
    """(S, T, 2) observation -> (S, 2T) ``[Re y; Im y]``."""
    return concat([take(y, 0, axis=-1), take(y, 1, axis=-1)], axis=1)


def aod_decode(net: Mlp, y) -> Tensor:
    """Angle estimates (S,) in radians from observations (S, T, 2)."""
    y = y if isinstance(y, Tensor) else Tensor(_pair(np.atleast_2d(y)))
    out = net(observation_features(y))
    return scale(reshape(out, (out.shape[0],)), ANGLE_SCALE)


def pos_decode(net: Mlp, ys: Sequence) -> Tensor:
    """Positions (S, 2) in metres from per-BS observations."""
    ys = [y if isinstance(y, Tensor) else Tensor(_pair(np.atleast_2d(y))) for y in ys]
    feats = []
    for y in ys:
        feats += [take(y, 0, axis=-1), take(y, 1, axis=-1)]
    return net(concat(feats, axis=1))


def _draw_channel(rng, shape_s, T, sigma2):
    alpha = np.exp(1j * rng.uniform(0.0, 2 * np.pi, shape_s))
    std = np.sqrt(sigma2 / 2)
    noise = std * (rng.standard_normal((shape_s, T)) + 1j * rng.standard_normal((shape_s, T)))
    return alpha, noise


# -- systems -----------------------------------------------------------------------

@dataclass
class AodAutoencoder:
    beamformers: List[Mlp]
    decoder: Mlp
    n_tx: int
    T: int
    snr_db: float

    KIND = "aod-ae"

    def parameters(self):
        return [p for net in self.beamformers for p in net.params] + self.decoder.params

    def precoder(self, sector: AngularSector, bs_index: int = 0) -> np.ndarray:
        """Complex (N, T) precoder for one sector."""
        xi = sector_parameterization(sector)[None, :]
        F = beamformer_forward(self.beamformers[bs_index], xi, self.n_tx, self.T).value[0]
        return F[..., 0] + 1j * F[..., 1]

    def estimate(self, Y: np.ndarray) -> np.ndarray:
        return aod_decode(self.decoder, Y).value

    def networks(self) -> Dict[str, Mlp]:
        nets = {f"beamformer{i}": n for i, n in enumerate(self.beamformers)}
        nets["aod_decoder"] = self.decoder
        return nets

    def save(self, path):
        save_checkpoint(path, self.KIND, self.snr_db, self.networks())


@dataclass
class PosAutoencoder:
    beamformers: List[Mlp]
    decoder: Mlp
    n_tx: int
    T: int
    snr_db: float
    half_width: float = POSITION_HALF_WIDTH

    KIND = "pos-ae"

    def parameters(self):
        return [p for net in self.beamformers for p in net.params] + self.decoder.params

    def precoder(self, sector: AngularSector, bs_index: int) -> np.ndarray:
        xi = sector_parameterization(sector)[None, :]
        F = beamformer_forward(self.beamformers[bs_index], xi, self.n_tx, self.T).value[0]
        return F[..., 0] + 1j * F[..., 1]

    def estimate(self, Ys: Sequence[np.ndarray]) -> np.ndarray:
        return pos_decode(self.decoder, Ys).value

    def networks(self) -> Dict[str, Mlp]:
        nets = {f"beamformer{i}": n for i, n in enumerate(self.beamformers)}
        nets["pos_decoder"] = self.decoder
        return nets

    def save(self, path):
        save_checkpoint(path, self.KIND, self.snr_db, self.networks())


def load_system(path, n_tx: int, T: int, n_bs: int, hidden: int):
    """Load an autoencoder checkpoint and check its layer plan against the
    expected network structures."""
    kind, snr_db, nets = load_checkpoint(path)
    bfs = [nets.get(f"beamformer{i}") for i in range(n_bs)]
    if kind == AodAutoencoder.KIND:
        dec_role, dec_spec = "aod_decoder", aod_decoder_spec(T, hidden)
    elif kind == PosAutoencoder.KIND:
        dec_role, dec_spec = "pos_decoder", pos_decoder_spec(T, n_bs, hidden)
    else:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    expected = {f"beamformer{i}": beamformer_spec(n_tx, T, hidden) for i in range(n_bs)}
    expected[dec_role] = dec_spec
    if set(nets) != set(expected):
        raise CheckpointError(f"{path}: networks {sorted(nets)} do not match {sorted(expected)}")
    for role, spec in expected.items():
        if nets[role].spec != spec:
            raise CheckpointError(f"{path}: {role} has widths {nets[role].spec.widths}, expected {spec.widths}")
    cls = AodAutoencoder if kind == AodAutoencoder.KIND else PosAutoencoder
    return cls(bfs, nets[dec_role], n_tx, T, snr_db)


# -- training ------------------------------------------------------------------------

@dataclass
class TrainingLog:
    iteration: List[int] = field(default_factory=list)
    loss: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    seconds: float = 0.0

    def record(self, it, loss, lr):
        self.iteration.append(it)
        self.loss.append(loss)
        self.lr.append(lr)

    def rows(self):
        return list(zip(self.iteration, self.loss, self.lr))


def _optimise(system, step_fn, cfg: TrainConfig, rng, norm_probe=None) -> TrainingLog:
    params = system.parameters()
    adam = AdamState(lr=cfg.lr)
    sched = PlateauState(lr=cfg.lr, patience=cfg.patience, min_lr=cfg.min_lr)
    tlog = TrainingLog()
    window = []
    t0 = time.perf_counter()
    for it in range(cfg.iterations):
        loss = step_fn(rng)
        value = float(loss.value)
        if not np.isfinite(value):
            raise TrainingAborted(f"loss became {value!r} at iteration {it} (lr={adam.lr:g})")
        for p in params:
            p.grad = None
        loss.backward()
        adam_step(adam, params)
        tlog.record(it, value, adam.lr)
        window.append(value)
        if len(window) == cfg.epoch_length:
            lr_schedule_step(sched, float(np.mean(window)))
            window.clear()
            adam.lr = sched.lr
            if sched.at_floor:
                log.info("learning rate reached its floor at iteration %d", it)
                break
        if norm_probe is not None and it % 100 == 0:
            norm_probe(it)
    tlog.seconds = time.perf_counter() - t0
    return tlog


def _true_arrays(cfg: TrainConfig, rng, arrays):
    sc = cfg.scenario
    if arrays is None:
        arrays = cfg.impairment.true_arrays(sc.n_bs, sc.n_tx, sc.wavelength, rng)
    if len(arrays) != sc.n_bs:
        raise ValueError("need one true array per base station")
    return list(arrays)


def train_aod_ae(cfg: TrainConfig, rng: np.random.Generator,
                 arrays: Optional[Sequence[ArrayModel]] = None):
    """Jointly train per-BS beamformers and the shared AoD decoder on the
    mean squared angle error (rad^2). Every BS sees its own batch of
    ``batch_size`` cases per iteration. Returns ``(system, log, arrays)``."""
    sc = cfg.scenario
    N, T, I = sc.n_tx, sc.n_transmissions, sc.n_bs
    arrays = _true_arrays(cfg, rng, arrays)
    bfs = [Mlp.init(beamformer_spec(N, T, cfg.hidden), rng) for _ in range(I)]
    dec = Mlp.init(aod_decoder_spec(T, cfg.hidden), rng)
    system = AodAutoencoder(bfs, dec, N, T, cfg.snr_db)
    sigma2 = noise_variance(cfg.snr_db)
    pilots = np.ones(T, dtype=complex)

    def step(rng):
        ys, targets = [], []
        for i in range(I):
            theta, lo, hi = sample_aod_batch(rng, cfg.batch_size, cfg.width_range, cfg.mean_range)
            xi = np.column_stack([lo, hi, (hi - lo) / 2])
            alpha, noise = _draw_channel(rng, cfg.batch_size, T, sigma2)
            F = beamformer_forward(bfs[i], xi, N, T)
            ys.append(channel_forward(F, arrays[i].steering(theta), alpha, noise, pilots))
            targets.append(theta)
        est = aod_decode(dec, concat(ys, axis=0))
        err = sub(est, Tensor(np.concatenate(targets)))
        return scale(sum_of_squares(err), 1.0 / (I * cfg.batch_size))

    tlog = _optimise(system, step, cfg, rng)
    return system, tlog, arrays


def train_pos_ae(cfg: TrainConfig, rng: np.random.Generator,
                 arrays: Optional[Sequence[ArrayModel]] = None):
    """Jointly train all beamformers and the position decoder on the mean
    squared position error (m^2). Returns ``(system, log, arrays)``."""
    sc = cfg.scenario
    N, T, I = sc.n_tx, sc.n_transmissions, sc.n_bs
    arrays = _true_arrays(cfg, rng, arrays)
    bfs = [Mlp.init(beamformer_spec(N, T, cfg.hidden), rng) for _ in range(I)]
    dec = Mlp.init(pos_decoder_spec(T, I, cfg.hidden), rng)
    system = PosAutoencoder(bfs, dec, N, T, cfg.snr_db, cfg.position_half_width)
    sigma2 = noise_variance(cfg.snr_db)
    pilots = np.ones(T, dtype=complex)

    def step(rng):
        p, theta, lo, hi = sample_position_batch(rng, sc, cfg.batch_size, cfg.position_half_width)
        ys = []
        for i in range(I):
            xi = np.column_stack([lo[:, i], hi[:, i], (hi[:, i] - lo[:, i]) / 2])
            alpha, noise = _draw_channel(rng, cfg.batch_size, T, sigma2)
            F = beamformer_forward(bfs[i], xi, N, T)
            ys.append(channel_forward(F, arrays[i].steering(theta[:, i]), alpha, noise, pilots))
        est = pos_decode(dec, ys)
        return scale(sum_of_squares(sub(est, Tensor(p))), 1.0 / cfg.batch_size)

    tlog = _optimise(system, step, cfg, rng)
    return system, tlog, arrays
