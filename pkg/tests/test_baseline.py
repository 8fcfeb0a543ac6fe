import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import least_squares

from mmwpos.arraymodel import ArrayModel
from mmwpos.baseline import (
    AodEstimate,
    BearingSolver,
    EstimationError,
    GridConfig,
    benchmark_precoder,
    heuristic_codebook,
    ml_aod_estimate,
    ml_aod_estimate_batch,
    ml_position_estimate,
    optimize_power_allocation,
    project_simplex,
    worst_case_crb,
)
from mmwpos.bounds import aod_crb_closed_form, peb, position_fim
from mmwpos.channel import GainModel, Observation, frobenius_normalize, noise_variance, simulate_batch
from mmwpos.scenario import DEG, AngularSector, bearing

LAM = 10.7e-3
U = AngularSector.from_degrees(40, 60)


def test_codebook_layout(ideal32):
    F = heuristic_codebook(U, 20, ideal32)
    assert F.shape == (32, 20)
    grid = U.grid(10)
    np.testing.assert_allclose(F[:, :10], np.conj(ideal32.steering(grid)).T)
    with pytest.raises(ValueError):
        heuristic_codebook(U, 7, ideal32)


def test_codebook_beams_point_into_sector(ideal32):
    F = heuristic_codebook(U, 20, ideal32)
    for k, th in enumerate(U.grid(10)):
        gains = np.abs(ideal32.steering(np.radians(np.arange(-90, 91))) @ F[:, k])
        assert abs(np.radians(np.arange(-90, 91))[np.argmax(gains)] - th) < 1.5 * DEG


def test_codebook_derivative_columns_fd(ideal32):
    F = heuristic_codebook(U, 20, ideal32)
    h = 1e-6
    for k, th in enumerate(U.grid(10)):
        fd = np.conj(ideal32.steering(th + h) - ideal32.steering(th - h)) / (2 * h)
        assert np.linalg.norm(fd - F[:, 10 + k]) / np.linalg.norm(F[:, 10 + k]) < 1e-6


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
def test_simplex_projection(v):
    p = project_simplex(np.array(v))
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_simplex_projection_is_nearest():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(6)
    p = project_simplex(v)
    for _ in range(200):
        q = rng.dirichlet(np.ones(6))
        assert np.linalg.norm(v - p) <= np.linalg.norm(v - q) + 1e-12


@pytest.mark.parametrize("sector,snr", [((40, 60), 10.0), ((-20, -5), 0.0), ((10, 30), 25.0)])
def test_power_allocation_dominates_uniform(ideal32, sector, snr):
    u = AngularSector.from_degrees(*sector)
    Fh = heuristic_codebook(u, 20, ideal32)
    alloc, Fb = optimize_power_allocation(Fh, u, snr, ideal32)
    uniform = frobenius_normalize(Fh)
    assert worst_case_crb(Fb, u, snr, ideal32) <= worst_case_crb(uniform, u, snr, ideal32)
    assert np.linalg.norm(Fb) == pytest.approx(1.0, abs=1e-12)
    assert alloc.rho.sum() == pytest.approx(20.0)
    assert alloc.worst_crb == pytest.approx(worst_case_crb(Fb, u, snr, ideal32), rel=1e-9)


def test_power_allocation_near_reference(ideal32):
    # reference optimum of the same min-max program, solved by SLSQP on the
    # epigraph form: worst-case sqrt(CRB) = 0.3387 deg at 10 dB
    Fb = benchmark_precoder(U, 20, 10.0, ideal32)
    assert np.sqrt(worst_case_crb(Fb, U, 10.0, ideal32)) / DEG == pytest.approx(0.3387, rel=0.01)


def test_power_allocation_deterministic(ideal32):
    a = benchmark_precoder(U, 20, 10.0, ideal32, rng=np.random.default_rng(3))
    b = benchmark_precoder(U, 20, 10.0, ideal32, rng=np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


@pytest.fixture(scope="module")
def bench32():
    arr = ArrayModel.ideal(32, LAM)
    return arr, benchmark_precoder(U, 20, 10.0, arr)


def test_noiseless_ml_recovers_angle(bench32):
    arr, F = bench32
    for th_deg in (41.0, 50.0, 58.3):
        y = arr.steering(th_deg * DEG) @ F * np.exp(0.4j)
        est = ml_aod_estimate(Observation(y, 30.0), F, U, arr)
        assert abs(est.theta_hat / DEG - th_deg) < 1e-4


def test_ml_variance_is_crb_at_estimate(bench32):
    arr, F = bench32
    y = arr.steering(50 * DEG) @ F
    est = ml_aod_estimate(Observation(y, 15.0), F, U, arr)
    assert est.variance == pytest.approx(aod_crb_closed_form(F, est.theta_hat, 1.0, noise_variance(15), arr))


@given(st.floats(0.01, 100), st.floats(-np.pi, np.pi))
def test_ml_invariant_to_complex_scaling(bench32, mag, phase):
    arr, F = bench32
    rng = np.random.default_rng(0)
    Y = simulate_batch(rng, F, 47 * DEG, 5.0, arr, 4)
    a = ml_aod_estimate_batch(Y, F, U, arr)
    b = ml_aod_estimate_batch(Y * mag * np.exp(1j * phase), F, U, arr)
    np.testing.assert_allclose(a, b, atol=2e-6)


def test_ml_rmse_close_to_crb_at_15db(bench32):
    arr, F = bench32
    rng = np.random.default_rng(21)
    Y = simulate_batch(rng, F, 50 * DEG, 15.0, arr, 2000)
    err = ml_aod_estimate_batch(Y, F, U, arr) - 50 * DEG
    ratio = np.sqrt(np.mean(err**2) / aod_crb_closed_form(F, 50 * DEG, 1.0, noise_variance(15), arr))
    assert 0.8 <= ratio <= 1.2


def test_ml_zero_precoder_fails(ideal32):
    with pytest.raises(EstimationError):
        ml_aod_estimate_batch(np.ones((1, 4)), np.zeros((32, 4)), U, ideal32)


def _estimates(scenario, p, noise=None, var=(1e-6, 1e-6)):
    th = scenario.aods(p)
    if noise is not None:
        th = th + noise
    return [AodEstimate(float(t), v, i) for i, (t, v) in enumerate(zip(th, var))]


def test_position_exact_bearings(scenario):
    p = np.array([0.5, 5.0])
    est = ml_position_estimate(_estimates(scenario, p), scenario)
    assert est.converged
    np.testing.assert_allclose(est.position, p, atol=1e-6)


@given(st.floats(-1.0, 2.0), st.floats(3.5, 6.5))
def test_position_exact_bearings_anywhere(scenario, x, y):
    solver = BearingSolver(scenario)
    p = np.array([x, y])
    np.testing.assert_allclose(solver.solve(scenario.aods(p), [1e-6, 1e-6]).position, p, atol=1e-6)


def test_position_needs_two(scenario):
    with pytest.raises(EstimationError):
        ml_position_estimate(_estimates(scenario, [0.5, 5])[:1], scenario)
    with pytest.raises(EstimationError):
        BearingSolver(scenario).solve([0.1, 0.2], [1e-6, 0.0])


def test_doubling_variances_keeps_minimizer(scenario):
    noise = np.array([0.01, -0.02])
    a = ml_position_estimate(_estimates(scenario, [0.5, 5], noise, (1e-5, 4e-5)), scenario)
    b = ml_position_estimate(_estimates(scenario, [0.5, 5], noise, (2e-5, 8e-5)), scenario)
    np.testing.assert_allclose(a.position, b.position, atol=1e-9)


def test_wrapped_residuals(scenario):
    noise = np.array([0.01, -0.02])
    solver = BearingSolver(scenario)
    th = scenario.aods([0.5, 5.0]) + noise
    a = solver.solve(th, [1e-5, 1e-5])
    b = solver.solve(th + np.array([2 * np.pi, -2 * np.pi]), [1e-5, 1e-5])
    np.testing.assert_allclose(a.position, b.position, atol=1e-9)


def test_equal_weights_match_unweighted_least_squares(scenario):
    noise = np.array([0.015, 0.01])
    target = scenario.aods([0.5, 5.0]) + noise + scenario.bs_orientations
    est = BearingSolver(scenario).solve(target - scenario.bs_orientations, [3e-5, 3e-5])

    def resid(p):
        return [target[i] - bearing(p, q) for i, q in enumerate(scenario.bs_positions)]

    ref = least_squares(resid, [0.4, 5.1], xtol=1e-15, ftol=1e-15, gtol=1e-15).x
    np.testing.assert_allclose(est.position, ref, atol=1e-8)


def test_position_rmse_with_crb_distributed_errors(scenario):
    arr = ArrayModel.ideal(32, LAM)
    p = np.array([0.5, 5.0])
    th = scenario.aods(p)
    sectors = [AngularSector(t - 10 * DEG, t + 10 * DEG) for t in th]
    Fs = [benchmark_precoder(u, 20, 20.0, arr) for u in sectors]
    crb = np.array([aod_crb_closed_form(F, t, 1.0, noise_variance(20), arr) for F, t in zip(Fs, th)])
    bound = peb(position_fim(scenario, Fs, p, [GainModel(20)] * 2, [arr, arr]))
    rng = np.random.default_rng(17)
    solver = BearingSolver(scenario)
    sq = []
    for _ in range(2000):
        est = solver.solve(th + rng.standard_normal(2) * np.sqrt(crb), crb)
        sq.append(np.sum((est.position - p) ** 2))
    assert np.sqrt(np.mean(sq)) == pytest.approx(bound, rel=0.25)


def test_grid_config_defaults():
    g = GridConfig()
    assert (g.points, g.tol, g.pos_points, g.gn_iters, g.gn_tol) == (2000, 1e-6, 200, 50, 1e-9)
