import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmwpos.arraymodel import (
    REFERENCE_COUPLING,
    ArrayModel,
    ArrayModelError,
    CouplingSpec,
    coupling_from_decay,
    coupling_matrix,
    impaired_array,
    perturb_spacing,
)
from mmwpos.impairments import ImpairmentSpec

LAM = 10.7e-3
angles = st.floats(-np.pi / 2, np.pi / 2, allow_nan=False)


def test_ideal_element_one_at_30_degrees():
    a = ArrayModel.ideal(8, LAM).steering(np.pi / 6)
    assert a[1] == pytest.approx(1j, abs=1e-15)
    assert a[0] == 1


@given(angles)
def test_ideal_steering_unit_modulus(theta):
    a = ArrayModel.ideal(16, LAM).steering(theta)
    np.testing.assert_allclose(np.abs(a), 1.0, rtol=1e-14)


def test_steering_derivative_at_broadside():
    da = ArrayModel.ideal(6, LAM).steering_derivative(0.0)
    np.testing.assert_allclose(da, 1j * np.pi * np.arange(6), atol=1e-12)


@pytest.mark.parametrize("theta", [-1.2, -0.3, 0.0, 0.4, 0.87, 1.4])
@pytest.mark.parametrize("coupled", [False, True])
def test_steering_derivative_matches_fd(theta, coupled):
    arr = ArrayModel.ideal(12, LAM)
    if coupled:
        arr = arr.with_coupling(coupling_matrix(REFERENCE_COUPLING, 12))
    h = 1e-6
    fd = (arr.steering(theta + h) - arr.steering(theta - h)) / (2 * h)
    an = arr.steering_derivative(theta)
    assert np.linalg.norm(fd - an) / np.linalg.norm(an) < 1e-6


def test_steering_batches():
    arr = ArrayModel.ideal(5, LAM)
    th = np.array([[0.1, 0.2, 0.3], [-0.4, 0.5, 0.6]])
    out = arr.steering(th)
    assert out.shape == (2, 3, 5)
    np.testing.assert_allclose(out[1, 2], arr.steering(0.6))


def test_reference_coupling_entry():
    B = coupling_matrix(REFERENCE_COUPLING, 32)
    assert B[0, 1] == pytest.approx(0.9 * np.exp(-1j * np.pi / 3), abs=1e-15)


@given(st.integers(5, 40))
def test_coupling_matrix_structure(n):
    B = coupling_matrix(REFERENCE_COUPLING, n)
    np.testing.assert_array_equal(B, B.T)
    np.testing.assert_array_equal(np.diag(B), 1)
    lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    assert np.all(B[lag > 4] == 0)
    for k in range(5):
        assert np.all(np.diag(B, k) == REFERENCE_COUPLING.c[k])


def test_coupling_bandwidth_must_fit():
    with pytest.raises(ArrayModelError):
        coupling_matrix(REFERENCE_COUPLING, 4)


@pytest.mark.parametrize("c", [[0.9, 0.5], [1, 1.2], [1, 0.5, 0.6], [1, 0.0]])
def test_bad_coupling_vectors(c):
    with pytest.raises(ArrayModelError):
        CouplingSpec(c)


def test_decay_ratio_before_normalization():
    B = coupling_from_decay(-1.0, 16)
    # normalization is a common scale, so the lag ratio survives it
    assert abs(B[0, 1]) / abs(B[0, 0]) == pytest.approx(np.exp(-1.0), rel=1e-12)


@pytest.mark.parametrize("zeta", [-0.1, -0.3, -1.0, -3.0, -800.0])
def test_decay_matrix_normalised_to_reference(zeta):
    B = coupling_from_decay(zeta, 32)
    ref = coupling_matrix(REFERENCE_COUPLING, 32)
    assert np.linalg.norm(B) == pytest.approx(np.linalg.norm(ref), rel=1e-12)
    ArrayModel.ideal(32, LAM).with_coupling(B)


def test_decay_requires_negative_zeta():
    with pytest.raises(ArrayModelError):
        coupling_from_decay(0.0, 16)


def test_array_rejects_non_toeplitz():
    B = coupling_matrix(REFERENCE_COUPLING, 8).copy()
    B[2, 2] = 0.5
    with pytest.raises(ArrayModelError):
        ArrayModel.ideal(8, LAM).with_coupling(B)
    with pytest.raises(ArrayModelError):
        ArrayModel.ideal(8, LAM).with_coupling(np.triu(coupling_matrix(REFERENCE_COUPLING, 8)))


def test_array_rejects_bad_positions():
    with pytest.raises(ArrayModelError):
        ArrayModel([0.0, 1.0, 1.0], LAM)
    with pytest.raises(ArrayModelError):
        ArrayModel([0.1, 1.0], LAM)


def test_spacing_std():
    rng = np.random.default_rng(0)
    sigma = LAM / 100
    d = np.concatenate([np.diff(perturb_spacing(rng, 101, sigma, LAM)) for _ in range(1000)])
    assert np.std(d) == pytest.approx(sigma, rel=0.02)
    assert np.mean(d) == pytest.approx(LAM / 2, rel=1e-3)


@given(st.integers(0, 2**32 - 1))
def test_spacing_positions_increase_even_when_huge(seed):
    x = perturb_spacing(np.random.default_rng(seed), 20, LAM, LAM)
    assert x[0] == 0 and np.all(np.diff(x) > 0)


def test_spacing_is_seeded():
    a = perturb_spacing(np.random.default_rng(9), 32, LAM / 100, LAM)
    b = perturb_spacing(np.random.default_rng(9), 32, LAM / 100, LAM)
    np.testing.assert_array_equal(a, b)


def test_impaired_array_combines_both():
    B = coupling_matrix(REFERENCE_COUPLING, 16)
    arr = impaired_array(16, LAM, np.random.default_rng(1), LAM / 100, B)
    assert not arr.is_ideal
    x = arr.element_positions
    v = np.exp(2j * np.pi * x / LAM * np.sin(0.3))
    np.testing.assert_allclose(arr.steering(0.3), B @ v, rtol=1e-13)


def test_impaired_array_needs_rng():
    with pytest.raises(ArrayModelError):
        impaired_array(8, LAM, None, 1e-4)


def test_impairment_spec_builds_arrays():
    ideal = ImpairmentSpec().true_array(16, LAM)
    assert ideal.is_ideal
    mc = ImpairmentSpec("coupling").true_array(16, LAM)
    np.testing.assert_array_equal(mc.coupling, coupling_matrix(REFERENCE_COUPLING, 16))
    dec = ImpairmentSpec("decay", zeta=-0.3).true_array(16, LAM)
    assert dec.coupling is not None
    arrs = ImpairmentSpec("spacing", LAM / 100).true_arrays(2, 16, LAM, np.random.default_rng(0))
    assert not np.array_equal(arrs[0].element_positions, arrs[1].element_positions)
    with pytest.raises(ValueError):
        ImpairmentSpec("spacing", 0.0)
    with pytest.raises(ValueError):
        ImpairmentSpec("decay", zeta=0.2)


def test_specs_are_hashable_values():
    from mmwpos.arraymodel import CouplingSpec
    from mmwpos.impairments import ImpairmentSpec
    same = CouplingSpec(REFERENCE_COUPLING.c.copy())
    assert same == REFERENCE_COUPLING and hash(same) == hash(REFERENCE_COUPLING)
    assert {ImpairmentSpec("coupling"): 1}[ImpairmentSpec("coupling", coupling=same)] == 1
    assert ImpairmentSpec("spacing", 1e-4) != ImpairmentSpec("spacing", 2e-4)
