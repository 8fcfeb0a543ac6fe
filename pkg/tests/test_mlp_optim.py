import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmwpos.e2e import aod_decoder_spec, beamformer_spec, pos_decoder_spec
from mmwpos.neural.mlp import init_params, mlp_forward
from mmwpos.neural import (
    AdamState,
    Mlp,
    MlpSpec,
    PlateauState,
    ShapeError,
    Tensor,
    TrainingAborted,
    adam_step,
    lr_schedule_step,
    mul,
    sum_axes,
)


def test_zero_network_outputs_zero():
    spec = MlpSpec.build(4, [5, 5], 3)
    params = [Tensor(np.zeros_like(p.value)) for p in init_params(spec, np.random.default_rng(0))]
    out = mlp_forward(spec, params, Tensor(np.random.default_rng(1).standard_normal((6, 4))))
    np.testing.assert_array_equal(out.value, 0.0)


def test_tanh_output_range():
    net = Mlp.init(MlpSpec.build(3, [8], 4, "tanh"), np.random.default_rng(0))
    out = net(np.random.default_rng(1).standard_normal((50, 3))).value
    assert np.all(np.abs(out) < 1)
    # large inputs may round to +-1 but never beyond
    assert np.all(np.abs(net(np.full((2, 3), 1e6)).value) <= 1)


def test_glorot_limits():
    spec = MlpSpec.build(30, [50], 20)
    params = init_params(spec, np.random.default_rng(0))
    assert np.abs(params[0].value).max() <= np.sqrt(6 / 80)
    assert np.abs(params[2].value).max() <= np.sqrt(6 / 70)
    np.testing.assert_array_equal(params[1].value, 0)
    assert params[0].shape == (30, 50)


def test_width_mismatch():
    net = Mlp.init(MlpSpec.build(3, [4], 2), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        net(np.ones((2, 5)))
    with pytest.raises(ValueError):
        MlpSpec((3,))
    with pytest.raises(ValueError):
        MlpSpec((3, 2), "relu")


def _fd_network(net, x, rng, h=1e-6, per_param=4):
    w = rng.standard_normal((x.shape[0], net.spec.n_out))
    net.zero_grad()
    sum_axes(mul(net(x), Tensor(w))).backward()
    worst = 0.0
    for p in net.params:
        flat = p.value.reshape(-1)
        grad = p.grad.reshape(-1)
        for i in rng.choice(flat.size, min(per_param, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + h
            fp = np.sum(w * net(x).value)
            flat[i] = old - h
            fm = np.sum(w * net(x).value)
            flat[i] = old
            num = (fp - fm) / (2 * h)
            worst = max(worst, abs(num - grad[i]) / max(abs(num), abs(grad[i]), 1e-4))
    return worst


@pytest.mark.parametrize("spec", [
    beamformer_spec(4, 2, 6),
    aod_decoder_spec(4, 5),
    pos_decoder_spec(4, 2, 5),
])
def test_full_network_gradients(spec):
    rng = np.random.default_rng(0)
    net = Mlp.init(spec, rng)
    # random biases keep every ReLU off its kink (zero biases in a narrow
    # layer can leave a pre-activation at exactly 0)
    for b in net.params[1::2]:
        b.value[:] = rng.normal(0.0, 0.3, b.shape)
    for _ in range(10):
        x = rng.standard_normal((3, spec.n_in))
        assert _fd_network(net, x, rng) < 1e-5


def test_table_layer_plans():
    assert beamformer_spec(32, 20, 256).widths == (3, 256, 256, 256, 256, 256, 256, 1280)
    assert aod_decoder_spec(20, 256).widths == (40, 256, 256, 256, 256, 512, 512, 1)
    assert aod_decoder_spec(20, 256).output_activation == "tanh"
    assert pos_decoder_spec(20, 2, 256).widths == (80, 256, 256, 256, 256, 512, 512, 2)


def test_adam_first_step():
    p = Tensor(np.array([0.5]), requires_grad=True)
    adam_step(AdamState(lr=1e-3), [p], [np.array([1.0])])
    assert p.value[0] == pytest.approx(0.5 - 1e-3, rel=1e-6)


def test_adam_zero_gradient_is_noop():
    p = Tensor(np.arange(4.0), requires_grad=True)
    st_ = AdamState()
    for _ in range(3):
        adam_step(st_, [p], [np.zeros(4)])
    np.testing.assert_array_equal(p.value, np.arange(4.0))


def test_adam_sign_equivariance():
    p = Tensor(np.zeros(2), requires_grad=True)
    st_ = AdamState()
    for g in (0.3, 1.2, -0.4):
        adam_step(st_, [p], [np.array([g, -g])])
    assert p.value[0] == -p.value[1]


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step(AdamState(), [Tensor(np.zeros(2))], [np.zeros(3)])


def test_plateau_improving_keeps_rate():
    st_ = PlateauState()
    for k in range(100):
        lr_schedule_step(st_, 1.0 / (k + 1))
    assert st_.lr == 1e-3


def test_plateau_halves_after_patience():
    st_ = PlateauState(patience=20)
    for _ in range(20):
        lr_schedule_step(st_, 1.0)
    assert st_.lr == 1e-3
    lr_schedule_step(st_, 1.0)
    assert st_.lr == pytest.approx(5e-4)


@given(st.integers(1, 3000))
def test_plateau_floor(n):
    st_ = PlateauState(patience=1)
    for _ in range(n):
        lr_schedule_step(st_, 1.0)
    assert st_.lr >= 1e-8


def test_plateau_reaches_floor():
    st_ = PlateauState(patience=1)
    for _ in range(200):
        lr_schedule_step(st_, 1.0)
    assert st_.lr == 1e-8 and st_.at_floor


def test_plateau_rejects_nan():
    with pytest.raises(TrainingAborted):
        lr_schedule_step(PlateauState(), float("nan"))
