import numpy as np
import pytest

import sadir.train as train_mod
from sadir.geometry import Geometry, Grid, Sinogram
from sadir.net import init_input_array, init_params, net_forward_array, param_names
from sadir.phantoms import shepp_logan
from sadir.resample import downsample_array
from sadir.tomo import fbp_array, project_array
from sadir.train import (AdamState, NumericalError, TrainConfig, adam_step, build_zsl_pair, joint_loss,
                         joint_loss_and_grad, reconstruct, train)

N, PS = 32, 1.0
GEOM = Geometry.parallel(30, 32, 1.0)


def _toy_sinogram():
    c = (np.arange(N) - (N - 1) / 2) * PS
    xx, yy = np.meshgrid(c, -c)
    img = 0.02 * (xx**2 + yy**2 < 12**2) + 0.02 * (np.abs(xx - 2) < 3) * (np.abs(yy) < 6)
    return Sinogram(project_array(img, GEOM, PS), GEOM.det_spacing)


# --- loss -----------------------------------------------------------------------


def test_joint_loss_zero_for_identical_images(rng):
    x = rng.uniform(0, 0.05, (16, 16))
    assert joint_loss(x, x) == 0.0


def test_joint_loss_nonnegative_and_formula(rng):
    for _ in range(10):
        a, b = rng.uniform(0, 0.05, (2, 16, 16))
        from sadir.metrics import ssim
        expected = np.sqrt(1 + ((a - b) ** 2).sum()) * (1 - ssim(a, b))
        assert joint_loss(a, b) == pytest.approx(expected, rel=1e-14)
        assert joint_loss(a, b) >= 0


def test_joint_loss_mean_reduction_flag(rng):
    a, b = rng.uniform(0, 0.5, (2, 16, 16))
    from sadir.metrics import ssim
    expected = np.sqrt(1 + ((a - b) ** 2).mean()) * (1 - ssim(a, b))
    assert joint_loss(a, b, TrainConfig(l2_mean=True)) == pytest.approx(expected, rel=1e-14)


def test_joint_loss_gradient_finite_differences(rng):
    a, b = rng.uniform(0, 0.05, (2, 16, 16))
    loss, g = joint_loss_and_grad(a, b)
    h = 1e-6
    for idx in [(0, 0), (8, 8), (3, 12), (15, 15)]:
        e = np.zeros_like(a)
        e[idx] = h
        fd = (joint_loss(a + e, b) - joint_loss(a - e, b)) / (2 * h)
        assert abs(fd - g[idx]) <= 1e-4 * max(abs(fd), abs(g[idx]))


def test_joint_loss_shape_mismatch():
    with pytest.raises(ValueError):
        joint_loss(np.zeros((16, 16)), np.zeros((15, 15)))


# --- Adam -----------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params_and_decays_moments():
    cfg = TrainConfig()
    p = np.array([1.0, -2.0])
    state = AdamState(np.array([0.5, 0.5]), np.array([0.2, 0.2]), 3)
    new, st = adam_step(p, np.zeros(2), state, cfg)
    np.testing.assert_allclose(st.m, 0.9 * 0.5)
    np.testing.assert_allclose(st.v, 0.999 * 0.2)
    assert st.step == 4
    fresh, _ = adam_step(p, np.zeros(2), AdamState.zeros(2), cfg)
    assert np.array_equal(fresh, p)


def test_adam_first_step_closed_form():
    cfg = TrainConfig(learning_rate=1e-3)
    new, _ = adam_step(np.array([0.0]), np.array([1.0]), AdamState.zeros(1), cfg)
    assert new[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-14)


def test_adam_reports_nonfinite_gradient_with_name_and_epoch():
    names = param_names(1)
    g = np.zeros(len(names))
    g[5] = np.nan
    with pytest.raises(NumericalError, match=r"block0\.c1\[2\].*epoch 7"):
        adam_step(np.zeros(len(names)), g, AdamState.zeros(len(names)), TrainConfig(), epoch=7, names=names)


# --- configuration --------------------------------------------------------------


@pytest.mark.parametrize("kwargs", [dict(learning_rate=0.0), dict(epochs=-1), dict(ssim_window=10),
                                    dict(L_range=0.0), dict(residual_lift="cubic")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_config_dict_round_trip():
    cfg = TrainConfig(learning_rate=3e-4, epochs=12, seed=9, shared_blocks=True)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.ssim.window == 11 and cfg.ssim.data_range == 0.082


# --- zero-shot pair -------------------------------------------------------------


def test_zsl_pair_of_zero_sinogram_is_zero():
    y_l, x_ref = build_zsl_pair(Sinogram(np.zeros(GEOM.shape), 1.0), GEOM, Grid(N, PS))
    assert not y_l.data.any() and not x_ref.data.any()
    assert y_l.det_spacing == 2 * GEOM.det_spacing
    assert y_l.data.shape == (GEOM.n_views, GEOM.n_det // 2)


def test_zsl_pair_resembles_sampled_sinogram():
    n, ps = 128, 1.0
    g = Geometry.parallel(90, n, ps)
    y = project_array(shepp_logan(n, ps), g, ps)
    y_l, x_ref = build_zsl_pair(Sinogram(y, ps), g, Grid(n, ps))
    assert x_ref.data.shape == (n, n)
    sampled = downsample_array(y)
    for a, b in zip(y_l.data, sampled):
        assert np.corrcoef(a, b)[0, 1] > 0.95


def test_zsl_pair_noise_is_seeded():
    y = _toy_sinogram()
    a, _ = build_zsl_pair(y, GEOM, Grid(N, PS), noise_std=0.01, seed=3)
    b, _ = build_zsl_pair(y, GEOM, Grid(N, PS), noise_std=0.01, seed=3)
    c, _ = build_zsl_pair(y, GEOM, Grid(N, PS))
    assert np.array_equal(a.data, b.data)
    assert 0.005 < np.std(a.data - c.data) < 0.02


def test_zsl_pair_rejects_odd_detector():
    g = Geometry.parallel(10, 31, 1.0)
    with pytest.raises(ValueError):
        build_zsl_pair(Sinogram(np.zeros(g.shape), 1.0), g, Grid(N, PS))


# --- training loop --------------------------------------------------------------


def test_zero_epochs_returns_initialization():
    params, losses = train(_toy_sinogram(), GEOM, Grid(N, PS), TrainConfig(epochs=0, seed=4))
    assert losses == []
    assert np.array_equal(params.to_vector(), init_params(4).to_vector())


def test_training_is_deterministic_and_reduces_loss():
    cfg = TrainConfig(epochs=6, seed=2, learning_rate=1e-3)
    p1, l1 = train(_toy_sinogram(), GEOM, Grid(N, PS), cfg)
    p2, l2 = train(_toy_sinogram(), GEOM, Grid(N, PS), cfg)
    assert l1 == l2
    assert p1.to_vector().tobytes() == p2.to_vector().tobytes()
    assert len(l1) == 6 and np.all(np.isfinite(l1))
    assert l1[-1] < l1[0]


def test_loss_history_matches_forward_evaluation():
    cfg = TrainConfig(epochs=1, seed=2)
    y = _toy_sinogram()
    _, losses = train(y, GEOM, Grid(N, PS), cfg)
    y_l, x_ref = build_zsl_pair(y, GEOM, Grid(N, PS))
    x, _ = net_forward_array(y_l.data, init_params(2), GEOM, N, PS)
    assert losses[0] == joint_loss(x, x_ref.data)


def test_shared_blocks_stay_tied():
    cfg = TrainConfig(epochs=3, seed=1, learning_rate=1e-3, shared_blocks=True)
    params, _ = train(_toy_sinogram(), GEOM, Grid(N, PS), cfg)
    v = params.to_vector().reshape(3, -1)
    assert np.array_equal(v[0], v[1]) and np.array_equal(v[1], v[2])


def test_nonfinite_loss_aborts_with_epoch(monkeypatch):
    real = train_mod.joint_loss_and_grad
    calls = []

    def flaky(x_h, x_ref, cfg=None):
        calls.append(1)
        loss, grad = real(x_h, x_ref, cfg)
        return (float("nan"), grad) if len(calls) == 3 else (loss, grad)

    monkeypatch.setattr(train_mod, "joint_loss_and_grad", flaky)
    with pytest.raises(NumericalError, match="epoch 2"):
        train(_toy_sinogram(), GEOM, Grid(N, PS), TrainConfig(epochs=5))


# --- reconstruction -------------------------------------------------------------


def test_reconstruct_doubles_the_grid_and_reduces_to_clamped_init():
    y = _toy_sinogram()
    params = init_params(0)
    for b in params.blocks:
        b.lambda1 = b.lambda2 = b.lambda3 = 0.0
    out = reconstruct(y, params, GEOM, Grid(2 * N, PS / 2))
    assert out.data.shape == (2 * N, 2 * N) and out.pixel_size == PS / 2
    expected = np.maximum(0.0, init_input_array(y.data, GEOM.higher(), 2 * N, PS / 2))
    assert np.array_equal(out.data, expected)


def test_reconstruct_geometry_mismatch():
    with pytest.raises(ValueError):
        reconstruct(Sinogram(np.zeros((30, 16)), 1.0), init_params(0), GEOM, Grid(64, 0.5))


def test_trained_network_output_is_nonnegative():
    params, _ = train(_toy_sinogram(), GEOM, Grid(N, PS), TrainConfig(epochs=2, learning_rate=1e-2))
    out = reconstruct(_toy_sinogram(), params, GEOM, Grid(2 * N, PS / 2))
    assert out.data.min() >= 0.0
    ref = fbp_array(_toy_sinogram().data, GEOM, N, PS)
    assert ref.shape == (N, N)
