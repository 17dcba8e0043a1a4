import numpy as np
import pytest

from mono2d.autodiff import fd_oracle, forward_with_tangents, grad_of_scalar
from mono2d.errors import ConfigError, InvalidShapeError
from mono2d.filters import LowPassSpec, log_gabor_response_derivatives, nyquist_mask, butterworth
from mono2d.monogenic import forward
from mono2d.params import bank_for, init_bank
from mono2d.spectral import fft2, ifft2, make_grid

LPF = LowPassSpec()


def mean_channel(c):
    return lambda ch: float(ch[c].mean())


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b))


def test_constant_image_has_zero_tangents():
    bank = init_bank(4, 32, 32, seed=0)
    _, b = forward_with_tangents(np.full((32, 32), 0.4), bank)
    for arr in (b.d_even, b.d_odd_x, b.d_odd_y, b.d_raw, b.d_channels):
        assert np.max(np.abs(arr)) <= 1e-12


@pytest.mark.parametrize("param", [0, 1], ids=["f0_star", "sigma_r_star"])
def test_single_scale_gradient_matches_fd(rng, param):
    img = rng.random((32, 32))
    bank = init_bank(1, 32, 32, seed=11)
    feats, bundle = forward_with_tangents(img, bank, mode="phase")
    down = np.full(feats.channels.shape, 1 / img.size)
    g = grad_of_scalar(bundle, down)
    fd = fd_oracle(img, bank, LPF, "phase", mean_channel(0), param, 1e-4)
    assert rel_err(g[param], fd) <= 1e-4


@pytest.mark.parametrize("channel", [0, 1], ids=["phase", "asym"])
@pytest.mark.parametrize("target", ["rescaled", "raw"])
def test_multiscale_gradients(rng, channel, target):
    img = rng.random((40, 36))
    bank = init_bank(4, 40, 36, seed=3)
    feats, bundle = forward_with_tangents(img, bank)
    down = np.zeros(feats.channels.shape)
    down[channel] = 1 / img.size
    g = grad_of_scalar(bundle, down, target=target)
    for p in range(8):
        fd = fd_oracle(img, bank, LPF, "both", mean_channel(channel), p, 1e-4, target=target)
        assert abs(g[p] - fd) <= max(1e-4 * abs(fd), 1e-8)


def test_batched_gradient_is_sum_of_singles(rng):
    imgs = rng.random((3, 24, 24))
    bank = init_bank(2, 24, 24, seed=0)
    feats, bundle = forward_with_tangents(imgs, bank)
    down = rng.standard_normal(feats.channels.shape)
    total = grad_of_scalar(bundle, down)
    parts = [grad_of_scalar(forward_with_tangents(imgs[i], bank)[1], down[i]) for i in range(3)]
    np.testing.assert_allclose(total, np.sum(parts, axis=0), rtol=1e-12, atol=1e-15)


def test_grad_of_scalar_zero_and_linear(rng):
    img = rng.random((24, 24))
    feats, bundle = forward_with_tangents(img, init_bank(3, 24, 24, seed=1))
    assert np.all(grad_of_scalar(bundle, np.zeros(feats.channels.shape)) == 0)
    g1 = rng.standard_normal(feats.channels.shape)
    g2 = rng.standard_normal(feats.channels.shape)
    lhs = grad_of_scalar(bundle, 2.5 * g1 + g2)
    rhs = 2.5 * grad_of_scalar(bundle, g1) + grad_of_scalar(bundle, g2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


def test_grad_of_scalar_shape_mismatch(rng):
    feats, bundle = forward_with_tangents(rng.random((16, 16)), init_bank(1, 16, 16, seed=0))
    with pytest.raises(InvalidShapeError):
        grad_of_scalar(bundle, np.zeros((1, 16, 16)))


def test_parameter_ordering(rng):
    bank = init_bank(3, 16, 16, seed=0)
    _, bundle = forward_with_tangents(rng.random((16, 16)), bank)
    assert bundle.n_params == 6 and bundle.d_raw.shape[0] == 6


def test_fd_symmetric_loss_vanishes_at_symmetry_point(rng):
    img = rng.random((24, 24))
    bank = init_bank(1, 24, 24, seed=2)
    base = forward(img, bank).channels[0].mean()
    fd = fd_oracle(img, bank, LPF, "phase", lambda ch: (ch[0].mean() - base) ** 2, 0, 1e-4)
    assert abs(fd) <= 1e-10


def test_fd_richardson_consistency(rng):
    img = rng.random((32, 32))
    bank = init_bank(2, 32, 32, seed=6)
    loss = mean_channel(0)
    steps = [1e-3, 5e-4, 2.5e-4, 1.25e-4, 1e-5]
    vals = [fd_oracle(img, bank, LPF, "phase", loss, 1, h) for h in steps]
    # central differences converge quadratically: successive gaps shrink ~4x
    gaps = np.abs(np.diff(vals[:4]))
    assert np.all(gaps[1:] <= 0.5 * gaps[:-1] + 1e-12)
    assert rel_err(vals[-1], vals[-2]) <= 1e-6


def test_fd_oracle_rejects_bad_step(rng):
    with pytest.raises(ConfigError):
        fd_oracle(rng.random((8, 8)), init_bank(1, 8, 8, seed=0), LPF, "phase", mean_channel(0), 0, 0.0)


def test_unbounded_gradients_are_chained_bounded_gradients(rng):
    img = rng.random((32, 32))
    bank = init_bank(2, 32, 32, seed=8)
    feats, bundle = forward_with_tangents(img, bank, mode="phase", rescale="none")
    g = grad_of_scalar(bundle, np.full(feats.channels.shape, 1 / img.size), target="raw")
    c_f0, c_s = bank.chain_factors()

    def loss_at(f0, s):
        b = bank_for(f0, s, bank.f0_min, bank.f0_max)
        return forward(img, b, mode="phase", rescale="none").raw[0].mean()

    f0, s = bank.f0.copy(), bank.sigma_r.copy()
    for i in range(2):
        h = 1e-6
        e = np.eye(2)[i] * h
        d_f0 = (loss_at(f0 + e, s) - loss_at(f0 - e, s)) / (2 * h)
        d_s = (loss_at(f0, s + e) - loss_at(f0, s - e)) / (2 * h)
        assert rel_err(g[i], d_f0 * c_f0[i]) <= 1e-4
        assert rel_err(g[2 + i], d_s * c_s[i]) <= 1e-4


def test_tangents_of_a_scale_use_only_its_kernel(rng):
    img = rng.random((20, 20))
    bank = init_bank(3, 20, 20, seed=4)
    _, bundle = forward_with_tangents(img, bank)
    grid = make_grid(20, 20)
    lpf = butterworth(grid, LPF) * nyquist_mask(grid)
    c_f0, c_s = bank.chain_factors()
    spec = fft2(img)
    for i in range(3):
        d_f0, d_s = log_gabor_response_derivatives(grid.f, bank.f0[i], bank.sigma_r[i])
        np.testing.assert_allclose(bundle.d_even[i], ifft2(spec * lpf * d_f0 * c_f0[i]), atol=1e-13)
        np.testing.assert_allclose(bundle.d_even[3 + i], ifft2(spec * lpf * d_s * c_s[i]), atol=1e-13)


def test_rectifier_blocks_gradient_where_clamped(rng):
    img = rng.random((32, 32))
    feats, bundle = forward_with_tangents(img, init_bank(4, 32, 32, seed=1), mode="asym")
    t = feats.triplet
    clamped = np.sqrt(t.odd_x**2 + t.odd_y**2) - np.abs(t.even) < 0
    assert clamped.any()
    assert np.all(bundle.d_raw[:, 0][:, clamped] == 0.0)


def test_degenerate_channel_has_zero_rescaled_tangent():
    feats, bundle = forward_with_tangents(np.full((16, 16), 0.5), init_bank(2, 16, 16, seed=0))
    assert np.all(feats.span == 0)
    assert np.all(bundle.d_channels == 0)


def test_small_gradient_fd_converges_to_tangent():
    # a near-cancelling gradient where step 1e-4 leaves ~5e-4 relative truncation error
    rng = np.random.default_rng(64012)
    img = rng.random((64, 64))
    bank = init_bank(1, 64, 64, seed=[64012, 0])
    feats, b = forward_with_tangents(img, bank, LPF, "phase")
    g = grad_of_scalar(b, np.full(feats.channels.shape, 1 / img.size))[0]
    fd = [fd_oracle(img, bank, LPF, "phase", mean_channel(0), 0, h) for h in (2e-4, 1e-4)]
    richardson = (4 * fd[1] - fd[0]) / 3
    assert abs(g) < 1e-5
    assert rel_err(g, fd[1]) > 1e-4
    assert rel_err(g, richardson) < 1e-5
