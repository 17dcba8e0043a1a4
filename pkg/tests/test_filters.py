import math

import numpy as np
import pytest

from mono2d.errors import ConfigError
from mono2d.filters import (
    LogGaborSpec,
    LowPassSpec,
    butterworth,
    butterworth_response,
    log_gabor,
    log_gabor_derivatives,
    log_gabor_response,
    log_gabor_response_derivatives,
    nyquist_mask,
    riesz,
)
from mono2d.spectral import fft2, ifft2, make_grid


def test_butterworth_values():
    assert butterworth_response(0.0, 0.5, 10) == 1.0
    assert butterworth_response(0.5, 0.5, 10) == 0.5
    assert butterworth_response(0.25, 0.5, 10) == pytest.approx(0.9999990463265931, abs=1e-15)


def test_butterworth_on_grid():
    g = make_grid(16, 16)
    k = butterworth(g, LowPassSpec())
    assert k[0, 0] == 1.0
    assert np.all((k >= 0) & (k <= 1))


@pytest.mark.parametrize("cutoff,order", [(0.0, 10), (0.6, 10), (0.5, 0), (0.3, 1.5)])
def test_lowpass_spec_validation(cutoff, order):
    with pytest.raises(ConfigError):
        LowPassSpec(cutoff, order)


@pytest.mark.parametrize("f0,sigma", [(0.0, 0.5), (0.1, 0.0), (0.1, 1.0)])
def test_log_gabor_spec_validation(f0, sigma):
    with pytest.raises(ConfigError):
        LogGaborSpec(f0, sigma)


def test_log_gabor_values():
    assert log_gabor_response(0.1, 0.1, 0.55) == 1.0
    assert log_gabor_response(0.0, 0.1, 0.55) == 0.0
    assert log_gabor_response(0.2, 0.1, 0.5) == pytest.approx(math.exp(-0.5), abs=1e-12)


def test_log_gabor_grid_dc_is_exactly_zero():
    k = log_gabor(make_grid(8, 8), LogGaborSpec(0.2, 0.6))
    assert k[0, 0] == 0.0
    assert np.all((k >= 0) & (k <= 1))


def test_derivatives_vanish_at_peak():
    d_f0, d_s = log_gabor_response_derivatives(0.125, 0.125, 0.4)
    assert d_f0 == 0.0 and d_s == 0.0


def test_sigma_derivative_value():
    # exp(-1/2) (ln 2)^2 / (0.5 (ln 0.5)^3), evaluated directly
    _, d_s = log_gabor_response_derivatives(0.2, 0.1, 0.5)
    assert d_s == pytest.approx(-1.7500775498290553, rel=1e-12)


def test_derivatives_zero_at_dc():
    d_f0, d_s = log_gabor_derivatives(make_grid(6, 6), LogGaborSpec(0.2, 0.5))
    assert d_f0[0, 0] == 0.0 and d_s[0, 0] == 0.0


def _random_points(rng, count):
    """(f, f0, sigma_r) triples kept away from the peak where dG vanishes."""
    pts = []
    while len(pts) < count:
        f0 = rng.uniform(0.01, 0.45)
        s = rng.uniform(0.2, 0.9)
        f = f0 * math.exp(rng.uniform(-2.0, 2.0) * abs(math.log(s)))
        if abs(math.log(f / f0)) > 0.05 * abs(math.log(s)) and f <= 0.75:
            pts.append((f, f0, s))
    return pts


def test_derivatives_match_finite_differences(rng):
    for f, f0, s in _random_points(rng, 100):
        d_f0, d_s = log_gabor_response_derivatives(f, f0, s)
        h = 1e-6 * f0
        fd_f0 = (log_gabor_response(f, f0 + h, s) - log_gabor_response(f, f0 - h, s)) / (2 * h)
        h = 1e-6 * s
        fd_s = (log_gabor_response(f, f0, s + h) - log_gabor_response(f, f0, s - h)) / (2 * h)
        assert abs(d_f0 - fd_f0) <= 1e-5 * abs(fd_f0)
        assert abs(d_s - fd_s) <= 1e-5 * abs(fd_s)


def test_single_radial_maximum():
    f = np.linspace(0.0, 0.5 * math.sqrt(2), 20001)
    for f0, s in [(0.05, 0.3), (0.2, 0.55), (0.41, 0.8)]:
        g = log_gabor_response(f, f0, s)
        interior = (g[1:-1] > g[:-2]) & (g[1:-1] >= g[2:])
        peaks = np.flatnonzero(interior) + 1
        assert len(peaks) == 1
        assert abs(f[peaks[0]] - f0) <= f[1] - f[0]


def test_riesz_values():
    g = make_grid(8, 8)
    k = riesz(g)
    assert k[0, 2] == 1j  # fx = 0.25, fy = 0
    assert k[2, 0] == -1  # fx = 0, fy = 0.25
    assert k[0, 0] == 0
    mag = np.abs(k)
    mag[0, 0] = 1
    assert np.max(np.abs(mag - 1)) <= 1e-12


def test_constant_image_has_no_bandpass_response():
    g = make_grid(16, 16)
    k = log_gabor(g, LogGaborSpec(0.1, 0.5))
    out = ifft2(fft2(np.full((16, 16), 0.7)) * k)
    assert np.max(np.abs(out)) <= 1e-12


@pytest.mark.parametrize("shape", [(16, 16), (15, 12), (9, 7)])
def test_riesz_components_are_real(rng, shape):
    g = make_grid(*shape)
    img = rng.random(shape)
    spec = fft2(img) * nyquist_mask(g)
    safe = np.where(g.f > 0, g.f, 1.0)
    odd_x = ifft2(spec * np.where(g.f > 0, 1j * g.fx / safe, 0), return_complex=True)
    odd_y = ifft2(spec * np.where(g.f > 0, 1j * g.fy / safe, 0), return_complex=True)
    combined = ifft2(spec * riesz(g), return_complex=True)
    for comp in (odd_x, odd_y):
        assert np.max(np.abs(comp.imag)) <= 1e-10 * np.max(np.abs(comp.real))
    np.testing.assert_allclose(combined.real, odd_x.real, atol=1e-12)
    np.testing.assert_allclose(combined.imag, odd_y.real, atol=1e-12)
