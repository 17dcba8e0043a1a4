"""Forward-mode parameter sensitivities of the layer, plus a finite-difference
oracle.

The layer has only ``2n`` trainable scalars and a whole-image output, so one
tangent field per parameter is cheap: each costs two extra inverse FFTs on the
shared input spectrum. Rescale statistics are treated as constants.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, InvalidShapeError
from .filters import LowPassSpec
from .monogenic import (
    EPSILON,
    MonogenicTriplet,
    PhaseFeatures,
    apply_rescale,
    band_derivative_kernels,
    band_kernels,
    channel_names,
    check_image,
    features_from_triplet,
    forward,
    riesz_kernel,
    triplet_from_spectrum,
)
from .params import FilterBank
from .spectral import fft2, ifft2, ifft2_hermitian_half


@dataclass(frozen=True)
class TangentBundle:
    """Per-parameter derivatives, parameter axis placed before the spatial/channel axes.

    ``d_even`` etc. have shape ``(..., 2n, H, W)``; ``d_raw`` and
    ``d_channels`` have shape ``(..., 2n, C, H, W)``. Parameters are ordered
    ``(f0_star[0..n), sigma_r_star[0..n))``.
    """

    d_even: np.ndarray
    d_odd_x: np.ndarray
    d_odd_y: np.ndarray
    d_raw: np.ndarray
    inv_span: np.ndarray
    names: tuple[str, ...]
    n_scales: int

    @property
    def d_channels(self) -> np.ndarray:
        """Tangents of the rescaled channels, min/max held constant."""
        return self.d_raw * self.inv_span

    @property
    def n_params(self) -> int:
        return 2 * self.n_scales


def phase_coefficients(t: MonogenicTriplet, epsilon: float = EPSILON):
    """Maps ``(c_e, c_x, c_y)`` with ``dphase = c_e*dI_f + c_x*dR1 + c_y*dR2``.

    ``epsilon`` sits under the square root of ``|R|`` in the derivative only.
    """
    e, rx, ry = t.even, t.odd_x, t.odd_y
    r2 = rx**2 + ry**2
    r = np.sqrt(r2)
    denom = e**2 + r2
    ok = denom > 0
    inv = np.where(ok, 1.0 / np.where(ok, denom, 1.0), 0.0)
    k = -e * inv / np.sqrt(r2 + epsilon)
    return r * inv, k * rx, k * ry


def asymmetry_coefficients(t: MonogenicTriplet, epsilon: float = EPSILON):
    """Maps ``(c_e, c_x, c_y)`` for the rectified asymmetry; zero where clamped."""
    e, rx, ry = t.even, t.odd_x, t.odd_y
    r = np.sqrt(rx**2 + ry**2)
    m = np.sqrt(e**2 + r**2)
    num = r - np.abs(e)
    active = num > 0
    d_den = m + epsilon
    inv_r = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
    inv_m = np.where(m > 0, 1.0 / np.where(m > 0, m, 1.0), 0.0)
    q = num * inv_m / d_den**2
    c_e = -np.sign(e) / d_den - q * e
    c_odd = inv_r / d_den - q
    c_e = np.where(active, c_e, 0.0)
    c_odd = np.where(active, c_odd, 0.0)
    return c_e, c_odd * rx, c_odd * ry


def _combine(coeffs, d_even, d_odd_x, d_odd_y, out=None):
    c_e, c_x, c_y = (c[..., None, :, :] for c in coeffs)
    out = np.multiply(c_e, d_even, out=out)
    out += c_x * d_odd_x
    out += c_y * d_odd_y
    return out


def phase_tangent(t: MonogenicTriplet, d_even, d_odd_x, d_odd_y, epsilon: float = EPSILON):
    """Tangent of ``atan2(I_f, |R|)``; inputs carry a parameter axis at ``-3``."""
    return _combine(phase_coefficients(t, epsilon), d_even, d_odd_x, d_odd_y)


def asymmetry_tangent(t: MonogenicTriplet, d_even, d_odd_x, d_odd_y, epsilon: float = EPSILON):
    """Tangent of the rectified asymmetry ratio; exactly 0 where it is clamped."""
    return _combine(asymmetry_coefficients(t, epsilon), d_even, d_odd_x, d_odd_y)


def forward_with_tangents(image, bank: FilterBank, lpf: LowPassSpec = LowPassSpec(), mode: str = "both",
                          epsilon: float = EPSILON, rescale: str = "image"):
    """Run the layer and return ``(PhaseFeatures, TangentBundle)``."""
    names = channel_names(mode)
    img = check_image(image)
    shape = img.shape[-2:]
    band, band_riesz = band_kernels(shape, bank, lpf)
    d_band, d_band_x, d_band_y = band_derivative_kernels(shape, bank, lpf)

    spectrum = fft2(img)
    triplet = triplet_from_spectrum(spectrum, band, band_riesz)
    feats = features_from_triplet(triplet, mode, epsilon, rescale)

    s_half = spectrum[..., None, :, : shape[1] // 2 + 1]
    d_even = ifft2_hermitian_half(s_half * d_band, shape)
    d_odd_x = ifft2_hermitian_half(s_half * d_band_x, shape)
    d_odd_y = ifft2_hermitian_half(s_half * d_band_y, shape)

    d_raw = np.empty(d_even.shape[:-2] + (len(names),) + shape)
    for c, name in enumerate(names):
        coeffs = phase_coefficients(triplet, epsilon) if name == "phase" else asymmetry_coefficients(triplet, epsilon)
        _combine(coeffs, d_even, d_odd_x, d_odd_y, out=d_raw[..., c, :, :])
    span = feats.span[..., None, :, :, :]
    inv_span = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
    bundle = TangentBundle(d_even, d_odd_x, d_odd_y, d_raw, inv_span, names, bank.n_scales)
    return feats, bundle


def grad_of_scalar(bundle: TangentBundle, downstream_grad, target: str = "rescaled") -> np.ndarray:
    """Contract channel tangents with an upstream gradient.

    ``downstream_grad`` has the channel shape ``(..., C, H, W)``; the result is
    the length-``2n`` gradient over the unbounded parameters, summed over any
    leading batch axes.
    """
    tangents = bundle.d_raw
    g = np.asarray(downstream_grad, dtype=np.float64)
    expected = tangents.shape[:-4] + tangents.shape[-3:]
    if g.shape != expected:
        raise InvalidShapeError(f"downstream gradient shape {g.shape} does not match channels {expected}")
    if target == "rescaled":
        g = g * bundle.inv_span[..., 0, :, :, :]
    elif target != "raw":
        raise ConfigError(f"unknown target {target!r}")
    n_p = tangents.shape[-4]
    t = tangents.reshape(-1, n_p, int(np.prod(tangents.shape[-3:])))
    return np.einsum("lpk,lk->p", t, g.reshape(t.shape[0], -1))


def fd_oracle(image, bank: FilterBank, lpf: LowPassSpec, mode: str,
              loss_fn: Callable[[np.ndarray], float], param_index: int, step: float = 1e-4,
              epsilon: float = EPSILON, target: str = "rescaled", rescale: str = "image") -> float:
    """Central difference of ``loss_fn(channels)`` in one unbounded parameter.

    Every evaluation is a full forward pass. With ``target='rescaled'`` the
    rescale statistics of the unperturbed pass are held fixed, which is the
    quantity the analytic tangents differentiate; ``target='live'`` rescales
    each perturbed pass afresh.
    """
    if not step > 0:
        raise ConfigError("step must be positive")
    if target not in ("rescaled", "raw", "live"):
        raise ConfigError(f"unknown target {target!r}")
    base = forward(image, bank, lpf, mode, epsilon, rescale)
    vec = bank.vector
    values = []
    for sign in (1.0, -1.0):
        v = vec.copy()
        v[param_index] += sign * step
        feats = forward(image, bank.with_vector(v), lpf, mode, epsilon, rescale)
        if target == "raw":
            channels = feats.raw
        elif target == "live":
            channels = feats.channels
        else:
            channels = apply_rescale(feats.raw, base.low, base.span)
        values.append(float(loss_fn(channels)))
    return (values[0] - values[1]) / (2.0 * step)
