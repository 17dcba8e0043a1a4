"""Multi-scale monogenic forward pass: local phase and phase asymmetry.

All functions accept a single ``(H, W)`` image or a stack with arbitrary
leading dimensions; spatial axes are always the last two.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidInputError, InvalidShapeError
from .filters import (
    LowPassSpec,
    butterworth,
    log_gabor_response,
    log_gabor_response_derivatives,
    nyquist_mask,
    riesz,
)
from .params import FilterBank
from .spectral import fft2, ifft2, ifft2_hermitian_half, make_grid

EPSILON = 1e-12
DEGENERATE_SPAN = 1e-12

CHANNEL_MODES = {
    "phase": ("phase",),
    "asym": ("asym",),
    "both": ("phase", "asym"),
}
RESCALE_MODES = ("image", "batch", "none")


def channel_names(mode: str) -> tuple[str, ...]:
    try:
        return CHANNEL_MODES[mode]
    except KeyError:
        raise ConfigError(f"unknown channel mode {mode!r}; expected one of {sorted(CHANNEL_MODES)}") from None


@dataclass(frozen=True)
class MonogenicTriplet:
    """Scale-summed even response ``even`` (I_f) and Riesz parts ``odd_x``, ``odd_y``."""

    even: np.ndarray
    odd_x: np.ndarray
    odd_y: np.ndarray

    @property
    def odd_norm(self) -> np.ndarray:
        return np.sqrt(self.odd_x**2 + self.odd_y**2)

    @property
    def energy(self) -> np.ndarray:
        return np.sqrt(self.even**2 + self.odd_x**2 + self.odd_y**2)


@dataclass(frozen=True)
class PhaseFeatures:
    """Output channels of the layer.

    ``channels`` holds the rescaled maps with shape ``(..., C, H, W)``;
    ``raw`` the same maps before rescaling; ``low``/``span`` the per-channel
    rescale statistics (``span == 0`` marks a degenerate, all-zero channel).
    """

    channels: np.ndarray
    raw: np.ndarray
    low: np.ndarray
    span: np.ndarray
    names: tuple[str, ...]
    triplet: MonogenicTriplet

    def channel(self, name: str) -> np.ndarray | None:
        if name not in self.names:
            return None
        return self.channels[..., self.names.index(name), :, :]

    @property
    def phase(self):
        return self.channel("phase")

    @property
    def asym(self):
        return self.channel("asym")


# -- kernels -------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def _band_kernels(height, width, f0, sigma_r, cutoff, order):
    grid = make_grid(height, width)
    lpf = butterworth(grid, LowPassSpec(cutoff, order)) * nyquist_mask(grid)
    gains = np.zeros(grid.shape)
    for f0_i, s_i in zip(f0, sigma_r):
        gains += log_gabor_response(grid.f, f0_i, s_i)
    band = lpf * gains
    band_riesz = band * riesz(grid)
    band.setflags(write=False)
    band_riesz.setflags(write=False)
    return band, band_riesz


@functools.lru_cache(maxsize=32)
def _band_derivative_kernels(height, width, f0_star, sigma_r_star, f0_min, f0_max, cutoff, order):
    bank = FilterBank(f0_star, sigma_r_star, f0_min, f0_max)
    grid = make_grid(height, width)
    half = width // 2 + 1
    f = grid.f[:, :half]
    lpf = (butterworth(grid, LowPassSpec(cutoff, order)) * nyquist_mask(grid))[:, :half]
    c_f0, c_sigma = (np.atleast_1d(c) for c in bank.chain_factors())
    n = bank.n_scales
    d = np.empty((2 * n, height, half))
    for i, (f0_i, s_i) in enumerate(zip(bank.f0, bank.sigma_r)):
        d_f0, d_sigma = log_gabor_response_derivatives(f, f0_i, s_i)
        d[i] = lpf * d_f0 * c_f0[i]
        d[n + i] = lpf * d_sigma * c_sigma[i]
    safe = np.where(f > 0, f, 1.0)
    rx = np.where(f > 0, 1j * grid.fx[:, :half] / safe, 0.0)
    ry = np.where(f > 0, 1j * grid.fy[:, :half] / safe, 0.0)
    out = (d, d * rx, d * ry)
    for arr in out:
        arr.setflags(write=False)
    return out


@functools.lru_cache(maxsize=32)
def riesz_kernel(height: int, width: int) -> np.ndarray:
    k = riesz(make_grid(height, width))
    k.setflags(write=False)
    return k


def band_kernels(shape, bank: FilterBank, lpf: LowPassSpec):
    """Return the scale-summed band-pass kernel and its Riesz-multiplied twin."""
    return _band_kernels(*shape, tuple(bank.f0), tuple(bank.sigma_r), lpf.cutoff, lpf.order)


def band_derivative_kernels(shape, bank: FilterBank, lpf: LowPassSpec):
    """Half-spectrum kernel derivatives w.r.t. the unbounded parameters.

    Returns three ``(2n, H, W//2 + 1)`` arrays ``(dK, dK*i*fx/|f|, dK*i*fy/|f|)``;
    their real inverse transforms against a real image's spectrum are the
    tangents of ``I_f``, ``R1`` and ``R2``.
    """
    return _band_derivative_kernels(*shape, tuple(bank.f0_star), tuple(bank.sigma_r_star),
                                    bank.f0_min, bank.f0_max, lpf.cutoff, lpf.order)




def check_image(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim < 2 or arr.shape[-1] < 2 or arr.shape[-2] < 2:
        raise InvalidShapeError(f"expected (..., H, W) with H, W >= 2, got shape {arr.shape}")
    if np.iscomplexobj(arr):
        raise InvalidInputError("images must be real-valued")
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("image contains non-finite values")
    return arr


def monogenic_triplet(image, bank: FilterBank, lpf: LowPassSpec = LowPassSpec()) -> MonogenicTriplet:
    img = check_image(image)
    band, band_riesz = band_kernels(img.shape[-2:], bank, lpf)
    return triplet_from_spectrum(fft2(img), band, band_riesz)


def triplet_from_spectrum(spectrum, band, band_riesz) -> MonogenicTriplet:
    even = ifft2_hermitian_half(spectrum[..., : band.shape[1] // 2 + 1] * band[:, : band.shape[1] // 2 + 1],
                                band.shape)
    odd = ifft2(spectrum * band_riesz, return_complex=True)
    return MonogenicTriplet(even, odd.real.copy(), odd.imag.copy())


def local_phase(triplet: MonogenicTriplet, epsilon: float = EPSILON) -> np.ndarray:
    """``atan2(I_f, |R|)`` in ``(-pi/2, pi/2]``; 0 where the triplet vanishes.

    ``epsilon`` only enters the derivative (see :mod:`mono2d.autodiff`).
    """
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    return np.arctan2(triplet.even, triplet.odd_norm)


def phase_asymmetry(triplet: MonogenicTriplet, epsilon: float = EPSILON) -> np.ndarray:
    """Rectified ``(|R| - |I_f|) / (|M| + epsilon)``, in ``[0, 1)``."""
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    num = np.maximum(triplet.odd_norm - np.abs(triplet.even), 0.0)
    return num / (triplet.energy + epsilon)


def rescale_statistics(field, per: str = "image"):
    """Return ``(low, span)`` broadcastable against ``field``.

    ``per='image'`` reduces over the last two axes, ``'batch'`` over all but
    the channel axis (``-3``). Degenerate spans come back as 0.
    """
    arr = np.asarray(field, dtype=np.float64)
    if per == "image":
        axes = (-2, -1)
    elif per == "batch":
        axes = tuple(i for i in range(arr.ndim) if i != arr.ndim - 3) if arr.ndim >= 3 else (-2, -1)
    else:
        raise ConfigError(f"unknown rescale mode {per!r}")
    low = arr.min(axis=axes, keepdims=True)
    span = arr.max(axis=axes, keepdims=True) - low
    span = np.where(span <= DEGENERATE_SPAN, 0.0, span)
    return low, span


def apply_rescale(field, low, span) -> np.ndarray:
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (np.asarray(field) - low) / safe, 0.0)


def minmax_rescale(field) -> np.ndarray:
    """Affinely map a field onto ``[0, 1]``; constant fields become all-zero."""
    low, span = rescale_statistics(field, "image")
    return apply_rescale(field, low, span)


def features_from_triplet(triplet: MonogenicTriplet, mode: str = "both", epsilon: float = EPSILON,
                          rescale: str = "image") -> PhaseFeatures:
    names = channel_names(mode)
    maps = []
    for name in names:
        maps.append(local_phase(triplet, epsilon) if name == "phase" else phase_asymmetry(triplet, epsilon))
    raw = np.stack(maps, axis=-3)
    if rescale == "none":
        low, span = np.zeros(raw.shape[:-2] + (1, 1)), np.ones(raw.shape[:-2] + (1, 1))
        channels = raw.copy()
    elif rescale in RESCALE_MODES:
        low, span = rescale_statistics(raw, rescale)
        channels = apply_rescale(raw, low, span)
    else:
        raise ConfigError(f"unknown rescale mode {rescale!r}")
    return PhaseFeatures(channels, raw, low, span, names, triplet)


def forward(image, bank: FilterBank, lpf: LowPassSpec = LowPassSpec(), mode: str = "both",
            epsilon: float = EPSILON, rescale: str = "image") -> PhaseFeatures:
    """Run the layer on one image ``(H, W)`` or a stack ``(..., H, W)``."""
    channel_names(mode)
    return features_from_triplet(monogenic_triplet(image, bank, lpf), mode, epsilon, rescale)
