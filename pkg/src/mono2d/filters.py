"""Frequency-domain kernels: Butterworth low-pass, log-Gabor band-pass and the
combined Riesz kernel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .spectral import FrequencyGrid


@dataclass(frozen=True)
class LowPassSpec:
    cutoff: float = 0.5
    order: int = 10

    def __post_init__(self):
        if not (0.0 < self.cutoff <= 0.5):
            raise ConfigError(f"low-pass cutoff must lie in (0, 0.5], got {self.cutoff}")
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f"low-pass order must be a positive integer, got {self.order}")


@dataclass(frozen=True)
class LogGaborSpec:
    f0: float
    sigma_r: float

    def __post_init__(self):
        if not self.f0 > 0:
            raise ConfigError(f"f0 must be positive, got {self.f0}")
        if not (0.0 < self.sigma_r < 1.0):
            raise ConfigError(f"sigma_r must lie in (0, 1), got {self.sigma_r}")


def butterworth_response(f, cutoff: float, order: int) -> np.ndarray:
    return 1.0 / (1.0 + (np.asarray(f, dtype=np.float64) / cutoff) ** (2 * order))


def butterworth(grid: FrequencyGrid, spec: LowPassSpec) -> np.ndarray:
    return butterworth_response(grid.f, spec.cutoff, spec.order)


def _log_ratio(f, f0):
    f = np.asarray(f, dtype=np.float64)
    dc = f <= 0
    with np.errstate(divide="ignore"):
        lr = np.log(np.where(dc, 1.0, f) / f0)
    return lr, dc


def log_gabor_response(f, f0: float, sigma_r: float) -> np.ndarray:
    """Radial log-Gabor gain; the DC bin (``f == 0``) is set to 0."""
    lr, dc = _log_ratio(f, f0)
    ls = np.log(sigma_r)
    g = np.exp(-(lr**2) / (2.0 * ls**2))
    return np.where(dc, 0.0, g)


def log_gabor_response_derivatives(f, f0: float, sigma_r: float):
    """Return ``(dG/df0, dG/dsigma_r)`` of :func:`log_gabor_response`, zero at DC."""
    lr, dc = _log_ratio(f, f0)
    ls = np.log(sigma_r)
    g = np.where(dc, 0.0, np.exp(-(lr**2) / (2.0 * ls**2)))
    d_f0 = g * lr / (f0 * ls**2)
    d_sigma = g * lr**2 / (sigma_r * ls**3)
    return np.where(dc, 0.0, d_f0), np.where(dc, 0.0, d_sigma)


def log_gabor(grid: FrequencyGrid, spec: LogGaborSpec) -> np.ndarray:
    return log_gabor_response(grid.f, spec.f0, spec.sigma_r)


def log_gabor_derivatives(grid: FrequencyGrid, spec: LogGaborSpec):
    return log_gabor_response_derivatives(grid.f, spec.f0, spec.sigma_r)


def riesz(grid: FrequencyGrid) -> np.ndarray:
    """Combined Riesz kernel ``(i*fx - fy) / |f|`` with the DC bin set to 0.

    Applied to the spectrum of a real field, the inverse transform carries the
    x-direction component in its real part and the y-direction component in
    its imaginary part.
    """
    dc = grid.f == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (1j * grid.fx - grid.fy) / grid.f
    k[dc] = 0.0
    return k


def nyquist_mask(grid: FrequencyGrid) -> np.ndarray:
    """Zero the Nyquist row/column of even-sized axes, ones elsewhere.

    Those bins are their own mirror image, so an odd kernel cannot be
    antisymmetric there; dropping them keeps the two Riesz outputs real.
    """
    mask = np.ones(grid.shape)
    if grid.height % 2 == 0:
        mask[grid.height // 2, :] = 0.0
    if grid.width % 2 == 0:
        mask[:, grid.width // 2] = 0.0
    return mask
