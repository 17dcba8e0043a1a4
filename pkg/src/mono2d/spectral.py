"""Frequency grids and 2D discrete Fourier transforms.

Frequencies are in cycles/pixel on the unshifted DFT-index layout, so kernels
built on a grid multiply spectra directly. The forward transform is
unnormalized and the inverse carries the 1/(H*W) factor.
"""
from __future__ import annotations

import functools
import os
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import InvalidInputError, InvalidShapeError, OracleSizeError

ORACLE_MAX_PIXELS = 4096


def worker_count() -> int:
    """Worker cap for FFT calls, read from ``MONO2D_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("MONO2D_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Per-pixel normalized frequencies for an ``height x width`` image.

    ``fy`` varies along rows (axis 0) and ``fx`` along columns (axis 1).
    Arrays are read-only; grids are cached per shape.
    """

    height: int
    width: int
    fx: np.ndarray
    fy: np.ndarray
    f: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


def index_frequencies(n: int) -> np.ndarray:
    """Map DFT index ``k`` to ``k/n`` for ``k < n/2`` and ``(k-n)/n`` otherwise."""
    k = np.arange(n, dtype=np.float64)
    return np.where(k < n / 2, k, k - n) / n


@functools.lru_cache(maxsize=64)
def _cached_grid(height: int, width: int) -> FrequencyGrid:
    fy_1d = index_frequencies(height)
    fx_1d = index_frequencies(width)
    fy, fx = np.meshgrid(fy_1d, fx_1d, indexing="ij")
    f = np.sqrt(fx**2 + fy**2)
    for arr in (fx, fy, f):
        arr.setflags(write=False)
    return FrequencyGrid(height, width, fx, fy, f)


def make_grid(height: int, width: int) -> FrequencyGrid:
    if int(height) != height or int(width) != width or height < 2 or width < 2:
        raise InvalidShapeError(f"grid needs height, width >= 2, got ({height}, {width})")
    return _cached_grid(int(height), int(width))


def _check_real_field(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim < 2:
        raise InvalidShapeError(f"expected a 2D field, got shape {arr.shape}")
    if np.iscomplexobj(arr):
        raise InvalidInputError("expected a real-valued field")
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("field contains non-finite values")
    return arr


def fft2(image) -> np.ndarray:
    """Unnormalized forward 2D DFT over the last two axes."""
    arr = _check_real_field(image)
    return scipy.fft.fft2(arr, axes=(-2, -1), workers=worker_count())


def ifft2(spectrum, grid: FrequencyGrid | None = None, *, return_complex: bool = False) -> np.ndarray:
    """Inverse 2D DFT over the last two axes, scaled by ``1/(H*W)``.

    Returns the real part unless ``return_complex`` is set. When ``grid`` is
    given, the spectrum's trailing shape must match it.
    """
    spec = np.asarray(spectrum)
    if spec.ndim < 2:
        raise InvalidShapeError(f"expected a 2D spectrum, got shape {spec.shape}")
    if grid is not None and spec.shape[-2:] != grid.shape:
        raise InvalidShapeError(f"spectrum shape {spec.shape[-2:]} does not match grid {grid.shape}")
    out = scipy.fft.ifft2(spec, axes=(-2, -1), workers=worker_count())
    return out if return_complex else out.real


def ifft2_hermitian_half(half_spectrum, shape) -> np.ndarray:
    """Inverse transform of a Hermitian spectrum given as its first
    ``W//2 + 1`` columns; equals ``ifft2(full).real`` up to rounding."""
    return scipy.fft.irfft2(half_spectrum, s=tuple(shape), axes=(-2, -1), workers=worker_count())


def direct_dft2(image) -> np.ndarray:
    """Brute-force DFT by explicit summation; a test oracle only."""
    arr = _check_real_field(image)
    if arr.ndim != 2:
        raise InvalidShapeError("oracle accepts a single 2D field")
    m, n = arr.shape
    if m * n > ORACLE_MAX_PIXELS:
        raise OracleSizeError(f"direct DFT limited to {ORACLE_MAX_PIXELS} pixels, got {m * n}")
    rows = np.arange(m)
    cols = np.arange(n)
    out = np.empty((m, n), dtype=np.complex128)
    for k in range(m):
        row_phase = np.exp(-2j * np.pi * k * rows / m)  # over m
        for l in range(n):
            col_phase = np.exp(-2j * np.pi * l * cols / n)  # over n
            out[k, l] = np.sum(arr * row_phase[:, None] * col_phase[None, :])
    return out
