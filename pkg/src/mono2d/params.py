"""Bounded reparameterization of the trainable log-Gabor parameters.

The optimizer only ever touches the unbounded ``f0_star`` and
``sigma_r_star``; center frequencies and bandwidths are derived views that
stay strictly inside ``(f0_min, f0_max)`` and ``(0, 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ConfigError

F0_MAX = 0.5
_ONE_BELOW = np.nextafter(1.0, 0.0)
_TINY = np.finfo(np.float64).tiny


def sigmoid(x):
    """Logistic function, evaluated branch-wise so it never overflows."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def sigmoid_slope(x):
    """``s * (1 - s)`` computed as ``e / (1 + e)**2`` with ``e = exp(-|x|)``."""
    e = np.exp(-np.abs(np.asarray(x, dtype=np.float64)))
    out = e / (1.0 + e) ** 2
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def bound_f0(f0_star, f0_min: float, f0_max: float = F0_MAX):
    if not f0_min < f0_max:
        raise ConfigError(f"need f0_min < f0_max, got {f0_min} >= {f0_max}")
    f0 = f0_min + sigmoid(f0_star) * (f0_max - f0_min)
    # saturated sigmoid would otherwise land exactly on an endpoint
    f0 = np.clip(f0, np.nextafter(f0_min, np.inf), np.nextafter(f0_max, -np.inf))
    return f0 if np.ndim(f0) else float(f0)


def bound_sigma_r(sigma_r_star):
    s = np.clip(sigmoid(sigma_r_star), _TINY, _ONE_BELOW)
    return s if np.ndim(s) else float(s)


def bound_gradients(f0_star, sigma_r_star, f0_min: float, f0_max: float = F0_MAX):
    """Chain factors ``(df0/df0_star, dsigma_r/dsigma_r_star)``."""
    return sigmoid_slope(f0_star) * (f0_max - f0_min), sigmoid_slope(sigma_r_star)


def f0_bounds(height: int, width: int) -> tuple[float, float]:
    """Nyquist-derived ``(f0_min, f0_max)`` in cycles/pixel for an image shape."""
    return 1.0 / max(height, width), F0_MAX


@dataclass(eq=False)
class FilterBank:
    """Unbounded parameters for ``n`` log-Gabor scales plus their bounds.

    ``f0`` and ``sigma_r`` are recomputed from the unbounded arrays on every
    access, so they can never go stale after an update.
    """

    f0_star: np.ndarray
    sigma_r_star: np.ndarray
    f0_min: float
    f0_max: float = F0_MAX
    seed: int | None = field(default=None)

    def __post_init__(self):
        self.f0_star = np.array(self.f0_star, dtype=np.float64).reshape(-1)
        self.sigma_r_star = np.array(self.sigma_r_star, dtype=np.float64).reshape(-1)
        if self.f0_star.size == 0:
            raise ConfigError("a filter bank needs at least one scale")
        if self.f0_star.shape != self.sigma_r_star.shape:
            raise ConfigError("f0_star and sigma_r_star must have the same length")
        if not 0 < self.f0_min < self.f0_max:
            raise ConfigError(f"invalid f0 bounds ({self.f0_min}, {self.f0_max})")

    @property
    def n_scales(self) -> int:
        return self.f0_star.size

    @property
    def f0(self) -> np.ndarray:
        return np.atleast_1d(bound_f0(self.f0_star, self.f0_min, self.f0_max))

    @property
    def sigma_r(self) -> np.ndarray:
        return np.atleast_1d(bound_sigma_r(self.sigma_r_star))

    def chain_factors(self):
        return bound_gradients(self.f0_star, self.sigma_r_star, self.f0_min, self.f0_max)

    @property
    def vector(self) -> np.ndarray:
        """Unbounded parameters ordered ``(f0_star[0..n), sigma_r_star[0..n))``."""
        return np.concatenate([self.f0_star, self.sigma_r_star])

    def with_vector(self, vec) -> "FilterBank":
        vec = np.asarray(vec, dtype=np.float64)
        n = self.n_scales
        if vec.shape != (2 * n,):
            raise ConfigError(f"expected {2 * n} parameters, got shape {vec.shape}")
        return FilterBank(vec[:n], vec[n:], self.f0_min, self.f0_max, self.seed)

    def copy(self) -> "FilterBank":
        return FilterBank(self.f0_star.copy(), self.sigma_r_star.copy(), self.f0_min, self.f0_max, self.seed)

    def key(self) -> tuple:
        """Hashable snapshot used for kernel caching."""
        return (self.f0_star.tobytes(), self.sigma_r_star.tobytes(), self.f0_min, self.f0_max)

    def equals(self, other: "FilterBank") -> bool:
        """Bit-for-bit comparison of parameters and bounds."""
        return self.key() == other.key()


def init_bank(n_scales: int, height: int, width: int, seed=None) -> FilterBank:
    """Draw ``f0_star ~ N(0, 1)`` and ``sigma_r_star ~ N(0, 0.05)`` per scale."""
    if int(n_scales) != n_scales or n_scales < 1:
        raise ConfigError(f"n_scales must be a positive integer, got {n_scales}")
    f0_min, f0_max = f0_bounds(height, width)
    rng = np.random.default_rng(seed)
    f0_star = rng.standard_normal(int(n_scales))
    sigma_r_star = rng.normal(0.0, 0.05, int(n_scales))
    return FilterBank(f0_star, sigma_r_star, f0_min, f0_max, seed)


def bank_for(f0, sigma_r, f0_min: float, f0_max: float = F0_MAX) -> FilterBank:
    """Build a bank whose derived parameters equal the given bounded values."""
    f0 = np.atleast_1d(np.asarray(f0, dtype=np.float64))
    sigma_r = np.atleast_1d(np.asarray(sigma_r, dtype=np.float64))
    f0_star = logit((f0 - f0_min) / (f0_max - f0_min))
    return FilterBank(f0_star, logit(sigma_r), f0_min, f0_max)


# -- plain-text checkpoints ----------------------------------------------------

def _fmt(x: float) -> str:
    return float(x).hex()


def _parse_float(text: str) -> float:
    text = text.strip()
    try:
        return float.fromhex(text) if "0x" in text.lower() else float(text)
    except ValueError as exc:
        raise CheckpointError(f"bad number {text!r}") from exc


def bank_to_lines(bank: FilterBank, prefix: str = "") -> list[str]:
    lines = [
        f"{prefix}n_scales = {bank.n_scales}",
        f"{prefix}f0_min = {_fmt(bank.f0_min)}",
        f"{prefix}f0_max = {_fmt(bank.f0_max)}",
    ]
    for i in range(bank.n_scales):
        lines.append(f"{prefix}f0_star.{i} = {_fmt(bank.f0_star[i])}")
    for i in range(bank.n_scales):
        lines.append(f"{prefix}sigma_r_star.{i} = {_fmt(bank.sigma_r_star[i])}")
    return lines


def read_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines, skipping blanks and ``#`` comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CheckpointError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def bank_from_mapping(kv: dict[str, str], prefix: str = "") -> FilterBank:
    try:
        n = int(kv[f"{prefix}n_scales"])
        f0_min = _parse_float(kv[f"{prefix}f0_min"])
        f0_max = _parse_float(kv[f"{prefix}f0_max"])
        f0_star = [_parse_float(kv[f"{prefix}f0_star.{i}"]) for i in range(n)]
        sigma_r_star = [_parse_float(kv[f"{prefix}sigma_r_star.{i}"]) for i in range(n)]
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"incomplete filter bank checkpoint: {exc}") from exc
    try:
        return FilterBank(f0_star, sigma_r_star, f0_min, f0_max)
    except ConfigError as exc:
        raise CheckpointError(str(exc)) from exc


def dumps_bank(bank: FilterBank) -> str:
    return "# mono2d filter bank\n" + "\n".join(bank_to_lines(bank)) + "\n"


def loads_bank(text: str) -> FilterBank:
    return bank_from_mapping(read_key_values(text))
