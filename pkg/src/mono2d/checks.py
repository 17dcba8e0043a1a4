"""Verification and reporting routines behind the ``gradcheck``,
``histcompare`` and ``bench`` commands."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import wasserstein_distance

from .autodiff import fd_oracle, forward_with_tangents, grad_of_scalar
from .filters import LowPassSpec
from .monogenic import EPSILON, forward
from .params import FilterBank, init_bank

HIST_BINS = 64


# -- gradient check ------------------------------------------------------------

@dataclass
class GradcheckReport:
    tolerance: float
    abs_floor: float
    max_rel: dict = field(default_factory=lambda: {"f0_star": 0.0, "sigma_r_star": 0.0})
    n_checked: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def gradient_check(image, bank: FilterBank, lpf: LowPassSpec = LowPassSpec(), step: float = 1e-4,
                   tolerance: float = 1e-4, abs_floor: float = 1e-8, perturb_analytic: float = 0.0,
                   report: GradcheckReport | None = None, label: str = "") -> GradcheckReport:
    """Compare tangent gradients of the mean phase channel against central differences.

    Gradients with ``|fd| > abs_floor`` must match to relative error
    ``tolerance``; smaller ones to absolute error ``abs_floor``.
    Rescale statistics are frozen at the unperturbed pass on both routes.
    ``perturb_analytic`` scales the analytic gradient by ``1 + perturb_analytic``
    to let the harness check that it can fail.
    """
    report = report or GradcheckReport(tolerance, abs_floor)
    image = np.asarray(image, dtype=np.float64)
    feats, bundle = forward_with_tangents(image, bank, lpf, "phase")
    analytic = grad_of_scalar(bundle, np.full(feats.channels.shape, 1.0 / image.size))
    analytic = analytic * (1.0 + perturb_analytic)
    n = bank.n_scales
    for p in range(2 * n):
        fd = fd_oracle(image, bank, lpf, "phase", lambda ch: float(ch[0].mean()), p, step)
        kind = "f0_star" if p < n else "sigma_r_star"
        err = abs(analytic[p] - fd)
        report.n_checked += 1
        if abs(fd) > abs_floor:
            rel = err / abs(fd)
            report.max_rel[kind] = max(report.max_rel[kind], rel)
            bad = rel > tolerance
        else:
            bad = err > abs_floor
        if bad:
            report.failures.append((label, f"{kind}[{p % n}]", float(analytic[p]), float(fd)))
    return report


def gradient_check_suite(seed: int, shape, n_scales: int, configs: int = 4, **kwargs) -> GradcheckReport:
    """Run :func:`gradient_check` on ``configs`` random (image, bank) pairs."""
    rng = np.random.default_rng(seed)
    report = None
    for k in range(configs):
        image = rng.random(shape)
        bank = init_bank(n_scales, *shape, seed=[seed, k])
        report = gradient_check(image, bank, report=report, label=f"config {k}", **kwargs)
    return report


# -- histogram divergence ------------------------------------------------------

def histogram(images, bins: int = HIST_BINS) -> np.ndarray:
    counts, _ = np.histogram(np.asarray(images).ravel(), bins=bins, range=(0.0, 1.0))
    return counts / counts.sum()


def histogram_distance(set_a, set_b, bins: int = HIST_BINS) -> float:
    """1D Wasserstein distance between the pooled-pixel histograms of two sets."""
    centres = (np.arange(bins) + 0.5) / bins
    return float(wasserstein_distance(centres, centres, histogram(set_a, bins), histogram(set_b, bins)))


def compare_histograms(set_a, set_b, bank: FilterBank, lpf: LowPassSpec = LowPassSpec(),
                       epsilon: float = EPSILON, bins: int = HIST_BINS) -> dict:
    """Raw-intensity versus phase-channel histogram distances between two image sets."""
    phase_a = [forward(img, bank, lpf, "phase", epsilon).channels[0] for img in set_a]
    phase_b = [forward(img, bank, lpf, "phase", epsilon).channels[0] for img in set_b]
    raw_a = [np.clip(img, 0.0, 1.0) for img in set_a]
    raw_b = [np.clip(img, 0.0, 1.0) for img in set_b]
    return {
        "raw": histogram_distance(np.concatenate([a.ravel() for a in raw_a]),
                                  np.concatenate([b.ravel() for b in raw_b]), bins),
        "phase": histogram_distance(np.concatenate([a.ravel() for a in phase_a]),
                                    np.concatenate([b.ravel() for b in phase_b]), bins),
    }


# -- timing --------------------------------------------------------------------

@dataclass
class BenchReport:
    shape: tuple
    n_scales: int
    repetitions: int
    forward_mean: float
    forward_std: float
    tangent_mean: float
    tangent_std: float

    @property
    def ratio(self) -> float:
        return self.tangent_mean / self.forward_mean

    @property
    def bound(self) -> float:
        return (1 + 2 * self.n_scales) * 1.25

    @property
    def ok(self) -> bool:
        return self.ratio <= self.bound


def benchmark(shape=(256, 256), n_scales: int = 8, repetitions: int = 10, seed: int = 0) -> BenchReport:
    """Per-image latency of the plain and tangent-carrying forward passes."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rng = np.random.default_rng(seed)
    image = rng.random(shape)
    bank = init_bank(n_scales, *shape, seed=seed)
    forward(image, bank)
    forward_with_tangents(image, bank)

    def timed(fn):
        out = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            fn(image, bank)
            out.append(time.perf_counter() - t0)
        return np.mean(out), np.std(out)

    f_mean, f_std = timed(forward)
    t_mean, t_std = timed(forward_with_tangents)
    return BenchReport(tuple(shape), n_scales, repetitions, f_mean, f_std, t_mean, t_std)
