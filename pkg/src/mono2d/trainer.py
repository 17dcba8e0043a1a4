"""Toy joint-training demonstration.

Synthetic images contain one dark, gently curving band on a speckled
background; shifted domains remap intensities (contrast, offset, gamma) and
add multiplicative speckle. A minimal pixelwise head (affine map, 3x3
circular smoothing, logistic) segments either the raw image or the layer
output, and the filter bank is trained through its forward-mode tangents.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .autodiff import forward_with_tangents, grad_of_scalar
from .errors import ConfigError, DivergenceError, InvalidShapeError
from .filters import LowPassSpec
from .io import atomic_write_text
from .monogenic import EPSILON, channel_names, forward
from .params import FilterBank, init_bank

log = logging.getLogger(__name__)

# Source intensities stay inside this window so that every contrast/offset
# shift in the supported ranges maps into [0, 1] without clipping.
SOURCE_RANGE = (0.3125, 0.6875)
CONTRAST_RANGE = (0.4, 1.6)
OFFSET_RANGE = (-0.2, 0.2)
GAMMA_RANGE = (0.5, 2.0)


# -- data ----------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Per-sample intensity shift ranges; ``(lo, hi)`` tuples are sampled uniformly."""

    name: str = "source"
    contrast: tuple[float, float] = (1.0, 1.0)
    offset: tuple[float, float] = (0.0, 0.0)
    gamma: tuple[float, float] = (1.0, 1.0)
    noise: float = 0.0

    def __post_init__(self):
        for label, (lo, hi), (vmin, vmax) in (
            ("contrast", self.contrast, CONTRAST_RANGE),
            ("offset", self.offset, OFFSET_RANGE),
            ("gamma", self.gamma, GAMMA_RANGE),
        ):
            if not (vmin <= lo <= hi <= vmax):
                raise ConfigError(f"{label} range {(lo, hi)} must be ordered and inside {(vmin, vmax)}")
        if not (0.0 <= self.noise <= 1.0):
            raise ConfigError(f"noise level must lie in [0, 1], got {self.noise}")

    @property
    def is_identity(self) -> bool:
        return (self.contrast == (1.0, 1.0) and self.offset == (0.0, 0.0)
                and self.gamma == (1.0, 1.0) and self.noise == 0.0)

    @property
    def affine_only(self) -> bool:
        return self.gamma == (1.0, 1.0) and self.noise == 0.0


IDENTITY = DomainSpec()


def default_shift_suite() -> list[DomainSpec]:
    return [
        DomainSpec("contrast_offset", contrast=CONTRAST_RANGE, offset=OFFSET_RANGE),
        DomainSpec("offset_up", contrast=(0.8, 1.2), offset=(0.12, 0.2)),
        DomainSpec("low_contrast_dark", contrast=(0.4, 0.6), offset=(-0.2, -0.1)),
        DomainSpec("gamma", gamma=GAMMA_RANGE),
        DomainSpec("speckle", noise=0.12),
        DomainSpec("mixed", contrast=(0.6, 1.4), offset=(-0.15, 0.15), gamma=(0.7, 1.5), noise=0.06),
    ]


@dataclass(frozen=True)
class SyntheticSample:
    image: np.ndarray
    mask: np.ndarray
    domain_id: str


def _smooth_noise(rng, shape, sigma=0.8):
    n = gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    return n / (n.std() + 1e-12)


def render_band(shape, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw one clean source image and its band mask."""
    h, w = shape
    x = np.arange(w)
    y = np.arange(h)[:, None]
    thickness = h * rng.uniform(0.06, 0.16)
    centre = h * rng.uniform(0.35, 0.65)
    amp = h * rng.uniform(0.0, 0.08)
    period = w * rng.uniform(1.0, 2.5)
    phase = rng.uniform(0, 2 * np.pi)
    centre_line = centre + amp * np.sin(2 * np.pi * x / period + phase)
    mask = np.abs(y - centre_line[None, :]) < thickness / 2
    background = rng.uniform(0.56, 0.62)
    band = background - rng.uniform(0.16, 0.22)
    clean = np.where(mask, band, background)
    clean = gaussian_filter(clean, 0.8, mode="wrap")
    image = clean * (1.0 + 0.06 * _smooth_noise(rng, shape))
    return np.clip(image, *SOURCE_RANGE), mask


def apply_domain(image, spec: DomainSpec, rng) -> np.ndarray:
    if spec.is_identity:
        return image.copy()
    a = rng.uniform(*spec.contrast)
    b = rng.uniform(*spec.offset)
    g = rng.uniform(*spec.gamma)
    out = 0.5 + a * (image - 0.5) + b
    if g != 1.0:
        out = np.clip(out, 0.0, 1.0) ** g
    if spec.noise > 0:
        out = out * (1.0 + spec.noise * _smooth_noise(rng, image.shape))
    return np.clip(out, 0.0, 1.0)


def generate_dataset(count: int, shape=(64, 64), domain_spec: DomainSpec = IDENTITY,
                     seed: int = 0) -> list[SyntheticSample]:
    """Render ``count`` samples; base images depend only on ``(seed, shape)``.

    The same seed with different domain specs gives the same underlying bands,
    so shifted sets are paired with the source set.
    """
    if count < 1:
        raise ConfigError("count must be at least 1")
    if len(shape) != 2 or min(shape) < 8:
        raise ConfigError(f"shape must be 2D with sides >= 8, got {shape}")
    base_rng = np.random.default_rng([seed, 0])
    shift_rng = np.random.default_rng([seed, 1, _stable_hash(domain_spec.name)])
    samples = []
    for _ in range(count):
        image, mask = render_band(shape, base_rng)
        samples.append(SyntheticSample(apply_domain(image, domain_spec, shift_rng), mask, domain_spec.name))
    return samples


def _stable_hash(text: str) -> int:
    return int.from_bytes(text.encode("utf-8")[:8].ljust(8, b"\0"), "little") % (2**31)


def stack_samples(samples):
    return np.stack([s.image for s in samples]), np.stack([s.mask for s in samples]).astype(np.float64)


# -- metrics and losses --------------------------------------------------------

def dice_score(pred_mask, true_mask) -> float:
    a = np.asarray(pred_mask, dtype=bool)
    b = np.asarray(true_mask, dtype=bool)
    if a.shape != b.shape:
        raise InvalidShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(a, b).sum() / total)


def dice_bce_loss(prob, target, smooth: float = 1.0):
    """Per-batch mean of soft-Dice loss plus binary cross-entropy.

    Returns ``(loss, dloss/dlogit)``, using ``prob = sigmoid(logit)``.
    """
    axes = (-2, -1)
    n_pix = prob.shape[-1] * prob.shape[-2]
    p = np.clip(prob, 1e-12, 1 - 1e-12)
    bce = -np.mean(target * np.log(p) + (1 - target) * np.log1p(-p), axis=axes)
    inter = np.sum(prob * target, axis=axes)
    denom = np.sum(prob, axis=axes) + np.sum(target, axis=axes) + smooth
    dice = (2 * inter + smooth) / denom
    loss = np.mean(1.0 - dice + bce)
    d_bce = (prob - target) / n_pix
    d_dice_dp = (2 * target) / denom[..., None, None] - ((2 * inter + smooth) / denom**2)[..., None, None]
    d_logit = d_bce - d_dice_dp * prob * (1 - prob)
    return float(loss), d_logit / prob.shape[0]


# -- head ----------------------------------------------------------------------

_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


HEAD_GAIN = 10.0


@dataclass
class HeadModel:
    """Pixelwise affine map, 3x3 circular smoothing, logistic output.

    The affine map is multiplied by the fixed ``HEAD_GAIN`` so that Adam's
    step size (about one learning rate per step) can reach decisive logits
    within a desk-scale run.
    """

    weights: np.ndarray
    bias: float
    kernel: np.ndarray

    @classmethod
    def init(cls, n_channels: int, seed=None) -> "HeadModel":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, 0.1, n_channels), 0.0, np.full((3, 3), 1.0 / 9.0))

    def copy(self) -> "HeadModel":
        return HeadModel(self.weights.copy(), float(self.bias), self.kernel.copy())

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.weights, [self.bias], self.kernel.ravel()])

    def with_vector(self, vec) -> "HeadModel":
        c = self.weights.size
        return HeadModel(vec[:c].copy(), float(vec[c]), vec[c + 1:].reshape(3, 3).copy())

    def logits(self, x):
        """``x`` has shape ``(N, C, H, W)``; returns ``(logit, affine_map)``."""
        z = HEAD_GAIN * (np.tensordot(x, self.weights, axes=([-3], [0])) + self.bias)
        u = np.zeros_like(z)
        for (dy, dx), k in zip(_OFFSETS, self.kernel.ravel()):
            u += k * np.roll(z, (dy, dx), axis=(-2, -1))
        return u, z

    def predict_proba(self, x):
        u, _ = self.logits(x)
        return 1.0 / (1.0 + np.exp(-u))

    def backward(self, x, z, d_logit):
        """Return ``(grad wrt head vector, grad wrt input channels)``."""
        d_kernel = np.array([np.sum(d_logit * np.roll(z, off, axis=(-2, -1))) for off in _OFFSETS])
        d_z = np.zeros_like(z)
        for (dy, dx), k in zip(_OFFSETS, self.kernel.ravel()):
            d_z += k * np.roll(d_logit, (-dy, -dx), axis=(-2, -1))
        d_weights = HEAD_GAIN * np.einsum("nchw,nhw->c", x, d_z)
        d_bias = HEAD_GAIN * d_z.sum()
        d_x = HEAD_GAIN * d_z[:, None, :, :] * self.weights[None, :, None, None]
        return np.concatenate([d_weights, [d_bias], d_kernel]), d_x


# -- optimisation --------------------------------------------------------------

class Adam:
    """Adam over a flat parameter vector."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, params, grad, lr: float):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def cosine_lr(epoch: int, epochs: int, lr: float, min_lr: float) -> float:
    """Cosine annealing from ``lr`` at epoch 0 to ``min_lr`` at the final epoch."""
    if epochs <= 1:
        return lr
    return min_lr + 0.5 * (lr - min_lr) * (1.0 + math.cos(math.pi * epoch / (epochs - 1)))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    min_lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 200
    batch_size: int = 8
    seed: int = 0
    n_scales: int = 8
    val_fraction: float = 0.1
    cutoff: float = 0.5
    order: int = 10
    epsilon: float = EPSILON
    rescale: str = "image"

    def __post_init__(self):
        if not self.learning_rate > self.min_lr > 0:
            raise ConfigError("need learning_rate > min_lr > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in (0, 1)")
        LowPassSpec(self.cutoff, self.order)

    @property
    def lpf(self) -> LowPassSpec:
        return LowPassSpec(self.cutoff, self.order)


@dataclass
class SegmentationModel:
    """A trained (or initial) head plus optional filter bank."""

    head: HeadModel
    bank: FilterBank | None
    mode: str = "both"
    lpf: LowPassSpec = field(default_factory=LowPassSpec)
    epsilon: float = EPSILON
    rescale: str = "image"

    @property
    def use_mono2d(self) -> bool:
        return self.bank is not None

    def features(self, images) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if self.bank is None:
            return images[:, None, :, :]
        return forward(images, self.bank, self.lpf, self.mode, self.epsilon, self.rescale).channels

    def predict_proba(self, images) -> np.ndarray:
        return self.head.predict_proba(self.features(images))

    def predict(self, images) -> np.ndarray:
        return self.predict_proba(images) > 0.5

    def mean_dice(self, images, masks, batch: int = 64) -> float:
        scores = []
        for i in range(0, len(images), batch):
            pred = self.predict(images[i:i + batch])
            scores.extend(dice_score(p, m) for p, m in zip(pred, masks[i:i + batch]))
        return float(np.mean(scores))


@dataclass
class TrainResult:
    model: SegmentationModel
    initial_bank: FilterBank | None
    log: list[dict]
    best_val_dice: float
    best_epoch: int
    train_indices: np.ndarray
    val_indices: np.ndarray


def split_indices(count: int, val_fraction: float, seed: int):
    order = np.random.default_rng([seed, 2]).permutation(count)
    n_val = max(1, int(round(count * val_fraction))) if count > 1 else 0
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train(config: TrainConfig, dataset, use_mono2d: bool = True, mode: str = "both",
          freeze_layer: bool = False, bank: FilterBank | None = None,
          log_path=None) -> TrainResult:
    """Jointly fit the head and (unless frozen) the filter bank.

    Minimizes soft-Dice plus BCE with Adam under a per-epoch cosine schedule.
    The model with the best validation Dice is kept.
    """
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    channel_names(mode)
    images, masks = stack_samples(dataset)
    shape = images.shape[-2:]
    if use_mono2d and bank is None:
        bank = init_bank(config.n_scales, *shape, seed=config.seed)
    initial_bank = bank.copy() if use_mono2d else None
    bank = bank.copy() if use_mono2d else None
    n_channels = len(channel_names(mode)) if use_mono2d else 1
    head = HeadModel.init(n_channels, seed=[config.seed, 3])
    model = SegmentationModel(head, bank, mode, config.lpf, config.epsilon, config.rescale)

    train_idx, val_idx = split_indices(len(dataset), config.val_fraction, config.seed)
    if len(val_idx) == 0:
        val_idx = train_idx
    trainable_bank = use_mono2d and not freeze_layer
    head_size = head.vector.size
    opt = Adam(head_size + (2 * bank.n_scales if trainable_bank else 0), config.beta1, config.beta2)

    cached = None
    if use_mono2d and freeze_layer:
        cached = model.features(images)
    elif not use_mono2d:
        cached = images[:, None, :, :]

    best = (model.mean_dice(images[val_idx], masks[val_idx]), -1, head.copy(), bank.copy() if bank else None)
    rng = np.random.default_rng([config.seed, 4])
    history = []
    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config.epochs, config.learning_rate, config.min_lr)
        order = rng.permutation(train_idx)
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            if cached is not None:
                x, bundle = cached[idx], None
            else:
                feats, bundle = forward_with_tangents(images[idx], model.bank, config.lpf, mode,
                                                      config.epsilon, config.rescale)
                x = feats.channels
            logit, z = model.head.logits(x)
            prob = 1.0 / (1.0 + np.exp(-logit))
            loss, d_logit = dice_bce_loss(prob, masks[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            g_head, d_x = model.head.backward(x, z, d_logit)
            params = model.head.vector
            grads = g_head
            if trainable_bank:
                params = np.concatenate([params, model.bank.vector])
                grads = np.concatenate([grads, grad_of_scalar(bundle, d_x)])
            params = opt.step(params, grads, lr)
            model.head = model.head.with_vector(params[:head_size])
            if trainable_bank:
                model.bank = model.bank.with_vector(params[head_size:])
            losses.append(loss)
        val_dice = model.mean_dice(images[val_idx], masks[val_idx]) if cached is None else \
            _cached_dice(model.head, cached[val_idx], masks[val_idx])
        row = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses)), "val_dice": val_dice}
        history.append(row)
        if val_dice > best[0]:
            best = (val_dice, epoch, model.head.copy(), model.bank.copy() if model.bank else None)
        log.debug("epoch %d lr %.3g loss %.4f val_dice %.4f", epoch, lr, row["train_loss"], val_dice)

    model.head, model.bank = best[2], best[3]
    if log_path is not None:
        write_metrics_csv(log_path, history, seed=config.seed)
    return TrainResult(model, initial_bank, history, best[0], best[1], train_idx, val_idx)


def _cached_dice(head: HeadModel, x, masks) -> float:
    pred = head.predict_proba(x) > 0.5
    return float(np.mean([dice_score(p, m) for p, m in zip(pred, masks)]))


# -- evaluation ----------------------------------------------------------------

@dataclass
class SSDGReport:
    source_dice: float
    domain_dice: dict[str, float]

    @property
    def shifted_mean(self) -> float:
        return float(np.mean(list(self.domain_dice.values()))) if self.domain_dice else float("nan")

    def gap(self, name: str) -> float:
        return self.source_dice - self.domain_dice[name]

    def rows(self) -> list[tuple[str, float]]:
        return [("source", self.source_dice), *self.domain_dice.items(), ("shifted_mean", self.shifted_mean)]


TEST_SEED_OFFSET = 100


def make_test_sets(count: int, shape=(64, 64), seed: int = 0, suite=None):
    """Held-out source set and shifted copies of the same base images."""
    suite = default_shift_suite() if suite is None else suite
    test_seed = seed + TEST_SEED_OFFSET
    source = generate_dataset(count, shape, IDENTITY, seed=test_seed)
    shifted = {spec.name: generate_dataset(count, shape, spec, seed=test_seed) for spec in suite}
    return source, shifted


def evaluate_ssdg(model: SegmentationModel, source_val, shifted_sets: dict) -> SSDGReport:
    """Dice on the source set and on each named shifted set."""
    images, masks = stack_samples(source_val)
    source = model.mean_dice(images, masks)
    per_domain = {}
    for name, samples in shifted_sets.items():
        x, y = stack_samples(samples)
        per_domain[name] = model.mean_dice(x, y)
    return SSDGReport(source, per_domain)


def write_metrics_csv(path, history: list[dict], seed=None, domain_dice: dict | None = None):
    """One row per epoch; per-domain Dice columns are filled on the last row only."""
    domains = sorted(domain_dice) if domain_dice else []
    buf = io.StringIO()
    buf.write(f"# seed = {seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "lr", "train_loss", "val_dice"] + [f"dice_{d}" for d in domains])
    for i, row in enumerate(history):
        values = [row["epoch"], repr(row["lr"]), repr(row["train_loss"]), repr(row["val_dice"])]
        if domains:
            last = i == len(history) - 1
            values += [repr(domain_dice[d]) if last else "" for d in domains]
        writer.writerow(values)
    atomic_write_text(path, buf.getvalue())
