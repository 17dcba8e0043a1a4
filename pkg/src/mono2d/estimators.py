"""scikit-learn style wrappers around the layer and the toy segmenter."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_images, check_masks
from .autodiff import forward_with_tangents
from .filters import LowPassSpec
from .monogenic import EPSILON, channel_names, forward
from .params import FilterBank, init_bank
from .trainer import SegmentationModel, SyntheticSample, TrainConfig, dice_score, train


class Mono2D(TransformerMixin, BaseEstimator):
    """Monogenic local-phase / phase-asymmetry feature extractor.

    ``fit`` draws the filter bank for the training image shape (or copies
    ``bank`` when given); ``transform`` maps ``(n, H, W)`` images to
    ``(n, C, H, W)`` channels rescaled to ``[0, 1]``. Joint training of the
    bank happens in :class:`Mono2DSegmenter`.

    Parameters
    ----------
    n_scales : int, default=8
        Number of log-Gabor scales summed before phase extraction.
    cutoff, order : float, int, default=(0.5, 10)
        Butterworth low-pass settings.
    mode : {'phase', 'asym', 'both'}, default='both'
        Which channels to emit.
    epsilon : float, default=1e-12
        Stabilizer for the asymmetry denominator and phase derivative.
    rescale : {'image', 'batch', 'none'}, default='image'
        Min-max rescale per image and channel, per batch and channel, or off.
    include_input : bool, default=False
        Append the input image as an extra channel.
    random_state : int or None
        Seed for the bank initialization.
    bank : FilterBank or None
        Use this bank instead of drawing one.
    """

    def __init__(self, n_scales=8, cutoff=0.5, order=10, mode="both", epsilon=EPSILON,
                 rescale="image", include_input=False, random_state=None, bank=None):
        self.n_scales = n_scales
        self.cutoff = cutoff
        self.order = order
        self.mode = mode
        self.epsilon = epsilon
        self.rescale = rescale
        self.include_input = include_input
        self.random_state = random_state
        self.bank = bank

    def fit(self, X, y=None):
        X = check_images(X)
        channel_names(self.mode)
        self.lpf_ = LowPassSpec(self.cutoff, self.order)
        if self.bank is not None:
            self.bank_ = self.bank.copy()
        else:
            self.bank_ = init_bank(self.n_scales, *X.shape[1:], seed=self.random_state)
        self.image_shape_ = X.shape[1:]
        self.n_channels_ = len(self.get_feature_names_out())
        return self

    def get_feature_names_out(self, input_features=None):
        names = channel_names(self.mode)
        return np.array(names + (("input",) if self.include_input else ()), dtype=object)

    def _append_input(self, channels, X):
        if not self.include_input:
            return channels
        return np.concatenate([channels, X[:, None]], axis=1)

    def transform(self, X):
        check_is_fitted(self, "bank_")
        X = check_images(X)
        feats = forward(X, self.bank_, self.lpf_, self.mode, self.epsilon, self.rescale)
        return self._append_input(feats.channels, X)

    def transform_with_tangents(self, X):
        """Return ``(channels, TangentBundle)`` for the current bank."""
        check_is_fitted(self, "bank_")
        X = check_images(X)
        feats, bundle = forward_with_tangents(X, self.bank_, self.lpf_, self.mode, self.epsilon, self.rescale)
        return self._append_input(feats.channels, X), bundle


class Mono2DSegmenter(BaseEstimator):
    """Pixelwise segmenter with an optional trainable Mono2D input layer.

    ``fit(X, y)`` takes images ``(n, H, W)`` in ``[0, 1]`` and binary masks of
    the same shape. With ``use_mono2d=False`` the head sees the raw image
    (the lower-bound baseline); ``freeze_layer=True`` keeps the bank at its
    initialization.
    """

    def __init__(self, use_mono2d=True, freeze_layer=False, mode="both", n_scales=8,
                 learning_rate=1e-3, min_lr=1e-5, epochs=200, batch_size=8, val_fraction=0.1,
                 cutoff=0.5, order=10, epsilon=EPSILON, rescale="image", random_state=0, bank=None):
        self.use_mono2d = use_mono2d
        self.freeze_layer = freeze_layer
        self.mode = mode
        self.n_scales = n_scales
        self.learning_rate = learning_rate
        self.min_lr = min_lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.val_fraction = val_fraction
        self.cutoff = cutoff
        self.order = order
        self.epsilon = epsilon
        self.rescale = rescale
        self.random_state = random_state
        self.bank = bank

    def _config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, min_lr=self.min_lr, epochs=self.epochs,
                           batch_size=self.batch_size, seed=self.random_state or 0, n_scales=self.n_scales,
                           val_fraction=self.val_fraction, cutoff=self.cutoff, order=self.order,
                           epsilon=self.epsilon, rescale=self.rescale)

    def fit(self, X, y, log_path=None):
        X = check_images(X)
        masks = check_masks(y, X)
        samples = [SyntheticSample(img, m, "source") for img, m in zip(X, masks)]
        result = train(self._config(), samples, use_mono2d=self.use_mono2d, mode=self.mode,
                       freeze_layer=self.freeze_layer, bank=self.bank, log_path=log_path)
        self.model_ = result.model
        self.initial_bank_ = result.initial_bank
        self.history_ = result.log
        self.best_val_dice_ = result.best_val_dice
        self.image_shape_ = X.shape[1:]
        return self

    @property
    def bank_(self) -> FilterBank | None:
        check_is_fitted(self, "model_")
        return self.model_.bank

    def _check(self, X):
        check_is_fitted(self, "model_")
        return check_images(X)

    def predict_proba(self, X):
        return self.model_.predict_proba(self._check(X))

    def predict(self, X):
        return self.predict_proba(X) > 0.5

    def score(self, X, y):
        """Mean per-image Dice of the predicted masks."""
        X = self._check(X)
        masks = check_masks(y, X)
        return float(np.mean([dice_score(p, m) for p, m in zip(self.predict(X), masks)]))

    @classmethod
    def from_model(cls, model: SegmentationModel, **params) -> "Mono2DSegmenter":
        est = cls(use_mono2d=model.use_mono2d, mode=model.mode, **params)
        est.model_ = model
        est.initial_bank_ = None
        est.history_ = []
        est.best_val_dice_ = float("nan")
        est.image_shape_ = None
        return est
