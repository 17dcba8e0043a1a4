"""Input checks shared by the estimators and the CLI."""
import numpy as np
from sklearn.utils import check_array

from .errors import InvalidInputError, InvalidShapeError


def check_images(X, min_side: int = 2) -> np.ndarray:
    """Return ``X`` as a float64 ``(n_images, H, W)`` array.

    A single 2D image is promoted to a batch of one.
    """
    arr = np.asarray(X)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise InvalidShapeError(f"expected images of shape (n, H, W), got {arr.shape}")
    if min(arr.shape[1:]) < min_side or arr.shape[0] < 1:
        raise InvalidShapeError(f"images must be at least {min_side}x{min_side}, got {arr.shape[1:]}")
    try:
        return check_array(arr, allow_nd=True, dtype=np.float64, ensure_all_finite=True,
                           ensure_min_samples=1, ensure_min_features=1)
    except ValueError as exc:
        raise InvalidInputError(str(exc)) from exc


def check_masks(y, images: np.ndarray) -> np.ndarray:
    masks = np.asarray(y)
    if masks.ndim == 2:
        masks = masks[None]
    if masks.shape != images.shape:
        raise InvalidShapeError(f"mask shape {masks.shape} does not match images {images.shape}")
    if not np.all((masks == 0) | (masks == 1)):
        raise InvalidInputError("masks must be binary")
    return masks.astype(bool)
