"""8-bit raster input/output.

Arrays and view images travel as lossless 8-bit PNG; intensities map to
[0, 1] by /255 on load and round(v*255) with clamping on save. Masks are
8-bit grayscale with >127 meaning salient; saliency maps are grayscale
probability rasters.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .tensor import get_default_dtype


def load_image(path) -> np.ndarray:
    """(H, W, 3) array in [0, 1], current default dtype."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing image file {path}")
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return arr.astype(get_default_dtype()) / 255.0


def save_image(path, values: np.ndarray) -> None:
    """Save [0, 1] intensities as 8-bit RGB (or grayscale for 1 channel)."""
    arr = np.asarray(values)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    q = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(q).save(path)


def load_gray(path) -> np.ndarray:
    """(H, W) array in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing image file {path}")
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    return arr.astype(get_default_dtype()) / 255.0


def load_mask(path) -> np.ndarray:
    """Binary (H, W) mask; gray levels above 127 count as salient."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing mask file {path}")
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    return (arr > 127).astype(np.int64)


def save_mask(path, mask: np.ndarray) -> None:
    q = np.where(np.asarray(mask) > 0, 255, 0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(q).save(path)


def save_saliency_map(path, prob: np.ndarray) -> None:
    """Probability map to 8-bit grayscale: round(p*255)."""
    q = np.clip(np.rint(np.asarray(prob) * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(q).save(path)
