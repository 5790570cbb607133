"""PNG image IO and mask binarization.

Only PNG is accepted, images must be 8-bit grayscale or RGB, and masks must
be single-channel with value >= 128 meaning "remove". Anything else is
rejected rather than converted.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidInputError

MASK_THRESHOLD = 128


def _open_png(data: bytes, what: str) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise InvalidInputError(f"could not decode {what}: {exc}") from exc
    if img.format != "PNG":
        raise InvalidInputError(f"{what} must be PNG, got {img.format}")
    return img


def decode_image(data: bytes) -> np.ndarray:
    """PNG bytes to a uint8 array, (h, w) for grayscale or (h, w, 3) for RGB."""
    img = _open_png(data, "image")
    if img.mode not in ("L", "RGB"):
        raise InvalidInputError(f"image mode must be L or RGB, got {img.mode}")
    return np.asarray(img, dtype=np.uint8)


def decode_mask(data: bytes) -> np.ndarray:
    """Single-channel PNG bytes to a boolean mask (>= 128 means remove)."""
    img = _open_png(data, "mask")
    if img.mode == "1":
        img = img.convert("L")
    if img.mode != "L":
        raise InvalidInputError(f"mask must be single-channel, got mode {img.mode}")
    return np.asarray(img, dtype=np.uint8) >= MASK_THRESHOLD


def encode_png(array: np.ndarray) -> bytes:
    """uint8 array to PNG bytes (grayscale or RGB), deterministically."""
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise InvalidInputError(f"expected uint8 array, got {arr.dtype}")
    if arr.ndim == 2:
        img = Image.fromarray(arr, mode="L")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        img = Image.fromarray(arr, mode="RGB")
    else:
        raise InvalidInputError(f"cannot encode array of shape {arr.shape}")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def load_image(path: str | Path) -> np.ndarray:
    return decode_image(Path(path).read_bytes())


def load_mask(path: str | Path) -> np.ndarray:
    return decode_mask(Path(path).read_bytes())


def save_image(array: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(array))


def mask_to_png(mask: np.ndarray) -> bytes:
    """Boolean mask to the canonical single-channel PNG (255 inside, 0 outside)."""
    return encode_png(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))
