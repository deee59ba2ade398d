import base64
import io
import logging
import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from app.domain.errors import ContractViolation, DatasetError
from app.domain.masking import as_image

logger = logging.getLogger(__name__)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """round(255*v) with values clipped to [0,1]"""
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_png(path: str) -> np.ndarray:
    """Load an 8-bit image as an H x W x 3 float64 array in [0,1]."""
    if not os.path.exists(path):
        raise DatasetError("Image file not found", path=path)
    try:
        with Image.open(path) as picture:
            rgb = picture.convert('RGB')
            pixels = np.asarray(rgb, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        logger.error(f"Could not decode image {path}: {e}")
        raise DatasetError(f"Unreadable or corrupt image ({e})", path=path)
    return pixels


def write_png(path: str, img: np.ndarray) -> str:
    image = as_image(img)
    _ensure_parent(path)
    Image.fromarray(to_uint8(image)).save(path, format='PNG')
    logger.debug(f"Wrote {image.shape[1]}x{image.shape[0]} RGB PNG to {path}")
    return path


def write_gray_png(path: str, values: np.ndarray) -> str:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 2:
        raise ContractViolation(f"Grayscale map must be 2-D, got shape {array.shape}")
    _ensure_parent(path)
    Image.fromarray(to_uint8(array)).save(path, format='PNG')
    logger.debug(f"Wrote {array.shape[1]}x{array.shape[0]} grayscale PNG to {path}")
    return path


def encode_png_base64(img: np.ndarray) -> str:
    buffer = io.BytesIO()
    Image.fromarray(to_uint8(as_image(img))).save(buffer, format='PNG')
    return base64.b64encode(buffer.getvalue()).decode('ascii')


def decode_png_base64(data: str) -> np.ndarray:
    if data.startswith("data:image/png;base64,"):
        data = data.split(",", 1)[1]
    raw = base64.b64decode(data)
    with Image.open(io.BytesIO(raw)) as picture:
        return np.asarray(picture.convert('RGB'), dtype=np.float64) / 255.0


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent and not os.path.exists(parent):
        os.makedirs(parent)
