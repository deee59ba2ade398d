"""
Flat binary layout of a trained classifier head:

    offset  size  field
    0       8     magic b"VCIHEAD\\0"
    8       4     version (uint32, 1)
    12      4     reserved (uint32, 0)
    16      4     D (uint32)
    20      4     H (uint32)
    24      8     dropout (float64)
    32      ...   W1 (D x H row-major), b1 (H), W2 (H), b2 (1), float64

All fields little-endian.
"""
import logging
import os
import struct

import numpy as np

from app.domain.errors import HeadFormatError
from app.domain.models import ClassifierHead

logger = logging.getLogger(__name__)

MAGIC = b"VCIHEAD\0"
VERSION = 1
_HEADER = struct.Struct("<8sII")
_DIMS = struct.Struct("<IId")


def head_to_bytes(head: ClassifierHead) -> bytes:
    d, h = head.input_dim, head.hidden_dim
    parts = [
        _HEADER.pack(MAGIC, VERSION, 0),
        _DIMS.pack(d, h, float(head.dropout)),
    ]
    for name, expected in (('w1', (d, h)), ('b1', (h,)), ('w2', (h,)), ('b2', (1,))):
        values = np.asarray(head.parameters()[name], dtype='<f8')
        if values.shape != expected:
            raise HeadFormatError(f"Parameter {name} has shape {values.shape}, expected {expected}")
        parts.append(np.ascontiguousarray(values).tobytes())
    return b"".join(parts)


def head_from_bytes(raw: bytes) -> ClassifierHead:
    fixed = _HEADER.size + _DIMS.size
    if len(raw) < fixed:
        raise HeadFormatError(f"Head file truncated: {len(raw)} bytes, header needs {fixed}")
    magic, version, _reserved = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise HeadFormatError(f"Not a classifier head file (magic {magic!r})")
    if version != VERSION:
        raise HeadFormatError(f"Unsupported head file version {version}")
    d, h, dropout = _DIMS.unpack_from(raw, _HEADER.size)
    count = d * h + h + h + 1
    if len(raw) != fixed + 8 * count:
        raise HeadFormatError(f"Head file size {len(raw)} does not match D={d}, H={h}")

    values = np.frombuffer(raw, dtype='<f8', offset=fixed).astype(np.float64)
    w1 = values[:d * h].reshape(d, h)
    b1 = values[d * h:d * h + h]
    w2 = values[d * h + h:d * h + 2 * h]
    b2 = values[d * h + 2 * h:]
    return ClassifierHead(w1=w1.copy(), b1=b1.copy(), w2=w2.copy(), b2=b2.copy(), dropout=dropout)


def save_head(head: ClassifierHead, path: str) -> str:
    parent = os.path.dirname(path)
    if parent and not os.path.exists(parent):
        os.makedirs(parent)
    with open(path, 'wb') as f:
        f.write(head_to_bytes(head))
    logger.info(f"Saved classifier head D={head.input_dim} H={head.hidden_dim} to {path}")
    return path


def load_head(path: str) -> ClassifierHead:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Classifier head not found: {path}")
    with open(path, 'rb') as f:
        raw = f.read()
    try:
        head = head_from_bytes(raw)
    except HeadFormatError as e:
        raise HeadFormatError(f"{path}: {e}")
    logger.debug(f"Loaded classifier head D={head.input_dim} H={head.hidden_dim} from {path}")
    return head
