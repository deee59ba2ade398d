import struct

import numpy as np
import pytest

from app.application.recognizer_service import init_head
from app.domain.errors import HeadFormatError
from app.infrastructure.head_store import MAGIC, head_from_bytes, head_to_bytes, load_head, save_head


@pytest.fixture
def small_head():
    return init_head(3, 2, 0.25, seed=1)


def test_layout_header_and_size(small_head):
    raw = head_to_bytes(small_head)
    assert raw[:8] == MAGIC
    assert struct.unpack_from('<II', raw, 8) == (1, 0)
    assert struct.unpack_from('<IId', raw, 16) == (3, 2, 0.25)
    assert len(raw) == 32 + 8 * (3 * 2 + 2 + 2 + 1)
    np.testing.assert_array_equal(np.frombuffer(raw, dtype='<f8', offset=32, count=6).reshape(3, 2), small_head.w1)


def test_save_then_load_restores_parameters(tmp_path, small_head):
    path = save_head(small_head, str(tmp_path / 'nested' / 'head.bin'))
    loaded = load_head(path)
    for name, value in small_head.parameters().items():
        np.testing.assert_array_equal(loaded.parameters()[name], value)
    assert loaded.dropout == 0.25


def test_bad_magic_version_and_size(small_head):
    raw = head_to_bytes(small_head)
    with pytest.raises(HeadFormatError):
        head_from_bytes(b'NOTAHEAD' + raw[8:])
    with pytest.raises(HeadFormatError):
        head_from_bytes(raw[:8] + struct.pack('<II', 2, 0) + raw[16:])
    with pytest.raises(HeadFormatError):
        head_from_bytes(raw[:-8])
    with pytest.raises(HeadFormatError):
        head_from_bytes(raw[:10])


def test_missing_head_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_head(str(tmp_path / 'absent.bin'))
