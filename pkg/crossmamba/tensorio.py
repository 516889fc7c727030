"""XBEV tensor files.

Layout: the ASCII magic ``XBEV``, an unsigned 32-bit little-endian rank,
``rank`` unsigned 32-bit little-endian dims, then the row-major payload as
little-endian IEEE-754 float32.
"""
import logging
import os
import struct

import numpy as np

from .exception import SceneIOError, TensorFormatError

LOG = logging.getLogger(__name__)

MAGIC = b"XBEV"
PAYLOAD_DTYPE = np.dtype("<f4")


def encode_tensor(array) -> "bytes":
    array = np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE)
    header = MAGIC + struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape)
    return header + array.tobytes(order="C")


def decode_tensor(payload: "bytes", path: "str" = "<memory>") -> "np.ndarray":
    if len(payload) < 8 or payload[:4] != MAGIC:
        raise TensorFormatError(path=path, reason="bad magic")
    (rank,) = struct.unpack_from("<I", payload, 4)
    offset = 8 + 4 * rank
    if len(payload) < offset:
        raise TensorFormatError(path=path, reason=f"truncated header for rank {rank}")
    shape = struct.unpack_from(f"<{rank}I", payload, 8)
    expected = int(np.prod(shape, dtype=np.int64)) * PAYLOAD_DTYPE.itemsize
    if len(payload) - offset != expected:
        raise TensorFormatError(
            path=path,
            reason=f"payload has {len(payload) - offset} bytes, shape {shape} "
            f"needs {expected}",
        )
    data = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, offset=offset)
    return data.reshape(shape).astype(np.float64)


def save_tensor(path: "str", array) -> "str":
    payload = encode_tensor(array)
    try:
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as exc:
        raise SceneIOError(path=path, reason=exc.strerror or str(exc)) from exc
    LOG.debug(f"wrote {path} shape={np.shape(array)}")
    return path


def load_tensor(path: "str") -> "np.ndarray":
    if not os.path.isfile(path):
        raise TensorFormatError(path=path, reason="no such file")
    try:
        with open(path, "rb") as f:
            payload = f.read()
    except OSError as exc:
        raise TensorFormatError(path=path, reason=exc.strerror or str(exc)) from exc
    return decode_tensor(payload, path)
