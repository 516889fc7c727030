import hashlib
import typing

import numpy as np

from .exception import NumericError, ShapeError

if typing.TYPE_CHECKING:
    from typing import Sequence


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    """Inverse of softplus for y > 0."""
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def silu(x):
    return x / (1.0 + np.exp(-x))


def rms_norm(x, gain, eps):
    rms = np.sqrt(np.mean(np.square(x), axis=-1, keepdims=True) + eps)
    return x / rms * gain


def layer_norm(x, gain, bias, eps):
    mean = np.mean(x, axis=-1, keepdims=True)
    var = np.var(x, axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gain + bias


def all_finite(array) -> "bool":
    """Finiteness via two reductions; no temporaries the size of ``array``."""
    array = np.asarray(array)
    if array.size == 0:
        return True
    return bool(np.isfinite(array.min()) and np.isfinite(array.max()))


def check_finite(array, stage: "str"):
    if not all_finite(array):
        raise NumericError(stage=stage)
    return array


def check_shape(array, expected: "Sequence", name: "str"):
    """Compare against a shape where ``None`` matches any extent."""
    actual = tuple(np.shape(array))
    if len(actual) != len(expected) or any(
        e is not None and e != a for e, a in zip(expected, actual)
    ):
        raise ShapeError(name=name, expected=tuple(expected), actual=actual)
    return array


def sha256_bytes(payload: "bytes") -> "str":
    return hashlib.sha256(payload).hexdigest()
