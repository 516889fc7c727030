"""Reference cross-attention operators the merged scan is compared against."""
import logging
import typing

from einops import rearrange
import numpy as np

from .config import NUMERICS
from .exception import InvalidInputError, ShapeError
from .ssm import discretize, expand_groups, scan_recurrent
from .utils import check_shape

if typing.TYPE_CHECKING:
    from .config import SSMDims
    from .ssm import SSMParams, SequenceBatch

LOG = logging.getLogger(__name__)


def attention_weights(Q, K) -> "np.ndarray":
    """Row-stochastic softmax(Q K^T / sqrt(D)).

    With no keys every row is empty, so the attended output is zero.
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if Q.ndim != 2 or K.ndim != 2 or Q.shape[1] != K.shape[1]:
        raise ShapeError(name="K", expected=(None, Q.shape[-1]), actual=K.shape)
    if K.shape[0] == 0:
        return np.zeros((Q.shape[0], 0))
    scores = Q @ K.T / np.sqrt(Q.shape[1])
    scores = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    return weights / weights.sum(axis=1, keepdims=True)


def dot_product_xattn(Q, K, Vv) -> "np.ndarray":
    """Single-head softmax cross attention."""
    Vv = np.asarray(Vv, dtype=np.float64)
    check_shape(Vv, (np.shape(K)[0], None), "Vv")
    return attention_weights(Q, K) @ Vv


def naive_mamba_xattn(
    values: "SequenceBatch", params: "SSMParams", C_rows, dims: "SSMDims"
) -> "np.ndarray":
    """Scan every value token, then read the final state once per query.

    ``C_rows`` is (M, N*G); the result is (M, αD) without a skip term.
    """
    _, final = scan_recurrent(values, params.without_skip(), dims)
    C_rows = np.asarray(C_rows, dtype=np.float64)
    check_shape(C_rows, (None, dims.bc_dim), "C_rows")
    C = expand_groups(C_rows, dims)
    y = np.einsum("hpn,ihn->ihp", final.h, C)
    return rearrange(y, "i h p -> i (h p)")


def unrolled_mamba_xattn(
    values: "SequenceBatch", params: "SSMParams", C_rows, dims: "SSMDims"
) -> "np.ndarray":
    """Term-by-term sum C_i · (prod_{k>t} dA_k) Δ_t B_t x_t over every value t."""
    delta, dA = discretize(values.dt, params)
    x = rearrange(values.x, "l (h p) -> l h p", h=dims.heads)
    B = expand_groups(values.B_in, dims)
    C = expand_groups(np.asarray(C_rows, dtype=np.float64), dims)
    y = np.zeros((C.shape[0], dims.heads, dims.head_dim))
    for t in range(values.length):
        weight = np.prod(dA[t + 1 :], axis=0) * delta[t]
        memory = weight[:, None, None] * x[t][:, :, None] * B[t][:, None, :]
        y += np.einsum("hpn,ihn->ihp", memory, C)
    return rearrange(y, "i h p -> i (h p)")


def bilinear_sample(value_map, u, v) -> "np.ndarray":
    """Sample (H_f, W_f, D) at normalized (u, v); outside pixels read as zero.

    Pixel centers sit at ``(j + 0.5) / W_f``.
    """
    H_f, W_f = value_map.shape[:2]
    px = np.asarray(u) * W_f - 0.5
    py = np.asarray(v) * H_f - 0.5
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    fx = px - x0
    fy = py - y0
    out = np.zeros(px.shape + value_map.shape[2:])
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            inside = (xi >= 0) & (xi < W_f) & (yi >= 0) & (yi < H_f)
            corner = value_map[np.clip(yi, 0, H_f - 1), np.clip(xi, 0, W_f - 1)]
            weight = np.where(inside, wx * wy, 0.0)
            out += weight[..., None] * corner
    return out


def deformable_xattn(value_map, refs, offsets, weights) -> "np.ndarray":
    """Weighted bilinear samples around each reference point.

    ``offsets`` (Q, P, R, 2) are in normalized image units; ``weights``
    (Q, P, R) must sum to one per query.
    """
    value_map = np.asarray(value_map, dtype=np.float64)
    refs = np.asarray(refs, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    check_shape(value_map, (None, None, None), "value_map")
    Q = refs.shape[0]
    check_shape(refs, (Q, 2), "refs")
    check_shape(offsets, (Q, None, None, 2), "offsets")
    check_shape(weights, offsets.shape[:3], "weights")
    sums = weights.reshape(Q, -1).sum(axis=1)
    if np.any(np.abs(sums - 1.0) > NUMERICS.weights_sum_tol):
        raise InvalidInputError(name="weights", reason="rows must sum to 1")

    locations = refs[:, None, None, :] + offsets
    samples = bilinear_sample(value_map, locations[..., 0], locations[..., 1])
    return np.einsum("qpr,qprd->qd", weights, samples)


def dense_deformable_xattn(value_map, refs, offsets, weights) -> "np.ndarray":
    """Deformable attention with every pixel weighted by the bilinear hat kernel."""
    value_map = np.asarray(value_map, dtype=np.float64)
    H_f, W_f = value_map.shape[:2]
    locations = np.asarray(refs)[:, None, None, :] + np.asarray(offsets)
    px = locations[..., 0] * W_f - 0.5
    py = locations[..., 1] * H_f - 0.5
    kx = np.maximum(0.0, 1.0 - np.abs(px[..., None] - np.arange(W_f)))
    ky = np.maximum(0.0, 1.0 - np.abs(py[..., None] - np.arange(H_f)))
    return np.einsum("qpr,qprh,qprw,hwd->qd", weights, ky, kx, value_map)
