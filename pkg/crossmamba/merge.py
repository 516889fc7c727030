"""Position-aware merge of BEV query copies into a flattened feature stream.

Each query copy is inserted immediately before the feature token its
reference point lands on. Insertion positions come from the stable rank of
the 1D indices, which reproduces one-by-one insertion in ascending order.
"""
from dataclasses import dataclass
import logging
import typing

import numpy as np

from .exception import ContractError, IndexRangeError, ShapeError
from .traversal import remap_indices
from .utils import check_shape

if typing.TYPE_CHECKING:
    from typing import Optional, Tuple

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class MergedSequence:
    s_mask: np.ndarray
    insert_positions: np.ndarray
    extract_index: np.ndarray

    @property
    def length(self) -> "int":
        return self.s_mask.shape[0]

    @property
    def V(self) -> "int":
        return int(np.count_nonzero(self.s_mask))

    @property
    def M(self) -> "int":
        return self.insert_positions.shape[0]


def refpoints_to_1d(
    uv, H_f: "int", W_f: "int", order="row_major", offset: "int" = 0, hits=None
) -> "np.ndarray":
    """Row-major cell of every hit, remapped into ``order``.

    ``offset`` shifts the resulting sequence index, clamped to the map.
    """
    uv = np.asarray(uv, dtype=np.float64)
    check_shape(uv, (None, 2), "uv")
    if H_f < 1 or W_f < 1:
        raise ContractError(reason=f"feature map {H_f}x{W_f} is empty")
    if hits is not None and not np.all(hits):
        raise ContractError(reason="refpoints_to_1d received non-hit points")
    if not np.all(np.isfinite(uv)) or np.any((uv < 0.0) | (uv > 1.0)):
        raise ContractError(reason="reference points must lie in [0, 1]^2")
    row = np.minimum(np.floor(uv[:, 1] * H_f).astype(np.int64), H_f - 1)
    col = np.minimum(np.floor(uv[:, 0] * W_f).astype(np.int64), W_f - 1)
    idx = remap_indices(W_f * row + col, H_f, W_f, order)
    if offset:
        idx = np.clip(idx + offset, 0, H_f * W_f - 1)
    return idx


def stable_rank(values) -> "np.ndarray":
    """Ascending rank with ties kept in original order."""
    values = np.asarray(values)
    rank = np.empty(values.shape[0], dtype=np.int64)
    rank[np.argsort(values, kind="stable")] = np.arange(values.shape[0])
    return rank


def index_offset(R_1D, length: "Optional[int]" = None) -> "np.ndarray":
    """Merged-stream position of every query copy: ``R_1D + rank(R_1D)``.

    ``length`` is the number of value tokens V; an index equal to V appends.
    """
    R_1D = np.asarray(R_1D, dtype=np.int64)
    if R_1D.ndim != 1:
        raise ShapeError(name="R_1D", expected="(M,)", actual=R_1D.shape)
    if R_1D.size:
        limit = length + 1 if length is not None else None
        low = int(R_1D.min())
        if low < 0:
            raise IndexRangeError(index=low, name="R_1D", limit=limit)
        if limit is not None and int(R_1D.max()) >= limit:
            raise IndexRangeError(index=int(R_1D.max()), name="R_1D", limit=limit)
    return R_1D + stable_rank(R_1D)


def build_merged(
    values_flat, query_tokens, positions, extract_ids
) -> "Tuple[MergedSequence, np.ndarray]":
    values_flat = np.asarray(values_flat)
    query_tokens = np.asarray(query_tokens)
    positions = np.asarray(positions, dtype=np.int64)
    extract_ids = np.asarray(extract_ids, dtype=np.int64)
    V, M = values_flat.shape[0], query_tokens.shape[0]
    if values_flat.shape[1:] != query_tokens.shape[1:]:
        raise ShapeError(
            name="query_tokens",
            expected=(M,) + values_flat.shape[1:],
            actual=query_tokens.shape,
        )
    check_shape(positions, (M,), "positions")
    check_shape(extract_ids, (M,), "extract_ids")

    L = V + M
    if M and (positions.min() < 0 or positions.max() >= L):
        raise IndexRangeError(index=int(positions.max()), name="positions", limit=L)
    by_position = np.argsort(positions, kind="stable")
    sorted_positions = positions[by_position]
    if M > 1 and np.any(np.diff(sorted_positions) <= 0):
        raise ContractError(reason="insert positions must be distinct")

    s_mask = np.ones(L, dtype=bool)
    s_mask[sorted_positions] = False
    dtype = np.result_type(values_flat, query_tokens)
    stream = np.empty((L,) + values_flat.shape[1:], dtype=dtype)
    stream[s_mask] = values_flat
    stream[sorted_positions] = query_tokens[by_position]
    merged = MergedSequence(
        s_mask=s_mask,
        insert_positions=sorted_positions,
        extract_index=extract_ids[by_position],
    )
    LOG.debug(f"merged stream: V={V} M={M} L={L}")
    return merged, stream


def merge_hits(
    values_flat, query_rows, uv, query_ids, H_f, W_f, order, offset=0
) -> "Tuple[MergedSequence, np.ndarray]":
    """Insert ``query_rows[query_ids]`` at the positions of ``uv`` hits."""
    R_1D = refpoints_to_1d(uv, H_f, W_f, order, offset)
    positions = index_offset(R_1D, length=H_f * W_f)
    query_ids = np.asarray(query_ids, dtype=np.int64)
    return build_merged(values_flat, query_rows[query_ids], positions, query_ids)


def naive_insertion(values_flat, query_tokens, R_1D, extract_ids):
    """Quadratic reference: insert copies one at a time in ascending R_1D."""
    stream = [(True, row, -1) for row in np.asarray(values_flat)]
    for i in np.argsort(np.asarray(R_1D), kind="stable"):
        # Before the R_1D[i]-th value token, after every earlier copy at that index.
        seen, at = 0, len(stream)
        for pos, (is_value, _, _) in enumerate(stream):
            if is_value:
                if seen == R_1D[i]:
                    at = pos
                    break
                seen += 1
        stream.insert(at, (False, query_tokens[i], int(extract_ids[i])))
    s_mask = np.array([item[0] for item in stream], dtype=bool)
    tokens = np.array([item[1] for item in stream])
    extract = np.array([item[2] for item in stream if not item[0]], dtype=np.int64)
    return s_mask, tokens, extract


def filter_stream(stream, s_mask, keep_values: "bool" = True) -> "np.ndarray":
    s_mask = np.asarray(s_mask, dtype=bool)
    return np.asarray(stream)[s_mask if keep_values else ~s_mask]


def append_merge(values_flat, query_tokens, extract_ids, prepend: "bool" = False):
    """All query copies after (or before) the whole feature stream."""
    V, M = len(values_flat), len(query_tokens)
    positions = np.arange(M) if prepend else V + np.arange(M)
    return build_merged(values_flat, query_tokens, positions, extract_ids)
