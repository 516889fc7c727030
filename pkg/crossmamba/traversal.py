"""Flattening orders for 2D feature maps.

A traversal is described by its *visit order*: ``visit[s]`` is the row-major
cell id found at sequence position ``s``. The permutation ``π`` used by the
merge maps a row-major cell id to its sequence position and is the inverse of
the visit order.
"""
from functools import lru_cache
import logging
import typing

from einops import rearrange
import numpy as np
from traitlets.traitlets import Enum, Int

from .config import Record, _join
from .exception import ConfigError, IndexRangeError, InvalidOrderError

if typing.TYPE_CHECKING:
    from typing import Union

LOG = logging.getLogger(__name__)

ROW_MAJOR = "row_major"
COLUMN_MAJOR = "column_major"
ROW_SNAKE = "row_snake"
COLUMN_SNAKE = "column_snake"
PATCH = "patch"
SIMPLE_ORDERS = (ROW_MAJOR, COLUMN_MAJOR, ROW_SNAKE, COLUMN_SNAKE)
ORDERS = SIMPLE_ORDERS + (PATCH,)


class TraversalOrder(Record):
    variant = Enum(ORDERS, default_value=ROW_SNAKE)
    H_p = Int(1, min=1)
    W_p = Int(1, min=1)
    inner = Enum(SIMPLE_ORDERS, default_value=ROW_SNAKE)
    outer = Enum(SIMPLE_ORDERS, default_value=COLUMN_MAJOR)

    @classmethod
    def from_dict(cls, data, path=""):
        # Plain variants may be written as bare strings in config lists.
        if isinstance(data, str):
            if data not in SIMPLE_ORDERS:
                raise ConfigError(
                    path=path or "<root>",
                    reason=f"unknown traversal '{data}' (patch needs an object)",
                )
            return cls(variant=data)
        return super().from_dict(data, path)

    def as_dict(self):
        if self.variant != PATCH:
            return {"variant": self.variant}
        return super().as_dict()

    def validate_record(self, path=""):
        if self.variant != PATCH and (self.H_p != 1 or self.W_p != 1):
            raise ConfigError(
                path=_join(path, "H_p"), reason="patch sizes apply to 'patch' only"
            )

    def key(self):
        return (self.variant, self.H_p, self.W_p, self.inner, self.outer)

    def __hash__(self):
        return hash(self.key())

    def __str__(self):
        if self.variant != PATCH:
            return self.variant
        return f"patch({self.H_p}x{self.W_p}, {self.inner} inner, {self.outer} outer)"


def _as_order(order: "Union[str, TraversalOrder]") -> "TraversalOrder":
    if isinstance(order, TraversalOrder):
        return order
    return TraversalOrder.from_dict(order)


def _simple_visit(H, W, variant):
    grid = np.arange(H * W).reshape(H, W)
    if variant == ROW_MAJOR:
        return grid.ravel()
    if variant == COLUMN_MAJOR:
        return grid.T.ravel()
    if variant == ROW_SNAKE:
        snake = grid.copy()
        snake[1::2] = snake[1::2, ::-1]
        return snake.ravel()
    snake = grid.T.copy()
    snake[1::2] = snake[1::2, ::-1]
    return snake.ravel()


@lru_cache(maxsize=256)
def _visit_cached(H, W, key):
    variant, H_p, W_p, inner, outer = key
    if variant != PATCH:
        return _simple_visit(H, W, variant)
    if H % H_p or W % W_p:
        raise InvalidOrderError(
            order=f"patch {H_p}x{W_p}", height=H, width=W
        )
    cells = rearrange(
        np.arange(H * W).reshape(H, W),
        "(nh hp) (nw wp) -> (nh nw) (hp wp)",
        hp=H_p,
        wp=W_p,
    )
    patch_visit = _simple_visit(H // H_p, W // W_p, outer)
    cell_visit = _simple_visit(H_p, W_p, inner)
    return cells[patch_visit][:, cell_visit].ravel()


def visit_order(H: "int", W: "int", order) -> "np.ndarray":
    """Row-major cell ids in the order the traversal visits them."""
    if H < 1 or W < 1:
        raise InvalidOrderError(order=str(order), height=H, width=W)
    visit = _visit_cached(H, W, _as_order(order).key())
    visit.setflags(write=False)
    return visit


def flatten_permutation(H: "int", W: "int", order) -> "np.ndarray":
    """π with π[h*W + w] = sequence position of cell (h, w)."""
    visit = visit_order(H, W, order)
    perm = np.empty_like(visit)
    perm[visit] = np.arange(visit.size)
    perm.setflags(write=False)
    return perm


def remap_index(idx_row_major: "int", H: "int", W: "int", order) -> "int":
    if not 0 <= idx_row_major < H * W:
        raise IndexRangeError(index=idx_row_major, name="row-major index", limit=H * W)
    return int(flatten_permutation(H, W, order)[idx_row_major])


def remap_indices(idx_row_major, H: "int", W: "int", order) -> "np.ndarray":
    idx = np.asarray(idx_row_major, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= H * W):
        bad = idx[(idx < 0) | (idx >= H * W)][0]
        raise IndexRangeError(index=int(bad), name="row-major index", limit=H * W)
    return flatten_permutation(H, W, order)[idx]


def flatten_map(feature_map, order) -> "np.ndarray":
    """(H, W, C) feature map -> (H*W, C) sequence in traversal order."""
    H, W = feature_map.shape[:2]
    rows = rearrange(feature_map, "h w c -> (h w) c")
    return rows[visit_order(H, W, order)]


def unflatten_map(sequence, H: "int", W: "int", order) -> "np.ndarray":
    """Inverse of :func:`flatten_map`."""
    rows = sequence[flatten_permutation(H, W, order)]
    return rearrange(rows, "(h w) c -> h w c", h=H, w=W)
