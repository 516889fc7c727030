import numpy as np
import pytest

from .exception import ConfigError, IndexRangeError, InvalidOrderError
from .traversal import (
    ORDERS,
    TraversalOrder,
    flatten_map,
    flatten_permutation,
    remap_index,
    unflatten_map,
    visit_order,
)


def patch(H_p=2, W_p=2, inner="row_major", outer="row_major"):
    return TraversalOrder(variant="patch", H_p=H_p, W_p=W_p, inner=inner, outer=outer)


class TestFlattenPermutation:
    @pytest.mark.parametrize(
        "variant,expected", [("row_major", 3), ("row_snake", 5), ("column_major", 1)]
    )
    def test_cell_below_origin(self, variant, expected):
        assert flatten_permutation(2, 3, variant)[1 * 3 + 0] == expected

    def test_column_snake(self):
        # Columns top-down, bottom-up, top-down.
        assert visit_order(2, 3, "column_snake").tolist() == [0, 3, 4, 1, 2, 5]

    @pytest.mark.parametrize("variant", ORDERS)
    def test_bijection(self, variant):
        order = patch() if variant == "patch" else variant
        perm = flatten_permutation(4, 6, order)
        assert np.array_equal(np.sort(perm), np.arange(24))

    def test_snake_even_rows_match_row_major(self):
        snake = flatten_permutation(5, 4, "row_snake").reshape(5, 4)
        plain = flatten_permutation(5, 4, "row_major").reshape(5, 4)
        assert np.array_equal(snake[::2], plain[::2])

    def test_patch_requires_divisibility(self):
        with pytest.raises(InvalidOrderError):
            flatten_permutation(4, 5, patch())

    def test_snake_inner_column_major_outer(self):
        order = patch(inner="row_snake", outer="column_major")
        visit = visit_order(4, 4, order)
        # First patch (top-left), then the one below it.
        assert visit[:8].tolist() == [0, 1, 5, 4, 8, 9, 13, 12]

    def test_permutation_is_read_only(self):
        with pytest.raises(ValueError):
            flatten_permutation(2, 2, "row_major")[0] = 3


class TestRemapIndex:
    def test_row_major_identity(self):
        assert remap_index(7, 3, 4, "row_major") == 7

    def test_row_snake(self):
        assert remap_index(3, 2, 3, "row_snake") == 5

    def test_patch(self):
        assert remap_index(5, 4, 4, patch()) == 3

    def test_out_of_range(self):
        with pytest.raises(IndexRangeError):
            remap_index(6, 2, 3, "row_major")

    def test_inverse_recovers_identity(self):
        order = patch(inner="row_snake", outer="column_snake")
        perm = flatten_permutation(4, 6, order)
        visit = visit_order(4, 6, order)
        assert np.array_equal(visit[perm], np.arange(24))


class TestFlattenMap:
    def test_round_trip(self):
        fmap = np.arange(2 * 4 * 3, dtype=float).reshape(2, 4, 3)
        for order in ("row_major", "column_snake", patch()):
            seq = flatten_map(fmap, order)
            assert np.array_equal(unflatten_map(seq, 2, 4, order), fmap)

    def test_column_major_sequence(self):
        fmap = np.arange(6, dtype=float).reshape(2, 3, 1)
        assert flatten_map(fmap, "column_major")[:, 0].tolist() == [0, 3, 1, 4, 2, 5]


class TestTraversalConfig:
    def test_bare_string(self):
        assert TraversalOrder.from_dict("column_snake").variant == "column_snake"

    def test_patch_object(self):
        order = TraversalOrder.from_dict(
            {"variant": "patch", "H_p": 2, "W_p": 4, "inner": "row_snake"}
        )
        assert (order.H_p, order.W_p, order.inner) == (2, 4, "row_snake")
        assert TraversalOrder.from_dict(order.as_dict()) == order

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            TraversalOrder.from_dict("hilbert")

    def test_patch_sizes_on_plain_order(self):
        with pytest.raises(ConfigError) as exc:
            TraversalOrder.from_dict({"variant": "row_major", "H_p": 2}, "layer")
        assert exc.value.path == "layer.H_p"
