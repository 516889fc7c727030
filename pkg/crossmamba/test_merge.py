import numpy as np
import pytest

from .exception import ContractError, IndexRangeError, ShapeError
from .instances import random_merge_instance, verify_stream
from .merge import (
    append_merge,
    build_merged,
    filter_stream,
    index_offset,
    merge_hits,
    naive_insertion,
    refpoints_to_1d,
    stable_rank,
)


def rows(count, width=2, start=0.0):
    return start + np.arange(count * width, dtype=float).reshape(count, width)


class TestRefpointsTo1d:
    def test_interior_point(self):
        assert refpoints_to_1d([[0.6, 0.4]], 3, 4).tolist() == [6]

    def test_origin(self):
        assert refpoints_to_1d([[0.0, 0.0]], 3, 4).tolist() == [0]

    def test_far_corner_is_clamped(self):
        assert refpoints_to_1d([[1.0, 1.0]], 3, 4).tolist() == [11]

    def test_traversal_remap(self):
        # Cell (1, 0) of a 2x3 map sits at position 5 of the row snake.
        assert refpoints_to_1d([[0.1, 0.9]], 2, 3, "row_snake").tolist() == [5]

    def test_offset_is_clamped(self):
        idx = refpoints_to_1d([[0.0, 0.0], [1.0, 1.0]], 3, 4, offset=2)
        assert idx.tolist() == [2, 11]

    def test_rejects_out_of_image(self):
        with pytest.raises(ContractError):
            refpoints_to_1d([[1.2, 0.5]], 3, 4)

    def test_rejects_non_hits(self):
        with pytest.raises(ContractError):
            refpoints_to_1d([[0.5, 0.5]], 3, 4, hits=[False])


class TestIndexOffset:
    @pytest.mark.parametrize(
        "R_1D,expected",
        [([5, 2, 5], [6, 2, 7]), ([0], [0]), ([0, 1, 2], [0, 2, 4]), ([], [])],
    )
    def test_positions(self, R_1D, expected):
        assert index_offset(R_1D, length=8).tolist() == expected

    def test_stable_rank_ties(self):
        assert stable_rank([3, 1, 3, 1]).tolist() == [2, 0, 3, 1]

    def test_out_of_range(self):
        with pytest.raises(IndexRangeError):
            index_offset([0, 5], length=4)
        with pytest.raises(IndexRangeError):
            index_offset([-1])

    def test_append_index_allowed(self):
        assert index_offset([4], length=4).tolist() == [4]


class TestBuildMerged:
    def test_mask_layout(self):
        merged, stream = build_merged(rows(4), rows(2, start=100.0), [1, 4], [7, 9])
        assert merged.s_mask.astype(int).tolist() == [1, 0, 1, 1, 0, 1]
        assert np.array_equal(stream[1], [100.0, 101.0])
        assert np.array_equal(stream[4], [102.0, 103.0])
        assert merged.extract_index.tolist() == [7, 9]
        assert (merged.V, merged.M, merged.length) == (4, 2, 6)

    def test_no_queries(self):
        merged, stream = build_merged(rows(3), np.zeros((0, 2)), [], [])
        assert merged.s_mask.all()
        assert np.array_equal(stream, rows(3))

    def test_no_values(self):
        merged, stream = build_merged(np.zeros((0, 2)), rows(1), [0], [0])
        assert merged.s_mask.tolist() == [False]
        assert np.array_equal(stream, rows(1))

    def test_unsorted_positions_are_ordered(self):
        merged, _ = build_merged(rows(2), rows(2), [3, 0], [5, 6])
        assert merged.insert_positions.tolist() == [0, 3]
        assert merged.extract_index.tolist() == [6, 5]

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            build_merged(rows(2), rows(1, width=3), [0], [0])

    def test_duplicate_positions(self):
        with pytest.raises(ContractError):
            build_merged(rows(2), rows(2), [1, 1], [0, 1])

    def test_filter_stream(self):
        merged, stream = build_merged(rows(3), rows(2, start=50.0), [0, 2], [0, 1])
        assert np.array_equal(filter_stream(stream, merged.s_mask), rows(3))
        queries = filter_stream(stream, merged.s_mask, keep_values=False)
        assert np.array_equal(queries, rows(2, start=50.0))


class TestMergeOracle:
    def test_matches_naive_insertion(self):
        for index in range(200):
            values, queries, R_1D = random_merge_instance(verify_stream(7, index))
            ids = np.arange(len(queries))
            positions = index_offset(R_1D, length=len(values))
            merged, stream = build_merged(values, queries, positions, ids)
            s_mask, tokens, extract = naive_insertion(values, queries, R_1D, ids)
            assert np.array_equal(merged.s_mask, s_mask)
            assert np.array_equal(merged.extract_index, extract)
            if len(tokens):
                assert np.array_equal(stream, tokens)

    def test_values_keep_their_order(self):
        values, queries, R_1D = random_merge_instance(verify_stream(3), 20, 10)
        positions = index_offset(R_1D, length=len(values))
        merged, stream = build_merged(values, queries, positions, np.arange(len(R_1D)))
        assert np.array_equal(stream[merged.s_mask], values)

    def test_merge_hits_uses_query_rows(self):
        values = rows(12)
        query_rows = rows(3, start=-10.0)
        uv = np.array([[0.6, 0.4], [0.0, 0.0]])
        merged, stream = merge_hits(values, query_rows, uv, [2, 0], 3, 4, "row_major")
        assert merged.insert_positions.tolist() == [0, 7]
        assert merged.extract_index.tolist() == [0, 2]
        assert np.array_equal(stream[7], query_rows[2])


class TestAppendMerge:
    def test_append(self):
        merged, _ = append_merge(rows(3), rows(2), [0, 1])
        assert merged.s_mask.astype(int).tolist() == [1, 1, 1, 0, 0]

    def test_prepend(self):
        merged, _ = append_merge(rows(3), rows(2), [0, 1], prepend=True)
        assert merged.s_mask.astype(int).tolist() == [0, 0, 1, 1, 1]
