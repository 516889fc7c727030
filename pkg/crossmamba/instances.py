"""Seeded problem instances shared by the verify suite and the tests."""
import numpy as np

from .config import SSMDims
from .geometry import BEVGridSpec, ReferencePointSet, reference_points, ring_rig
from .layer import LayerConfig, init_layer_params
from .rng import STREAM_PARAMS, STREAM_RIG, STREAM_VERIFY, SeededStream
from .ssm import SSMParams, SequenceBatch

SMALL_DIMS = dict(model_dim=4, expand=2.0, heads=2, head_dim=4, state_dim=3)
SMOKE_DIMS = dict(model_dim=8, expand=2.0, heads=2, head_dim=8, state_dim=4)


def verify_stream(seed: "int", index: "int" = 0) -> "SeededStream":
    return SeededStream(seed, STREAM_VERIFY).child(index)


def random_params(stream: "SeededStream", heads: "int") -> "SSMParams":
    return SSMParams(
        A_log=stream.uniform((heads,), np.log(0.5), np.log(4.0)),
        dt_bias=stream.uniform((heads,), -2.0, 0.5),
        skip_D=stream.normal((heads,)),
    )


def random_batch(stream: "SeededStream", dims: "SSMDims", L: "int") -> "SequenceBatch":
    return SequenceBatch(
        x=stream.normal((L, dims.inner_dim)),
        B_in=stream.normal((L, dims.bc_dim)),
        C_in=stream.normal((L, dims.bc_dim)),
        dt=stream.normal((L, dims.heads)),
    )


def random_mask(stream: "SeededStream", L: "int", M: "int") -> "np.ndarray":
    """Length-L feature mask with exactly M query rows."""
    s_mask = np.ones(L, dtype=bool)
    s_mask[np.argsort(stream.uniform((L,)), kind="stable")[:M]] = False
    return s_mask


def random_merge_instance(stream: "SeededStream", max_V=64, max_M=32, width=3):
    V = int(stream.integers(0, max_V + 1))
    M = int(stream.integers(0, max_M + 1))
    values = stream.normal((V, width))
    queries = stream.normal((M, width))
    R_1D = stream.integers(0, max(V, 1), (M,))
    return values, queries, R_1D


class SmokeCase:
    """Small ring-rig scene with random queries, features and parameters."""

    def __init__(
        self,
        seed: "int" = 0,
        config: "LayerConfig" = None,
        cameras: "int" = 3,
        bev=(4, 4),
        feature_hw=(3, 4),
    ):
        self.config = config if config is not None else LayerConfig(
            dims=SSMDims(**SMOKE_DIMS)
        )
        D = self.config.dims.model_dim
        stream = verify_stream(seed)
        self.bev = BEVGridSpec(
            H_bev=bev[0], W_bev=bev[1], x_min=-30.0, x_max=30.0, y_min=-30.0, y_max=30.0
        )
        rig = ring_rig(cameras, SeededStream(seed, STREAM_RIG), 360.0 / cameras - 1.0)
        self.refs = reference_points(self.bev, rig)
        self.q = stream.child(0).normal((self.bev.num_queries, D))
        self.value_maps = [
            stream.child(1 + c).normal(tuple(feature_hw) + (D,)) for c in range(cameras)
        ]
        self.params = init_layer_params(self.config, SeededStream(seed, STREAM_PARAMS))

    def refs_without_hits(self, query_ids) -> "ReferencePointSet":
        b = self.refs.b.copy()
        b[:, query_ids, :] = False
        return ReferencePointSet(R=self.refs.R, b=b)


def random_deformable_instance(stream: "SeededStream", Q=5, P=2, R=3, size=8, D=3):
    """(value_map, refs, offsets, weights) with samples straddling the border."""
    value_map = stream.normal((size, size, D))
    refs = stream.uniform((Q, 2))
    offsets = stream.uniform((Q, P, R, 2), -0.2, 0.2)
    weights = stream.uniform((Q, P, R)) + 0.05
    weights /= weights.sum(axis=(1, 2), keepdims=True)
    return value_map, refs, offsets, weights


def basis_value_batch(stream: "SeededStream", T: "int", head_dim: "int" = 2):
    """T value tokens whose B rows are the standard basis, one state slot each."""
    dims = SSMDims(
        model_dim=head_dim, expand=1.0, heads=1, head_dim=head_dim, state_dim=T
    )
    values = SequenceBatch(
        x=stream.normal((T, head_dim)),
        B_in=np.eye(T),
        C_in=np.zeros((T, T)),
        dt=stream.normal((T, 1)),
    )
    return values, dims
