"""Spatial cross layer and the BEV self-attention block.

One call of :func:`spatial_cross_mamba_forward` merges every query copy that
hits a camera into that camera's flattened features (once per traversal),
runs the bidirectional masked scan, gates the query readouts, index-adds them
per BEV query and finishes with a post-norm residual.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import typing

from einops import rearrange
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from traitlets import default
from traitlets.traitlets import Bool, Enum, Float, Instance, Int, List

from .config import NUMERICS, Record, SSMDims, _join
from .exception import ConfigError, ContractError
from .merge import MergedSequence, append_merge, merge_hits
from .rng import STREAM_DROPOUT, SeededStream
from .ssm import SSMParams, SequenceBatch, hydra_bidirectional, init_ssm_params
from .ssm import scan_recurrent
from .traversal import ROW_MAJOR, ROW_SNAKE, TraversalOrder, flatten_map
from .traversal import unflatten_map
from .utils import check_finite, check_shape, layer_norm, rms_norm, silu
from .xqssm import XQSSMInput, backend_trait, xqssm_flops

if typing.TYPE_CHECKING:
    from typing import Dict, Optional, Sequence, Tuple

    from .geometry import ReferencePointSet
    from .xqssm import FlopCounter

LOG = logging.getLogger(__name__)

MERGE_ORDERS = ("before_conv", "after_conv")
EXTRACT_ORDERS = ("before_gate", "after_gate")
NORM_MODES = ("average", "rmsnorm", "both", "neither")
INSERTION_MODES = ("project", "append", "prepend")


class LayerConfig(Record):
    _nested = {"dims": SSMDims}
    _nested_lists = {"traversals": TraversalOrder}

    dims = Instance(SSMDims, args=())
    merge_order = Enum(MERGE_ORDERS, default_value="after_conv")
    extract_order = Enum(EXTRACT_ORDERS, default_value="before_gate")
    zero_BQ = Bool(True)
    zero_CV = Bool(True)
    zero_dtQ = Bool(True)
    norm_mode = Enum(NORM_MODES, default_value="both")
    traversals = List(Instance(TraversalOrder))
    insertion_mode = Enum(INSERTION_MODES, default_value="project")
    conv_width = Int(4, min=1)
    dropout = Float(0.0, min=0.0)
    merge_offset = Int(0)
    xqssm_backend = backend_trait()

    @default("traversals")
    def _default_traversals(self):
        return [TraversalOrder(variant=ROW_SNAKE)]

    def validate_record(self, path=""):
        if not self.traversals:
            raise ConfigError(
                path=_join(path, "traversals"), reason="at least one traversal"
            )
        if not self.dropout < 1.0:
            raise ConfigError(path=_join(path, "dropout"), reason="must be < 1")

    @property
    def averages(self) -> "bool":
        return self.norm_mode in ("average", "both")

    @property
    def rms_gated(self) -> "bool":
        return self.norm_mode in ("rmsnorm", "both")


class SelfAttentionConfig(Record):
    _nested = {"order": TraversalOrder}

    enabled = Bool(True)
    order = Instance(TraversalOrder)
    conv_width = Int(4, min=1)

    @default("order")
    def _default_order(self):
        return TraversalOrder(variant=ROW_MAJOR)


@dataclass(frozen=True)
class InputLayout:
    """Column layout of the shared input projection.

    ``[z | x | B_f | C_f | B_b | C_b | dt_f | dt_b]``; everything after ``z``
    is the xBCdt block that flows into the stream.
    """

    dims: SSMDims

    @property
    def inner(self) -> "int":
        return self.dims.inner_dim

    @property
    def bc(self) -> "int":
        return self.dims.bc_dim

    @property
    def width(self) -> "int":
        return 2 * self.inner + 4 * self.bc + 2 * self.dims.heads

    @property
    def xbc_width(self) -> "int":
        return self.inner + 4 * self.bc

    @property
    def stream_width(self) -> "int":
        return self.xbc_width + 2 * self.dims.heads

    # Offsets below are relative to the xBCdt block.
    def B_cols(self, direction: "int") -> "slice":
        start = self.inner + 2 * direction * self.bc
        return slice(start, start + self.bc)

    def C_cols(self, direction: "int") -> "slice":
        start = self.inner + (2 * direction + 1) * self.bc
        return slice(start, start + self.bc)

    def dt_cols(self, direction: "int") -> "slice":
        start = self.xbc_width + direction * self.dims.heads
        return slice(start, start + self.dims.heads)

    def split(self, stream) -> "Tuple[SequenceBatch, SequenceBatch]":
        """Forward and backward batches, both in forward token order."""
        x = stream[:, : self.inner]
        return tuple(
            SequenceBatch(
                x,
                stream[:, self.B_cols(d)],
                stream[:, self.C_cols(d)],
                stream[:, self.dt_cols(d)],
            )
            for d in (0, 1)
        )


@dataclass(frozen=True)
class LayerParams:
    W_in: np.ndarray
    b_in: np.ndarray
    conv_weight: np.ndarray
    conv_bias: np.ndarray
    W_out: np.ndarray
    rms_gain: np.ndarray
    norm_gain: np.ndarray
    norm_bias: np.ndarray
    ssm_fwd: SSMParams
    ssm_bwd: SSMParams

    def validate(self, config: "LayerConfig") -> "LayerParams":
        dims = config.dims
        layout = InputLayout(dims)
        check_shape(self.W_in, (dims.model_dim, layout.width), "W_in")
        check_shape(self.b_in, (layout.width,), "b_in")
        check_shape(self.conv_weight, (config.conv_width, layout.xbc_width), "conv")
        check_shape(self.conv_bias, (layout.xbc_width,), "conv_bias")
        check_shape(self.W_out, (dims.inner_dim, dims.model_dim), "W_out")
        check_shape(self.rms_gain, (dims.inner_dim,), "rms_gain")
        check_shape(self.norm_gain, (dims.model_dim,), "norm_gain")
        check_shape(self.norm_bias, (dims.model_dim,), "norm_bias")
        for ssm in (self.ssm_fwd, self.ssm_bwd):
            check_shape(ssm.A_log, (dims.heads,), "ssm.A_log")
        return self


def init_layer_params(config: "LayerConfig", stream: "SeededStream") -> "LayerParams":
    dims = config.dims
    layout = InputLayout(dims)
    D, K = dims.model_dim, config.conv_width
    return LayerParams(
        W_in=stream.child(0).normal((D, layout.width), 1.0 / np.sqrt(D)),
        b_in=np.zeros(layout.width),
        conv_weight=stream.child(1).normal((K, layout.xbc_width), 1.0 / np.sqrt(K)),
        conv_bias=np.zeros(layout.xbc_width),
        W_out=stream.child(2).normal(
            (dims.inner_dim, D), 1.0 / np.sqrt(dims.inner_dim)
        ),
        rms_gain=np.ones(dims.inner_dim),
        norm_gain=np.ones(D),
        norm_bias=np.zeros(D),
        ssm_fwd=init_ssm_params(dims.heads, stream.child(3)),
        ssm_bwd=init_ssm_params(dims.heads, stream.child(4)),
    )


def causal_depthwise_conv(x, weight, bias) -> "np.ndarray":
    """Per-channel causal convolution with left zero padding."""
    L = x.shape[0]
    if L == 0:
        return np.zeros_like(x)
    K = weight.shape[0]
    padded = np.pad(x, ((K - 1, 0), (0, 0)))
    windows = sliding_window_view(padded, K, axis=0)
    return np.einsum("lck,kc->lc", windows, weight) + bias


def project_inputs(q, v, params: "LayerParams", config: "LayerConfig"):
    """Shared masked projection.

    Returns ``(Q_z, Q_xBCdt, V_xBCdt)``. Query dt columns are zero unless
    ``zero_dtQ`` is off; values never compute z.
    """
    layout = InputLayout(config.dims)
    D = config.dims.model_dim
    q = check_shape(np.asarray(q, dtype=np.float64), (None, D), "q")
    v = check_shape(np.asarray(v, dtype=np.float64), (None, D), "v")
    inner = layout.inner

    q_proj = q @ params.W_in + params.b_in
    Q_z = q_proj[:, :inner]
    Q_xBCdt = q_proj[:, inner:].copy()
    if config.zero_dtQ:
        Q_xBCdt[:, layout.xbc_width :] = 0.0
    if config.zero_BQ:
        for direction in (0, 1):
            Q_xBCdt[:, layout.B_cols(direction)] = 0.0
    return Q_z, Q_xBCdt, project_values(v, params, config)


def project_values(v, params: "LayerParams", config: "LayerConfig"):
    layout = InputLayout(config.dims)
    inner = layout.inner
    V_xBCdt = v @ params.W_in[:, inner:] + params.b_in[inner:]
    if config.zero_CV:
        for direction in (0, 1):
            V_xBCdt[:, layout.C_cols(direction)] = 0.0
    return V_xBCdt


def _activate(stream, params, layout, convolve: "bool"):
    out = stream.copy()
    xbc = out[:, : layout.xbc_width]
    if convolve:
        xbc = causal_depthwise_conv(xbc, params.conv_weight, params.conv_bias)
    out[:, : layout.xbc_width] = silu(xbc)
    return out


def prepare_stream(
    Q_xBCdt,
    V_flat,
    uv,
    query_ids,
    H_f: "int",
    W_f: "int",
    order,
    params: "LayerParams",
    config: "LayerConfig",
) -> "Tuple[MergedSequence, np.ndarray]":
    """Merged, convolved and activated xBCdt stream of one camera/traversal."""
    layout = InputLayout(config.dims)
    query_rows = Q_xBCdt[query_ids]
    if config.merge_order == "after_conv":
        V_flat = _activate(V_flat, params, layout, convolve=True)
        query_rows = _activate(query_rows, params, layout, convolve=False)
    if config.insertion_mode == "project":
        merged, stream = merge_hits(
            V_flat,
            query_rows,
            uv,
            np.arange(len(query_ids)),
            H_f,
            W_f,
            order,
            config.merge_offset,
        )
    else:
        merged, stream = insertion_baselines(
            query_rows,
            V_flat,
            config.insertion_mode,
            np.arange(len(query_ids)),
        )
    # Map copy slots back to BEV query ids.
    merged = MergedSequence(
        s_mask=merged.s_mask,
        insert_positions=merged.insert_positions,
        extract_index=np.asarray(query_ids, dtype=np.int64)[merged.extract_index],
    )
    if config.merge_order == "before_conv":
        stream = _activate(stream, params, layout, convolve=True)
    return merged, stream


def insertion_baselines(query_tokens, values_flat, mode: "str", extract_ids):
    """Append or prepend every query copy to the feature stream."""
    if mode not in ("append", "prepend"):
        raise ContractError(reason=f"insertion mode '{mode}' is not a baseline")
    return append_merge(
        values_flat, query_tokens, extract_ids, prepend=(mode == "prepend")
    )


def cross_scan(
    merged: "MergedSequence",
    stream,
    params: "LayerParams",
    config: "LayerConfig",
    counter: "Optional[FlopCounter]" = None,
) -> "np.ndarray":
    """Summed bidirectional readout at the query rows, in stream order."""
    dims = config.dims
    forward, backward = InputLayout(dims).split(stream)
    if config.zero_dtQ:
        inp = XQSSMInput.from_directions(forward, backward, merged.s_mask)
        backend = config.xqssm_backend()
        return backend(inp, params.ssm_fwd, params.ssm_bwd, dims, counter)
    # Queries carry their own Δ: plain scans over the whole stream.
    y_fwd, _ = scan_recurrent(forward, params.ssm_fwd.without_skip(), dims)
    y_bwd, _ = scan_recurrent(backward.reversed(), params.ssm_bwd.without_skip(), dims)
    y = y_fwd + y_bwd[::-1]
    return y[~merged.s_mask]


def gate(y, z, params: "LayerParams", config: "LayerConfig") -> "np.ndarray":
    gated = y * silu(z)
    if config.rms_gated:
        gated = rms_norm(gated, params.rms_gain, NUMERICS.rms_eps)
    return gated


def _extract_and_gate(y_q, Q_z, merged, params, config):
    z = Q_z[merged.extract_index]
    if config.extract_order == "before_gate":
        return gate(y_q, z, params, config)
    # Gate the whole stream; feature rows have no z and gate to zero.
    L = merged.length
    y_full = np.zeros((L, y_q.shape[1]))
    z_full = np.zeros((L, z.shape[1]))
    y_full[~merged.s_mask] = y_q
    z_full[~merged.s_mask] = z
    return gate(y_full, z_full, params, config)[~merged.s_mask]


@dataclass
class StreamResult:
    camera: int
    traversal: int
    extract_index: np.ndarray
    gated: np.ndarray
    V: int
    M: int


@dataclass
class LayerTrace:
    """Intermediate results of one forward call."""

    Q_y: "Optional[np.ndarray]" = None
    count: "Optional[np.ndarray]" = None
    stage_norms: "Dict[str, float]" = field(default_factory=dict)
    streams: "list" = field(default_factory=list)
    flops: int = 0

    def record(self, stage: "str", array):
        check_finite(array, stage)
        self.stage_norms[stage] = float(np.linalg.norm(array))


def _run_stream(task, Q_z, Q_xBCdt, refs, value_maps, params, config):
    camera, traversal, order = task
    fmap = value_maps[camera]
    H_f, W_f = fmap.shape[:2]
    uv, query_ids = refs.hits(camera)
    V_flat = project_values(flatten_map(fmap, order), params, config)
    merged, stream = prepare_stream(
        Q_xBCdt, V_flat, uv, query_ids, H_f, W_f, order, params, config
    )
    check_finite(stream, "merge")
    y_q = check_finite(cross_scan(merged, stream, params, config), "xqssm")
    gated = check_finite(_extract_and_gate(y_q, Q_z, merged, params, config), "gate")
    LOG.debug(f"camera {camera} traversal {order}: V={H_f * W_f} M={merged.M}")
    return StreamResult(
        camera, traversal, merged.extract_index, gated, H_f * W_f, merged.M
    )


def apply_dropout(update, rate: "float", seed: "int" = 0) -> "np.ndarray":
    if rate <= 0.0:
        return update
    keep = SeededStream(seed, STREAM_DROPOUT).uniform(update.shape) >= rate
    return np.where(keep, update / (1.0 - rate), 0.0)


def spatial_cross_mamba_forward(
    q,
    value_maps: "Sequence[np.ndarray]",
    refs: "ReferencePointSet",
    params: "LayerParams",
    config: "LayerConfig",
    trace: "Optional[LayerTrace]" = None,
    workers: "int" = 1,
    dropout_seed: "int" = 0,
) -> "np.ndarray":
    """``q`` (Q, D) BEV queries, ``value_maps`` one (H_f, W_f, D) map per camera."""
    dims = config.dims
    params.validate(config)
    q = check_shape(np.asarray(q, dtype=np.float64), (None, dims.model_dim), "q")
    if refs is None:
        raise ContractError(reason="reference points are required")
    if refs.cameras != len(value_maps):
        raise ContractError(
            reason=f"{refs.cameras} reference sets for {len(value_maps)} cameras"
        )
    if refs.num_queries != q.shape[0]:
        raise ContractError(
            reason=(
                f"reference points cover {refs.num_queries} queries, "
                f"got {q.shape[0]}"
            )
        )
    for camera, fmap in enumerate(value_maps):
        check_shape(fmap, (None, None, dims.model_dim), f"value_maps[{camera}]")
    trace = trace if trace is not None else LayerTrace()

    Q_z, Q_xBCdt, _ = project_inputs(q, np.zeros((0, dims.model_dim)), params, config)
    trace.record("project", Q_xBCdt)

    tasks = [
        (camera, index, order)
        for camera in range(refs.cameras)
        for index, order in enumerate(config.traversals)
    ]

    def run(task):
        return _run_stream(task, Q_z, Q_xBCdt, refs, value_maps, params, config)

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]

    # Fixed (camera, traversal) order keeps the sums reproducible.
    Q_y = np.zeros((q.shape[0], dims.inner_dim))
    for result in results:
        np.add.at(Q_y, result.extract_index, result.gated)
        trace.flops += xqssm_flops(
            result.V, result.M, dims.heads, dims.state_dim, dims.inner_dim
        ).total
    trace.streams = results
    trace.record("accumulate", Q_y)

    count = np.maximum(refs.hit_counts().astype(np.float64), 1.0)
    Q_out = Q_y / count[:, None] if config.averages else Q_y
    update = apply_dropout(Q_out @ params.W_out, config.dropout, dropout_seed)
    trace.record("update", update)
    out = layer_norm(q + update, params.norm_gain, params.norm_bias, NUMERICS.norm_eps)
    trace.record("output", out)
    trace.Q_y, trace.count = Q_y, count
    return out


@dataclass(frozen=True)
class HydraBlockParams:
    """Pre-norm Mamba block around the bidirectional mixer.

    Projection layout ``[z | x | B | C | dt]``.
    """

    W_in: np.ndarray
    b_in: np.ndarray
    conv_weight: np.ndarray
    conv_bias: np.ndarray
    W_out: np.ndarray
    rms_gain: np.ndarray
    norm_gain: np.ndarray
    norm_bias: np.ndarray
    ssm_fwd: SSMParams
    ssm_bwd: SSMParams


def hydra_widths(dims: "SSMDims") -> "Tuple[int, int]":
    """(projection width, convolved width)."""
    xbc = dims.inner_dim + 2 * dims.bc_dim
    return dims.inner_dim + xbc + dims.heads, xbc


def init_hydra_params(
    dims: "SSMDims", conv_width: "int", stream: "SeededStream"
) -> "HydraBlockParams":
    width, xbc = hydra_widths(dims)
    D = dims.model_dim
    return HydraBlockParams(
        W_in=stream.child(0).normal((D, width), 1.0 / np.sqrt(D)),
        b_in=np.zeros(width),
        conv_weight=stream.child(1).normal(
            (conv_width, xbc), 1.0 / np.sqrt(conv_width)
        ),
        conv_bias=np.zeros(xbc),
        W_out=stream.child(2).normal(
            (dims.inner_dim, D), 1.0 / np.sqrt(dims.inner_dim)
        ),
        rms_gain=np.ones(dims.inner_dim),
        norm_gain=np.ones(D),
        norm_bias=np.zeros(D),
        ssm_fwd=init_ssm_params(dims.heads, stream.child(3)),
        ssm_bwd=init_ssm_params(dims.heads, stream.child(4)),
    )


def hydra_self_attention(
    Q_grid, params: "HydraBlockParams", dims: "SSMDims", order=ROW_MAJOR
) -> "np.ndarray":
    Q_grid = np.asarray(Q_grid, dtype=np.float64)
    check_shape(Q_grid, (None, None, dims.model_dim), "Q_grid")
    H, W = Q_grid.shape[:2]
    width, xbc_width = hydra_widths(dims)
    check_shape(params.W_in, (dims.model_dim, width), "W_in")
    inner, bc = dims.inner_dim, dims.bc_dim

    tokens = flatten_map(Q_grid, order)
    normed = layer_norm(tokens, params.norm_gain, params.norm_bias, NUMERICS.norm_eps)
    proj = normed @ params.W_in + params.b_in
    z = proj[:, :inner]
    xbc = silu(
        causal_depthwise_conv(
            proj[:, inner : inner + xbc_width], params.conv_weight, params.conv_bias
        )
    )
    seq = SequenceBatch(
        xbc[:, :inner],
        xbc[:, inner : inner + bc],
        xbc[:, inner + bc :],
        proj[:, inner + xbc_width :],
    )
    y = hydra_bidirectional(seq, params.ssm_fwd, params.ssm_bwd, dims)
    y = rms_norm(y * silu(z), params.rms_gain, NUMERICS.rms_eps)
    out = check_finite(tokens + y @ params.W_out, "self_attention")
    return unflatten_map(out, H, W, order)


def grid_queries(q, H_bev: "int", W_bev: "int") -> "np.ndarray":
    """(Q, D) row-major queries as an (H_bev, W_bev, D) grid."""
    return rearrange(q, "(h w) d -> h w d", h=H_bev, w=W_bev)
