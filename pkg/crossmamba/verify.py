"""Seeded invariant checks across every module.

Each check returns a :class:`CheckResult`; the suite never raises on a
failed property, it reports it.
"""
from dataclasses import asdict, dataclass, replace
import itertools
import json
import logging
import os
import tempfile
import typing

import numpy as np

from .baselines import (
    deformable_xattn,
    dense_deformable_xattn,
    naive_mamba_xattn,
    unrolled_mamba_xattn,
)
from .bench import BENCH_DIMS, traced_peak
from .complexity import (
    DEFORMABLE,
    DOT_PRODUCT,
    ESTIMATORS,
    SCALING_FIELDS,
    XQSSM,
    ComplexityConfig,
    complexity_report,
    doubled,
    reference_ratios,
    scaling_ratios,
    scale_sweep_reports,
)
from .config import NUMERICS, SSMDims
from .exception import CrossMambaException, TensorFormatError, UsageError
from .geometry import BEVGridSpec, CameraModel, ReferencePointSet, bev_cell_centers
from .geometry import lift_and_project, radial_range, reference_points, ring_rig
from .instances import (
    SMALL_DIMS,
    SMOKE_DIMS,
    SmokeCase,
    basis_value_batch,
    random_batch,
    random_deformable_instance,
    random_mask,
    random_merge_instance,
    random_params,
    verify_stream,
)
from .layer import (
    EXTRACT_ORDERS,
    INSERTION_MODES,
    MERGE_ORDERS,
    NORM_MODES,
    InputLayout,
    LayerConfig,
    LayerTrace,
    _activate,
    prepare_stream,
    project_inputs,
    project_values,
    spatial_cross_mamba_forward,
)
from .merge import build_merged, filter_stream, index_offset, naive_insertion
from .pipeline import RunConfig, run_pipeline
from .rng import STREAM_RIG, SeededStream
from .scene import SceneSpec, gen_scene, load_scene_spec, scene_from_flags
from .ssm import ScanState, SequenceBatch, discretize, hydra_bidirectional
from .ssm import scan_matrix_mixer, scan_recurrent
from .tensorio import load_tensor
from .traversal import ORDERS, TraversalOrder, flatten_map, flatten_permutation
from .traversal import visit_order
from .utils import layer_norm
from .xqssm import FlopCounter, ParallelXQSSM, RecurrentXQSSM, XQSSMInput
from .xqssm import recurrent_kernel_flops, xqssm_flops
from .xqssm.recurrent import masked_direction_scan

if typing.TYPE_CHECKING:
    from typing import Callable, Dict, List

LOG = logging.getLogger(__name__)

FAST = "fast"
FULL = "full"
LEVELS = (FAST, FULL)


@dataclass
class CheckResult:
    name: str
    instances: int
    max_error: float
    passed: bool
    detail: str = ""


CHECKS: "Dict[str, Callable]" = {}


def check(name):
    def register(fn):
        CHECKS[name] = fn
        return fn

    return register


def _count(level, fast, full):
    return full if level == FULL else fast


@check("scan_duality")
def check_scan_duality(level, seed):
    dims = SSMDims(**SMALL_DIMS)
    instances = _count(level, 20, 200)
    max_len = _count(level, 64, 128)
    worst = 0.0
    for i in range(instances):
        stream = verify_stream(seed, i)
        L = int(stream.integers(0, max_len + 1))
        seq = random_batch(stream, dims, L)
        params = random_params(stream, dims.heads)
        y_rec, _ = scan_recurrent(seq, params, dims)
        y_mix = scan_matrix_mixer(seq, params, dims)
        worst = max(worst, float(np.max(np.abs(y_rec - y_mix), initial=0.0)))
    return CheckResult("scan_duality", instances, worst, worst < 1e-10)


@check("scan_chaining")
def check_scan_chaining(level, seed):
    dims = SSMDims(**SMALL_DIMS)
    instances = _count(level, 10, 50)
    worst = 0.0
    for i in range(instances):
        stream = verify_stream(seed, 1000 + i)
        seq = random_batch(stream, dims, 24)
        params = random_params(stream, dims.heads)
        cut = int(stream.integers(0, 25))
        y_all, h_all = scan_recurrent(seq, params, dims)
        y_a, h_a = scan_recurrent(seq.slice(0, cut), params, dims)
        y_b, h_b = scan_recurrent(seq.slice(cut, 24), params, dims, init=h_a)
        worst = max(
            worst,
            float(np.max(np.abs(np.concatenate([y_a, y_b]) - y_all))),
            float(np.max(np.abs(h_b.h - h_all.h))),
        )
    return CheckResult("scan_chaining", instances, worst, worst < 1e-12)


def _pinned_oracle(inp, fwd, bwd, dims):
    """Plain scans with Δ pinned to 0 on query rows, read at query rows."""
    outputs = []
    for index, params in ((0, fwd), (1, bwd)):
        mask = inp.mask(index)
        y, _ = scan_recurrent(
            inp.direction(index), params.without_skip(), dims, pin_zero=~mask
        )
        outputs.append(y[~mask])
    return outputs[0] + outputs[1][::-1]


def _random_xqssm(seed, index, dims, L, M):
    stream = verify_stream(seed, index)
    inp = XQSSMInput.from_directions(
        random_batch(stream, dims, L),
        random_batch(stream, dims, L),
        random_mask(stream, L, M),
    )
    return inp, random_params(stream, dims.heads), random_params(stream, dims.heads)


@check("query_state_invariance")
def check_query_state(level, seed):
    dims = SSMDims(**SMALL_DIMS)
    instances = _count(level, 10, 100)
    failures = 0
    for i in range(instances):
        inp, fwd, bwd = _random_xqssm(seed, 2000 + i, dims, 16, 6)
        for index, params in ((0, fwd), (1, bwd)):
            seq, mask = inp.direction(index), inp.mask(index)
            state = ScanState.zeros(dims)
            for t in range(seq.length):
                pinned = ~mask[t : t + 1]
                _, after = scan_recurrent(
                    seq.slice(t, t + 1), params, dims, init=state, pin_zero=pinned
                )
                if not mask[t] and not np.array_equal(after.h, state.h):
                    failures += 1
                state = after
    return CheckResult(
        "query_state_invariance", instances, float(failures), not failures
    )


@check("xqssm_oracle")
def check_xqssm_oracle(level, seed):
    dims = SSMDims(**SMALL_DIMS)
    instances = _count(level, 10, 100)
    worst = 0.0
    recurrent, parallel = RecurrentXQSSM(), ParallelXQSSM()
    for i in range(instances):
        stream = verify_stream(seed, 3000 + i)
        L = int(stream.integers(1, 49))
        M = int(stream.integers(0, L + 1))
        inp, fwd, bwd = _random_xqssm(seed, 3000 + i, dims, L, M)
        y_rec = recurrent(inp, fwd, bwd, dims)
        y_par = parallel(inp, fwd, bwd, dims)
        y_ref = _pinned_oracle(inp, fwd, bwd, dims)
        worst = max(
            worst,
            float(np.max(np.abs(y_rec - y_ref), initial=0.0)),
            float(np.max(np.abs(y_par - y_rec), initial=0.0)),
        )
    return CheckResult("xqssm_oracle", instances, worst, worst < 1e-10)


@check("flop_counter")
def check_flop_counter(level, seed):
    dims = SSMDims(model_dim=2, expand=2.0, heads=2, head_dim=2, state_dim=2)
    configs = _count(level, 3, 20)
    stream = verify_stream(seed, 4000)
    worst = 0.0
    ratio = 0.0
    for i in range(configs):
        top = np.log(_count(level, 1e3, 1e4))
        V = int(np.exp(stream.uniform((), np.log(100), top)))
        M = int(np.exp(stream.uniform((), 0.0, np.log(1000))))
        inp, fwd, bwd = _random_xqssm(seed, 4000 + i, dims, V + M, M)
        counter = FlopCounter.for_dims(dims)
        RecurrentXQSSM()(inp, fwd, bwd, dims, counter)
        shape = (V, M, dims.heads, dims.state_dim, dims.inner_dim)
        expected = recurrent_kernel_flops(*shape)
        worst = max(worst, abs(counter.total - expected) / expected)
        ratio = max(ratio, counter.total / xqssm_flops(*shape).total)
    detail = f"kernel/estimate ratio up to {ratio:.2f}"
    passed = worst <= NUMERICS.flop_tolerance
    return CheckResult("flop_counter", configs, worst, passed, detail)


@check("merge_oracle")
def check_merge_oracle(level, seed):
    instances = _count(level, 100, 1000)
    failures = 0
    for i in range(instances):
        stream = verify_stream(seed, 5000 + i)
        values, queries, R_1D = random_merge_instance(stream)
        ids = np.arange(len(R_1D))
        positions = index_offset(R_1D, length=len(values))
        merged, tokens = build_merged(values, queries, positions, ids)
        s_mask, naive_tokens, naive_extract = naive_insertion(
            values, queries, R_1D, ids
        )
        ok = (
            np.array_equal(merged.s_mask, s_mask)
            and np.array_equal(merged.extract_index, naive_extract)
            and np.array_equal(tokens.reshape(-1), naive_tokens.reshape(-1))
            and np.array_equal(filter_stream(tokens, merged.s_mask), values)
        )
        failures += not ok
    return CheckResult("merge_oracle", instances, float(failures), not failures)


def _traversal_cases():
    for H, W in ((1, 1), (2, 3), (4, 4), (6, 8)):
        for variant in ORDERS:
            if variant != "patch":
                yield H, W, TraversalOrder(variant=variant)
            elif H % 2 == 0 and W % 2 == 0:
                yield H, W, TraversalOrder(variant="patch", H_p=2, W_p=2)


@check("traversal_bijection")
def check_traversal(level, seed):
    failures = 0
    instances = 0
    for H, W, order in _traversal_cases():
        perm = flatten_permutation(H, W, order)
        instances += 1
        failures += not np.array_equal(np.sort(perm), np.arange(H * W))
    return CheckResult("traversal_bijection", instances, float(failures), not failures)


@check("geometry_rig")
def check_geometry(level, seed):
    seeds = _count(level, 3, 10)
    spec = BEVGridSpec(H_bev=50, W_bev=50)
    radius = radial_range(bev_cell_centers(spec))
    in_range = (radius >= 12.0) & (radius <= 50.0)
    worst = 0.0
    exclusive = True
    for s in range(seeds):
        rig = ring_rig(6, SeededStream(seed + s, STREAM_RIG), 60.0, 800, 450)
        refs = reference_points(spec, rig)
        per_point = refs.b.sum(axis=0)
        exclusive &= bool(np.all(per_point[in_range] == 1))
        expected = in_range.sum() * spec.Z / 6.0
        M = refs.b[:, in_range].reshape(6, -1).sum(axis=1)
        worst = max(worst, float(np.max(np.abs(M - expected) / expected)))
    return CheckResult("geometry_rig", seeds, worst, exclusive and worst <= 0.10)


@check("scale_sweep")
def check_scale_sweep(level, seed):
    reports = scale_sweep_reports()
    worst = 0.0
    for module in (DOT_PRODUCT, XQSSM, DEFORMABLE):
        ours = scaling_ratios(reports, module)
        reported = reference_ratios(module)
        for a, b in zip(ours[1:], reported[1:]):
            worst = max(worst, abs(a - b) / b)
    return CheckResult(
        "scale_sweep", len(reports), worst, worst <= NUMERICS.scaling_tolerance
    )


@check("layer_residual")
def check_layer_residual(level, seed):
    case = SmokeCase(seed)
    params = replace(case.params, W_out=np.zeros_like(case.params.W_out))
    out = spatial_cross_mamba_forward(
        case.q, case.value_maps, case.refs, params, case.config
    )
    expected = layer_norm(case.q, params.norm_gain, params.norm_bias, NUMERICS.norm_eps)
    error = float(np.max(np.abs(out - expected)))
    return CheckResult("layer_residual", 1, error, error == 0.0)


@check("layer_duplication")
def check_layer_duplication(level, seed):
    config = LayerConfig(dims=SSMDims(**SMOKE_DIMS), norm_mode="average")
    case = SmokeCase(seed, config)
    single = spatial_cross_mamba_forward(
        case.q, case.value_maps, case.refs, case.params, config
    )
    doubled_refs = ReferencePointSet(
        R=np.concatenate([case.refs.R, case.refs.R], axis=2),
        b=np.concatenate([case.refs.b, case.refs.b], axis=2),
    )
    doubled = spatial_cross_mamba_forward(
        case.q, case.value_maps, doubled_refs, case.params, config
    )
    error = float(np.max(np.abs(single - doubled)))
    return CheckResult("layer_duplication", 1, error, error < 1e-9)


@check("layer_config_grid")
def check_layer_grid(level, seed):
    combos = list(
        itertools.product(NORM_MODES, INSERTION_MODES, MERGE_ORDERS, EXTRACT_ORDERS)
    )
    if level == FAST:
        combos = combos[:: len(MERGE_ORDERS) * len(EXTRACT_ORDERS) + 1]
    failures = 0
    for norm_mode, insertion_mode, merge_order, extract_order in combos:
        config = LayerConfig(
            dims=SSMDims(**SMOKE_DIMS),
            norm_mode=norm_mode,
            insertion_mode=insertion_mode,
            merge_order=merge_order,
            extract_order=extract_order,
        )
        case = SmokeCase(seed, config)
        try:
            out = spatial_cross_mamba_forward(
                case.q, case.value_maps, case.refs, case.params, config
            )
            failures += not np.all(np.isfinite(out))
        except CrossMambaException as exc:
            combo = "/".join((norm_mode, insertion_mode, merge_order, extract_order))
            LOG.error(f"{combo}: {exc}")
            failures += 1
    return CheckResult("layer_config_grid", len(combos), float(failures), not failures)


@check("tensor_format_guard")
def check_tensor_format(level, seed):
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "corrupt.xbev")
        with open(path, "wb") as f:
            f.write(b"XBEX" + bytes(8))
        try:
            load_tensor(path)
        except TensorFormatError as exc:
            return CheckResult("tensor_format_guard", 1, 0.0, path in str(exc))
    return CheckResult("tensor_format_guard", 1, 1.0, False, "corrupt file loaded")


@check("discretize_monotone")
def check_discretize(level, seed):
    dims = SSMDims(**SMALL_DIMS)
    instances = _count(level, 10, 100)
    dt = np.repeat(np.linspace(-8.0, 8.0, 65)[:, None], dims.heads, axis=1)
    worst = 0.0
    in_range = True
    for i in range(instances):
        params = random_params(verify_stream(seed, 6000 + i), dims.heads)
        delta, dA = discretize(dt, params)
        in_range &= bool(np.all((delta > 0.0) & (dA > 0.0) & (dA <= 1.0)))
        worst = max(worst, float(np.max(np.diff(dA, axis=0))))
    return CheckResult(
        "discretize_monotone", instances, max(worst, 0.0), in_range and worst <= 0.0
    )


@check("hydra_reversal")
def check_hydra_reversal(level, seed):
    dims = SSMDims(**SMALL_DIMS)
    instances = _count(level, 10, 100)
    worst = 0.0
    for i in range(instances):
        stream = verify_stream(seed, 6100 + i)
        seq = random_batch(stream, dims, int(stream.integers(1, 33)))
        fwd = random_params(stream, dims.heads)
        bwd = random_params(stream, dims.heads)
        y = hydra_bidirectional(seq, fwd, bwd, dims)
        y_rev = hydra_bidirectional(seq.reversed(), bwd, fwd, dims)
        worst = max(worst, float(np.max(np.abs(y_rev - y[::-1]))))
    return CheckResult("hydra_reversal", instances, worst, worst < 1e-12)


@check("zero_readout_skip")
def check_zero_readout(level, seed):
    dims = SSMDims(**SMALL_DIMS)
    instances = _count(level, 10, 100)
    worst = 0.0
    for i in range(instances):
        stream = verify_stream(seed, 6200 + i)
        seq = random_batch(stream, dims, int(stream.integers(1, 33)))
        seq = SequenceBatch(seq.x, seq.B_in, np.zeros_like(seq.C_in), seq.dt)
        params = random_params(stream, dims.heads)
        expected = np.repeat(params.skip_D, dims.head_dim)[None, :] * seq.x
        y_rec, _ = scan_recurrent(seq, params, dims)
        y_mix = scan_matrix_mixer(seq, params, dims)
        worst = max(
            worst,
            float(np.max(np.abs(y_rec - expected))),
            float(np.max(np.abs(y_mix - expected))),
        )
    return CheckResult("zero_readout_skip", instances, worst, worst < 1e-12)


@check("scan_duality_float32")
def check_scan_float32(level, seed):
    dims = SSMDims(**SMALL_DIMS)
    instances = _count(level, 5, 50)
    worst = 0.0
    for i in range(instances):
        stream = verify_stream(seed, 6300 + i)
        seq = random_batch(stream, dims, int(stream.integers(1, 129)))
        params = random_params(stream, dims.heads)
        y_ref, _ = scan_recurrent(seq, params, dims)
        y_rec, _ = scan_recurrent(seq, params, dims, dtype=np.float32)
        y_mix = scan_matrix_mixer(seq, params, dims, dtype=np.float32)
        scale = max(float(np.max(np.abs(y_ref))), NUMERICS.norm_eps)
        worst = max(
            worst,
            float(np.max(np.abs(y_rec - y_mix))) / scale,
            float(np.max(np.abs(y_rec - y_ref))) / scale,
        )
    return CheckResult("scan_duality_float32", instances, worst, worst < 1e-3)


@check("geometry_scaling")
def check_geometry_scaling(level, seed):
    spec = BEVGridSpec(H_bev=10, W_bev=10)
    centers = bev_cell_centers(spec)
    rigs = _count(level, 2, 10)
    worst = 0.0
    same_hits = True
    for s in range(rigs):
        for cam in ring_rig(6, SeededStream(seed + s, STREAM_RIG), 60.0, 800, 450):
            scaled = cam.matrix.copy()
            scaled[:2] *= 2.0
            big = CameraModel.from_matrix(scaled, 2 * cam.img_w, 2 * cam.img_h)
            uv_a, valid_a = lift_and_project(centers, spec, cam)
            uv_b, valid_b = lift_and_project(centers, spec, big)
            same_hits &= bool(np.array_equal(valid_a, valid_b))
            if same_hits and valid_a.any():
                error = np.max(np.abs(uv_a[valid_a] - uv_b[valid_b]))
                worst = max(worst, float(error))
    return CheckResult("geometry_scaling", rigs, worst, same_hits and worst < 1e-9)


@check("hits_bounded")
def check_hits_bounded(level, seed):
    spec = BEVGridSpec(H_bev=20, W_bev=20)
    rigs = _count(level, 3, 20)
    failures = 0
    for s in range(rigs):
        cameras = 1 + s % 6
        rig = ring_rig(cameras, SeededStream(seed + s, STREAM_RIG), 90.0, 800, 450)
        refs = reference_points(spec, rig)
        hit_uv = refs.R[refs.b]
        failures += not (
            np.all(refs.M <= spec.num_queries * spec.Z)
            and np.all((hit_uv >= 0.0) & (hit_uv <= 1.0))
        )
    return CheckResult("hits_bounded", rigs, float(failures), not failures)


@check("traversal_inverse")
def check_traversal_inverse(level, seed):
    failures = 0
    instances = 0
    for H, W, order in _traversal_cases():
        instances += 1
        visit = visit_order(H, W, order)
        perm = flatten_permutation(H, W, order)
        failures += not np.array_equal(visit[perm], np.arange(H * W))
    return CheckResult("traversal_inverse", instances, float(failures), not failures)


@check("snake_even_rows")
def check_snake_rows(level, seed):
    failures = 0
    shapes = ((1, 1), (2, 3), (5, 4), (6, 8))
    for H, W in shapes:
        row = flatten_permutation(H, W, "row_major").reshape(H, W)
        col = flatten_permutation(H, W, "column_major").reshape(H, W)
        row_snake = flatten_permutation(H, W, "row_snake").reshape(H, W)
        col_snake = flatten_permutation(H, W, "column_snake").reshape(H, W)
        failures += not np.array_equal(row_snake[::2], row[::2])
        failures += not np.array_equal(col_snake[:, ::2], col[:, ::2])
    return CheckResult("snake_even_rows", len(shapes), float(failures), not failures)


@check("merge_precedence")
def check_merge_precedence(level, seed):
    instances = _count(level, 100, 1000)
    failures = 0
    for i in range(instances):
        stream = verify_stream(seed, 6400 + i)
        values, queries, R_1D = random_merge_instance(stream)
        positions = index_offset(R_1D, length=len(values))
        merged, _ = build_merged(values, queries, positions, np.arange(len(R_1D)))
        before = np.cumsum(merged.s_mask)[merged.insert_positions]
        failures += not np.array_equal(before, R_1D)
    return CheckResult("merge_precedence", instances, float(failures), not failures)


@check("xqssm_causality")
def check_xqssm_causality(level, seed):
    dims = SSMDims(**SMALL_DIMS)
    instances = _count(level, 5, 50)
    worst = 0.0
    for i in range(instances):
        inp, fwd, bwd = _random_xqssm(seed, 6500 + i, dims, 40, 8)
        for index, params in ((0, fwd), (1, bwd)):
            seq, mask = inp.direction(index), inp.mask(index)
            y = masked_direction_scan(seq, mask, params, dims)
            queries = np.flatnonzero(~mask)
            k = len(queries) // 2
            later = ((np.arange(seq.length) > queries[k]) & mask)[:, None]
            noisy = SequenceBatch(
                np.where(later, seq.x + 10.0, seq.x),
                np.where(later, -seq.B_in, seq.B_in),
                seq.C_in,
                np.where(later, seq.dt + 1.0, seq.dt),
            )
            y_noisy = masked_direction_scan(noisy, mask, params, dims)
            error = np.max(np.abs(y_noisy[: k + 1] - y[: k + 1]))
            worst = max(worst, float(error))
    return CheckResult("xqssm_causality", instances, worst, worst == 0.0)


@check("xqssm_memory")
def check_xqssm_memory(level, seed):
    dims = SSMDims(**BENCH_DIMS)
    backend = RecurrentXQSSM()
    lengths = (64, 256, 1024)
    peaks = []
    for L in lengths:
        inp, fwd, bwd = _random_xqssm(seed, 6600, dims, L, 8)
        peaks.append(traced_peak(lambda: backend(inp, fwd, bwd, dims=dims)))
    growth = max(peaks) / peaks[0]
    detail = ", ".join(f"L={L}: {p} B" for L, p in zip(lengths, peaks))
    return CheckResult("xqssm_memory", len(lengths), growth, growth <= 1.1, detail)


@check("layer_zero_hits")
def check_layer_zero_hits(level, seed):
    case = SmokeCase(seed)
    rows = [0, case.bev.num_queries - 1]
    refs = case.refs_without_hits(rows)
    shifted = [3.0 * fmap + 1.0 for fmap in case.value_maps]
    worst = 0.0
    for value_maps in (case.value_maps, shifted):
        trace = LayerTrace()
        spatial_cross_mamba_forward(
            case.q, value_maps, refs, case.params, case.config, trace=trace
        )
        worst = max(worst, float(np.max(np.abs(trace.Q_y[rows]))))
    return CheckResult("layer_zero_hits", 2, worst, worst == 0.0)


@check("after_conv_identity")
def check_after_conv(level, seed):
    config = LayerConfig(dims=SSMDims(**SMOKE_DIMS), merge_order="after_conv")
    case = SmokeCase(seed, config)
    layout = InputLayout(config.dims)
    order = config.traversals[0]
    _, Q_xBCdt, _ = project_inputs(
        case.q, np.zeros((0, config.dims.model_dim)), case.params, config
    )
    failures = 0
    for camera, fmap in enumerate(case.value_maps):
        V_flat = project_values(flatten_map(fmap, order), case.params, config)
        uv, query_ids = case.refs.hits(camera)
        H_f, W_f = fmap.shape[:2]
        merged, stream = prepare_stream(
            Q_xBCdt, V_flat, uv, query_ids, H_f, W_f, order, case.params, config
        )
        values = _activate(V_flat, case.params, layout, convolve=True)
        failures += not np.array_equal(stream[merged.s_mask], values)
    return CheckResult(
        "after_conv_identity", len(case.value_maps), float(failures), not failures
    )


@check("layer_zero_flags")
def check_layer_zero_flags(level, seed):
    flags = list(itertools.product((True, False), repeat=3))
    orders = list(itertools.product(MERGE_ORDERS, EXTRACT_ORDERS))
    if level == FAST:
        orders = orders[:1]
    failures = 0
    for flag, (merge_order, extract_order) in itertools.product(flags, orders):
        config = LayerConfig(
            dims=SSMDims(**SMOKE_DIMS),
            **dict(zip(("zero_BQ", "zero_CV", "zero_dtQ"), flag)),
            merge_order=merge_order,
            extract_order=extract_order,
        )
        case = SmokeCase(seed, config)
        out = spatial_cross_mamba_forward(
            case.q, case.value_maps, case.refs, case.params, config
        )
        failures += not (out.shape == case.q.shape and np.all(np.isfinite(out)))
    combos = len(flags) * len(orders)
    return CheckResult("layer_zero_flags", combos, float(failures), not failures)


@check("estimator_monotone")
def check_estimator_monotone(level, seed):
    base = ComplexityConfig()
    failures = []
    for module, fields in SCALING_FIELDS.items():
        flops = ESTIMATORS[module](base).flops
        for name in fields:
            if ESTIMATORS[module](doubled(base, name)).flops <= flops:
                failures.append(f"{module}.{name}")
    instances = sum(len(fields) for fields in SCALING_FIELDS.values())
    return CheckResult(
        "estimator_monotone",
        instances,
        float(len(failures)),
        not failures,
        ", ".join(failures),
    )


def _dot_gap(report) -> "float":
    modules = report.by_module()
    return modules[DOT_PRODUCT].flops / modules[XQSSM].flops


@check("ratio_growth")
def check_ratio_growth(level, seed):
    sweep = [_dot_gap(r) for r in scale_sweep_reports()]
    tokens = [
        _dot_gap(
            complexity_report(
                ComplexityConfig(cameras=1, stride=1, img_w=side, img_h=side)
            )
        )
        for side in (100, 1000)
    ]
    passed = 1.0 < sweep[0] < sweep[1] < sweep[2] and tokens[0] < tokens[1]
    detail = "dot/xqssm " + ", ".join(f"{g:.2f}" for g in sweep + tokens)
    return CheckResult("ratio_growth", 5, 0.0 if passed else 1.0, passed, detail)


@check("deformable_oracle")
def check_deformable_oracle(level, seed):
    instances = _count(level, 10, 100)
    worst = 0.0
    for i in range(instances):
        instance = random_deformable_instance(verify_stream(seed, 6700 + i))
        error = deformable_xattn(*instance) - dense_deformable_xattn(*instance)
        worst = max(worst, float(np.max(np.abs(error))))
    return CheckResult("deformable_oracle", instances, worst, worst < 1e-10)


@check("naive_mamba_oracle")
def check_naive_mamba_oracle(level, seed):
    instances = _count(level, 10, 100)
    worst = 0.0
    for i in range(instances):
        stream = verify_stream(seed, 6800 + i)
        T = int(stream.integers(1, 13))
        values, dims = basis_value_batch(stream, T)
        params = random_params(stream, 1)
        C_rows = stream.normal((4, T))
        naive = naive_mamba_xattn(values, params, C_rows, dims)
        error = naive - unrolled_mamba_xattn(values, params, C_rows, dims)
        worst = max(worst, float(np.max(np.abs(error))))
    return CheckResult("naive_mamba_oracle", instances, worst, worst < 1e-12)


def _small_scene(seed):
    return scene_from_flags(
        seed=seed, cameras=3, fov=120.0, bev=(4, 4), levels=((3, 4, 8),)
    )


def _read_all(directory) -> "Dict[str, bytes]":
    out = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as f:
            out[name] = f.read()
    return out


@check("scene_round_trip")
def check_scene_round_trip(level, seed):
    spec = _small_scene(seed)
    data = json.loads(json.dumps(spec.as_dict()))
    with tempfile.TemporaryDirectory() as tmp:
        gen_scene(spec, tmp)
        loaded = load_scene_spec(tmp)
    passed = SceneSpec.from_dict(data) == spec and loaded == spec
    return CheckResult("scene_round_trip", 1, 0.0 if passed else 1.0, passed)


@check("byte_determinism")
def check_byte_determinism(level, seed):
    spec = _small_scene(seed)
    config = RunConfig.from_dict({"layer": {"dims": SMOKE_DIMS}})
    runs = []
    with tempfile.TemporaryDirectory() as tmp:
        for name in ("a", "b"):
            scene_dir = os.path.join(tmp, name, "scene")
            out_dir = os.path.join(tmp, name, "run")
            gen_scene(spec, scene_dir)
            run_pipeline(scene_dir, config, out_dir)
            runs.append((_read_all(scene_dir), _read_all(out_dir)))
    differing = [
        name
        for first, second in zip(*runs)
        for name in sorted(set(first) | set(second))
        if first.get(name) != second.get(name)
    ]
    return CheckResult(
        "byte_determinism",
        2,
        float(len(differing)),
        not differing,
        ", ".join(differing),
    )


def verify_suite(level: "str" = FAST, seed: "int" = 0) -> "Dict[str, object]":
    if level not in LEVELS:
        raise UsageError(reason=f"unknown verify level '{level}'")
    results: "List[CheckResult]" = []
    for name, fn in CHECKS.items():
        result = fn(level, seed)
        if result.passed:
            LOG.info(f"{name}: ok ({result.instances} instances)")
        else:
            LOG.error(f"{name}: FAILED max_error={result.max_error}")
        results.append(result)
    failed = sum(not r.passed for r in results)
    return {
        "level": level,
        "seed": seed,
        "total": len(results),
        "failed": failed,
        "passed": failed == 0,
        "checks": [asdict(r) for r in results],
    }
