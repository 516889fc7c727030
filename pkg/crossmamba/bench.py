"""Wall-clock comparison of the cross-scan backends and softmax attention."""
import csv
import io
import json
import logging
import time
import tracemalloc
import typing

from .baselines import dot_product_xattn
from .config import SSMDims
from .instances import random_batch, random_mask, random_params, verify_stream
from .xqssm import FlopCounter, ParallelXQSSM, RecurrentXQSSM, XQSSMInput
from .xqssm import recurrent_kernel_flops, xqssm_flops

if typing.TYPE_CHECKING:
    from typing import Dict, List, Sequence

LOG = logging.getLogger(__name__)

BENCH_DIMS = dict(model_dim=16, expand=2.0, heads=4, head_dim=8, state_dim=16)
BENCH_COLUMNS = (
    "V",
    "M",
    "recurrent_s",
    "parallel_s",
    "dot_product_s",
    "recurrent_peak_bytes",
    "counted_flops",
    "kernel_flops",
    "analytic_flops",
)


def _timed(fn):
    start = time.perf_counter()
    result = fn()
    return time.perf_counter() - start, result


def traced_peak(fn) -> "int":
    """Peak bytes allocated while ``fn`` runs, as seen by tracemalloc."""
    tracemalloc.start()
    try:
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return peak


def bench(
    sizes: "Sequence[int]" = (256, 1024, 4096), queries: "int" = 64, seed: "int" = 0
) -> "List[Dict[str, object]]":
    dims = SSMDims(**BENCH_DIMS)
    rows = []
    for index, V in enumerate(sizes):
        stream = verify_stream(seed, index)
        L = V + queries
        inp = XQSSMInput.from_directions(
            random_batch(stream, dims, L),
            random_batch(stream, dims, L),
            random_mask(stream, L, queries),
        )
        fwd = random_params(stream, dims.heads)
        bwd = random_params(stream, dims.heads)
        counter = FlopCounter.for_dims(dims)
        recurrent_s, _ = _timed(lambda: RecurrentXQSSM()(inp, fwd, bwd, dims, counter))
        parallel_s, _ = _timed(lambda: ParallelXQSSM()(inp, fwd, bwd, dims))
        peak = traced_peak(lambda: RecurrentXQSSM()(inp, fwd, bwd, dims))
        q = stream.normal((queries, dims.model_dim))
        kv = stream.normal((V, dims.model_dim))
        dot_s, _ = _timed(lambda: dot_product_xattn(q, kv, kv))
        shape = (V, queries, dims.heads, dims.state_dim, dims.inner_dim)
        rows.append(
            {
                "V": V,
                "M": queries,
                "recurrent_s": recurrent_s,
                "parallel_s": parallel_s,
                "dot_product_s": dot_s,
                "recurrent_peak_bytes": peak,
                "counted_flops": counter.total,
                "kernel_flops": recurrent_kernel_flops(*shape),
                "analytic_flops": xqssm_flops(*shape).total,
            }
        )
        LOG.info(f"bench V={V}: recurrent {recurrent_s:.3f}s")
    return rows


def rows_to_csv(rows, columns=BENCH_COLUMNS) -> "str":
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def rows_to_json(rows) -> "str":
    return json.dumps(rows, indent=2, sort_keys=True)
