"""End-to-end run: BEV self-attention, then one cross layer per feature level."""
import json
import logging
import os
import typing

from einops import rearrange
import numpy as np
from traitlets.traitlets import Instance, Int

from .config import Record
from .exception import ConfigError, SceneIOError
from .geometry import reference_points
from .layer import LayerConfig, LayerTrace, SelfAttentionConfig
from .layer import grid_queries, hydra_self_attention, init_hydra_params
from .layer import init_layer_params, spatial_cross_mamba_forward
from .rng import STREAM_PARAMS, SeededStream
from .scene import load_scene
from .tensorio import encode_tensor
from .utils import check_finite, sha256_bytes

if typing.TYPE_CHECKING:
    from typing import Any, Dict, Optional

LOG = logging.getLogger(__name__)

OUTPUT_FILE = "output.xbev"
SUMMARY_FILE = "summary.json"


class RunConfig(Record):
    _nested = {"layer": LayerConfig, "self_attention": SelfAttentionConfig}

    layer = Instance(LayerConfig, args=())
    self_attention = Instance(SelfAttentionConfig, args=())
    param_seed = Int(0, min=0, max=2**64 - 1)
    workers = Int(1, min=1)


def load_run_config(path: "Optional[str]") -> "RunConfig":
    if path is None:
        return RunConfig()
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise SceneIOError(path=path, reason=exc.strerror or str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(path="<root>", reason=f"{path} is not valid JSON: {exc}")
    return RunConfig.from_dict(data)


def run_pipeline(
    scene_dir: "str", config: "RunConfig", out_dir: "Optional[str]" = None
) -> "Dict[str, Any]":
    """Run the encoder layer on a scene; writes the output grid and a summary."""
    scene = load_scene(scene_dir)
    layer = config.layer
    D = scene.spec.model_dim
    if layer.dims.model_dim != D:
        raise ConfigError(
            path="layer.dims.model_dim",
            reason=(
                f"scene features have width {D}, "
                f"layer expects {layer.dims.model_dim}"
            ),
        )
    bev = scene.spec.bev
    refs = reference_points(bev, scene.spec.cameras)
    LOG.info(f"reference points: M per camera {refs.M.tolist()}")

    params_stream = SeededStream(config.param_seed, STREAM_PARAMS)
    stage_norms = {"input": float(np.linalg.norm(scene.queries))}
    q = scene.queries
    if config.self_attention.enabled:
        hydra = init_hydra_params(
            layer.dims, config.self_attention.conv_width, params_stream.child(0)
        )
        grid = hydra_self_attention(
            grid_queries(q, bev.H_bev, bev.W_bev),
            hydra,
            layer.dims,
            config.self_attention.order,
        )
        q = rearrange(grid, "h w d -> (h w) d")
        stage_norms["self_attention"] = float(np.linalg.norm(q))
        LOG.info("self-attention done")

    level_flops = []
    for level, maps in enumerate(scene.values):
        params = init_layer_params(layer, params_stream.child(1 + level))
        trace = LayerTrace()
        q = spatial_cross_mamba_forward(
            q,
            maps,
            refs,
            params,
            layer,
            trace=trace,
            workers=config.workers,
            dropout_seed=config.param_seed + level,
        )
        for stage, norm in trace.stage_norms.items():
            stage_norms[f"level{level}.{stage}"] = norm
        level_flops.append(trace.flops)
        LOG.info(f"cross layer on level {level} done")

    check_finite(q, "pipeline")
    payload = encode_tensor(grid_queries(q, bev.H_bev, bev.W_bev))
    hit_counts = refs.hit_counts()
    summary = {
        "output_sha256": sha256_bytes(payload),
        "output_shape": [bev.H_bev, bev.W_bev, D],
        "stage_norms": stage_norms,
        "hits": {
            "per_camera": refs.M.tolist(),
            "total": int(hit_counts.sum()),
            "zero_hit_queries": int(np.count_nonzero(hit_counts == 0)),
        },
        "flops": {"xqssm_per_level": level_flops, "xqssm_total": sum(level_flops)},
        "config": config.as_dict(),
    }
    if out_dir is not None:
        write_outputs(out_dir, payload, summary)
    return summary


def write_outputs(out_dir: "str", payload: "bytes", summary) -> "None":
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, OUTPUT_FILE), "wb") as f:
            f.write(payload)
        with open(os.path.join(out_dir, SUMMARY_FILE), "w") as f:
            json.dump(summary, f, sort_keys=True, indent=2)
            f.write("\n")
    except OSError as exc:
        raise SceneIOError(path=out_dir, reason=exc.strerror or str(exc)) from exc
    LOG.info(f"wrote {OUTPUT_FILE} and {SUMMARY_FILE} to {out_dir}")
