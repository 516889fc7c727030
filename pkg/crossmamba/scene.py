"""Synthetic multi-camera scenes on disk.

A scene directory holds ``scene.json`` (the :class:`SceneSpec`),
``queries.xbev`` with the (Q, D) BEV queries and one ``cam{c}_level{l}.xbev``
(H_f, W_f, D) feature map per camera and level.
"""
from dataclasses import dataclass
import json
import logging
import os
import typing

from traitlets.traitlets import Enum, Float, Instance, Int, List

from .config import Record, _join
from .exception import ConfigError, SceneIOError
from .geometry import DEFAULT_PILLAR_Z, BEVGridSpec, CameraModel, ring_rig
from .rng import STREAM_QUERIES, STREAM_RIG, STREAM_VALUES, UINT64_MAX, SeededStream
from .tensorio import load_tensor, save_tensor
from .utils import check_shape

if typing.TYPE_CHECKING:
    from typing import List as ListType, Optional, Sequence

    import numpy as np

LOG = logging.getLogger(__name__)

SCENE_FILE = "scene.json"
QUERIES_FILE = "queries.xbev"


def feature_file(camera: "int", level: "int") -> "str":
    return f"cam{camera}_level{level}.xbev"


class FeatureLevel(Record):
    H_f = Int(0, min=0)
    W_f = Int(0, min=0)
    D = Int(0, min=0)

    def validate_record(self, path=""):
        for name in ("H_f", "W_f", "D"):
            if getattr(self, name) < 1:
                raise ConfigError(path=_join(path, name), reason="required")


class ValueInit(Record):
    distribution = Enum(("normal", "uniform"), default_value="normal")
    scale = Float(1.0, min=0.0)

    def sample(self, stream: "SeededStream", shape):
        if self.distribution == "uniform":
            return stream.uniform(shape, -self.scale, self.scale)
        return stream.normal(shape, self.scale)


class SceneSpec(Record):
    _nested = {"bev": BEVGridSpec, "value_init": ValueInit}
    _nested_lists = {"cameras": CameraModel, "feature_levels": FeatureLevel}

    seed = Int(0, min=0, max=2**64 - 1)
    cameras = List(Instance(CameraModel))
    bev = Instance(BEVGridSpec, args=())
    feature_levels = List(Instance(FeatureLevel))
    value_init = Instance(ValueInit, args=())

    def validate_record(self, path=""):
        if not self.cameras:
            raise ConfigError(path=_join(path, "cameras"), reason="at least one camera")
        if not self.feature_levels:
            raise ConfigError(
                path=_join(path, "feature_levels"), reason="at least one level"
            )
        widths = {level.D for level in self.feature_levels}
        if len(widths) != 1:
            raise ConfigError(
                path=_join(path, "feature_levels"),
                reason=f"all levels must share one width, got {sorted(widths)}",
            )

    @property
    def model_dim(self) -> "int":
        return self.feature_levels[0].D


@dataclass
class Scene:
    spec: SceneSpec
    queries: "np.ndarray"
    # values[level][camera] is an (H_f, W_f, D) map.
    values: "ListType[ListType[np.ndarray]]"


def scene_from_flags(
    seed: "int" = 0,
    cameras: "int" = 6,
    fov: "float" = 60.0,
    image: "Sequence[int]" = (800, 450),
    bev: "Sequence[int]" = (50, 50),
    extent: "Sequence[float]" = (-51.2, 51.2, -51.2, 51.2),
    pillar_z: "Optional[Sequence[float]]" = None,
    levels: "Sequence[Sequence[int]]" = ((15, 25, 32),),
    value_scale: "float" = 1.0,
) -> "SceneSpec":
    """Scene on a ring rig; ``levels`` holds (H_f, W_f, D) triples."""
    if not 0 <= seed <= UINT64_MAX:
        raise ConfigError(path="seed", reason="must be a 64-bit unsigned integer")
    if cameras < 1:
        raise ConfigError(path="cameras", reason="at least one camera")
    if not 0.0 < fov < 180.0:
        raise ConfigError(path="fov", reason="must lie in (0, 180) degrees")
    img_w, img_h = image
    if img_w < 1 or img_h < 1:
        raise ConfigError(path="image", reason="width and height must be positive")
    x_min, x_max, y_min, y_max = extent
    bev_spec = BEVGridSpec.from_dict(
        dict(
            H_bev=bev[0],
            W_bev=bev[1],
            x_min=x_min,
            x_max=x_max,
            y_min=y_min,
            y_max=y_max,
            pillar_z=list(pillar_z or DEFAULT_PILLAR_Z),
        ),
        "bev",
    )
    feature_levels = [
        FeatureLevel.from_dict(dict(H_f=h, W_f=w, D=d), _join("feature_levels", i))
        for i, (h, w, d) in enumerate(levels)
    ]
    value_init = ValueInit.from_dict({"scale": value_scale}, "value_init")
    rig = ring_rig(cameras, SeededStream(seed, STREAM_RIG), fov, img_w, img_h)
    return SceneSpec(
        seed=seed,
        cameras=rig,
        bev=bev_spec,
        feature_levels=feature_levels,
        value_init=value_init,
    )


def _serialize(spec: "SceneSpec") -> "str":
    return json.dumps(spec.as_dict(), sort_keys=True, indent=2) + "\n"


def gen_scene(spec: "SceneSpec", out_dir: "str") -> "ListType[str]":
    """Write every scene file; the same spec always yields the same bytes."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, SCENE_FILE), "w") as f:
            f.write(_serialize(spec))
    except OSError as exc:
        raise SceneIOError(path=out_dir, reason=exc.strerror or str(exc)) from exc

    written = [SCENE_FILE]
    Q, D = spec.bev.num_queries, spec.model_dim
    queries = spec.value_init.sample(SeededStream(spec.seed, STREAM_QUERIES), (Q, D))
    save_tensor(os.path.join(out_dir, QUERIES_FILE), queries)
    written.append(QUERIES_FILE)

    values = SeededStream(spec.seed, STREAM_VALUES)
    for level_index, level in enumerate(spec.feature_levels):
        for camera in range(len(spec.cameras)):
            child = values.child(level_index * len(spec.cameras) + camera)
            fmap = spec.value_init.sample(child, (level.H_f, level.W_f, level.D))
            name = feature_file(camera, level_index)
            save_tensor(os.path.join(out_dir, name), fmap)
            written.append(name)
    LOG.info(f"wrote scene with {len(written)} files to {out_dir}")
    return written


def load_scene_spec(scene_dir: "str") -> "SceneSpec":
    path = os.path.join(scene_dir, SCENE_FILE)
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise SceneIOError(path=path, reason=exc.strerror or str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise SceneIOError(path=path, reason=f"invalid JSON: {exc}") from exc
    return SceneSpec.from_dict(data)


def load_scene(scene_dir: "str") -> "Scene":
    spec = load_scene_spec(scene_dir)
    queries = load_tensor(os.path.join(scene_dir, QUERIES_FILE))
    check_shape(queries, (spec.bev.num_queries, spec.model_dim), QUERIES_FILE)
    values = []
    for level_index, level in enumerate(spec.feature_levels):
        maps = []
        for camera in range(len(spec.cameras)):
            name = feature_file(camera, level_index)
            fmap = load_tensor(os.path.join(scene_dir, name))
            maps.append(check_shape(fmap, (level.H_f, level.W_f, level.D), name))
        values.append(maps)
    return Scene(spec=spec, queries=queries, values=values)
