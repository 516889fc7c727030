"""BEV grid, pillar lifting and multi-camera projection.

Ego frame: x forward, y left, z up, meters. Cells are enumerated row-major
with x along columns: cell ``(i, j)`` has id ``i * W_bev + j`` and center
``(x_min + (j + 0.5) dx, y_min + (i + 0.5) dy)``.
"""
from dataclasses import dataclass
import logging
import typing

import numpy as np
from traitlets.traitlets import Float, Int, List

from .config import NUMERICS, Record, _join
from .exception import ConfigError, InvalidSpecError
from .utils import check_shape

if typing.TYPE_CHECKING:
    from typing import Sequence, Tuple

    from .rng import SeededStream

LOG = logging.getLogger(__name__)

DEFAULT_PILLAR_Z = [-1.0, 1.0 / 3.0, 5.0 / 3.0, 3.0]
CAMERA_HEIGHT = 1.5


class BEVGridSpec(Record):
    H_bev = Int(50, min=1)
    W_bev = Int(50, min=1)
    x_min = Float(-51.2)
    x_max = Float(51.2)
    y_min = Float(-51.2)
    y_max = Float(51.2)
    pillar_z = List(Float(), default_value=DEFAULT_PILLAR_Z, minlen=1)

    def validate_record(self, path=""):
        if not self.x_min < self.x_max:
            raise ConfigError(path=_join(path, "x_max"), reason="x_min must be < x_max")
        if not self.y_min < self.y_max:
            raise ConfigError(path=_join(path, "y_max"), reason="y_min must be < y_max")
        z = np.asarray(self.pillar_z, dtype=np.float64)
        if z.size > 1 and not np.all(np.diff(z) > 0):
            raise ConfigError(
                path=_join(path, "pillar_z"), reason="must be strictly increasing"
            )

    @property
    def num_queries(self) -> "int":
        return self.H_bev * self.W_bev

    @property
    def Z(self) -> "int":
        return len(self.pillar_z)


class CameraModel(Record):
    """Pinhole camera as a 4x4 ego-to-image matrix.

    Row 2 of ``proj`` yields the depth used for the homogeneous divide.
    """

    proj = List(List(Float()))
    img_w = Int(1600, min=1)
    img_h = Int(900, min=1)

    def validate_record(self, path=""):
        if len(self.proj) != 4 or any(len(row) != 4 for row in self.proj):
            raise ConfigError(path=_join(path, "proj"), reason="expected a 4x4 matrix")
        if not np.all(np.isfinite(self.matrix)):
            raise ConfigError(path=_join(path, "proj"), reason="must be finite")

    @property
    def matrix(self) -> "np.ndarray":
        return np.asarray(self.proj, dtype=np.float64)

    @classmethod
    def from_matrix(cls, proj, img_w: "int", img_h: "int") -> "CameraModel":
        proj = np.asarray(proj, dtype=np.float64)
        check_shape(proj, (4, 4), "proj")
        return cls(proj=proj.tolist(), img_w=img_w, img_h=img_h)


@dataclass
class ReferencePointSet:
    """Per-camera normalized coordinates ``R`` (C, Q, Z, 2) and hits ``b`` (C, Q, Z)."""

    R: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.b.dtype != bool:
            self.b = self.b.astype(bool)
        check_shape(self.R, self.b.shape + (2,), "R")

    @property
    def cameras(self) -> "int":
        return self.b.shape[0]

    @property
    def num_queries(self) -> "int":
        return self.b.shape[1]

    @property
    def M(self) -> "np.ndarray":
        return self.b.reshape(self.cameras, -1).sum(axis=1)

    def hit_counts(self) -> "np.ndarray":
        """Hits per query summed over cameras and pillar points."""
        return self.b.sum(axis=(0, 2))

    def hits(self, camera: "int") -> "Tuple[np.ndarray, np.ndarray]":
        """(uv of every hit, query id of every hit), query-major then pillar order."""
        q_ids, z_ids = np.nonzero(self.b[camera])
        return self.R[camera, q_ids, z_ids], q_ids


def bev_cell_centers(spec: "BEVGridSpec") -> "np.ndarray":
    if not (spec.x_min < spec.x_max and spec.y_min < spec.y_max):
        raise InvalidSpecError(reason="degenerate BEV extent")
    if spec.H_bev < 1 or spec.W_bev < 1:
        raise InvalidSpecError(reason="grid must have at least one cell")
    dx = (spec.x_max - spec.x_min) / spec.W_bev
    dy = (spec.y_max - spec.y_min) / spec.H_bev
    xs = spec.x_min + (np.arange(spec.W_bev) + 0.5) * dx
    ys = spec.y_min + (np.arange(spec.H_bev) + 0.5) * dy
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([grid_x.ravel(), grid_y.ravel()], axis=-1)


def lift_and_project(
    centers, spec: "BEVGridSpec", cam: "CameraModel"
) -> "Tuple[np.ndarray, np.ndarray]":
    """Lift each center to the pillar heights and project into ``cam``.

    Returns normalized ``uv`` of shape (Q, Z, 2) and a (Q, Z) flag that is
    false where the depth does not exceed the homogeneous cutoff.
    """
    centers = np.asarray(centers, dtype=np.float64)
    check_shape(centers, (None, 2), "centers")
    Q, Z = centers.shape[0], spec.Z
    points = np.empty((Q, Z, 4))
    points[..., 0] = centers[:, None, 0]
    points[..., 1] = centers[:, None, 1]
    points[..., 2] = np.asarray(spec.pillar_z)[None, :]
    points[..., 3] = 1.0

    hom = points @ cam.matrix.T
    depth = hom[..., 2]
    valid = depth > NUMERICS.homogeneous_eps
    safe = np.where(valid, depth, 1.0)
    uv = hom[..., :2] / safe[..., None]
    uv = uv / np.array([cam.img_w, cam.img_h], dtype=np.float64)
    uv = np.where(valid[..., None], uv, np.nan)
    return uv, valid


def compute_hits(uv, valid) -> "Tuple[np.ndarray, int]":
    # Closed interval: u or v exactly 1.0 still counts.
    with np.errstate(invalid="ignore"):
        inside = np.all((uv >= 0.0) & (uv <= 1.0), axis=-1)
    b = np.asarray(valid, dtype=bool) & inside
    return b, int(b.sum())


def reference_points(
    spec: "BEVGridSpec", cameras: "Sequence[CameraModel]"
) -> "ReferencePointSet":
    centers = bev_cell_centers(spec)
    all_uv, all_b = [], []
    for index, cam in enumerate(cameras):
        uv, valid = lift_and_project(centers, spec, cam)
        b, M = compute_hits(uv, valid)
        LOG.debug(f"camera {index}: M={M} of {b.size} pillar points")
        all_uv.append(np.where(b[..., None], uv, 0.0))
        all_b.append(b)
    return ReferencePointSet(R=np.stack(all_uv), b=np.stack(all_b))


def pinhole_projection(
    yaw: "float",
    fov_deg: "float",
    img_w: "int",
    img_h: "int",
    position=(0.0, 0.0, CAMERA_HEIGHT),
) -> "np.ndarray":
    """Level pinhole camera looking along ``yaw`` (radians from +x toward +y)."""
    focal = (img_w / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    intrinsics = np.array(
        [
            [focal, 0.0, img_w / 2.0, 0.0],
            [0.0, focal, img_h / 2.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    # Rows: image right, image down, optical axis.
    rotation = np.array(
        [
            [np.sin(yaw), -np.cos(yaw), 0.0],
            [0.0, 0.0, -1.0],
            [np.cos(yaw), np.sin(yaw), 0.0],
        ]
    )
    extrinsics = np.eye(4)
    extrinsics[:3, :3] = rotation
    extrinsics[:3, 3] = -rotation @ np.asarray(position, dtype=np.float64)
    return intrinsics @ extrinsics


def ring_rig(
    cameras: "int",
    stream: "SeededStream",
    fov_deg: "float" = 60.0,
    img_w: "int" = 1600,
    img_h: "int" = 900,
) -> "list":
    """Cameras at evenly spaced yaws behind a seeded common yaw offset."""
    if cameras < 1:
        raise InvalidSpecError(reason="a rig needs at least one camera")
    step = 2.0 * np.pi / cameras
    offset = float(stream.uniform((), 0.0, step))
    rig = [
        CameraModel.from_matrix(
            pinhole_projection(offset + k * step, fov_deg, img_w, img_h), img_w, img_h
        )
        for k in range(cameras)
    ]
    LOG.debug(f"ring rig: {cameras} cameras, yaw offset {np.degrees(offset):.3f} deg")
    return rig


def radial_range(centers) -> "np.ndarray":
    centers = np.asarray(centers, dtype=np.float64)
    return np.hypot(centers[:, 0], centers[:, 1])
