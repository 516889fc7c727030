"""Analytic FLOP, parameter and memory estimates for cross-attention modules.

Projection, convolution and attention FLOPs count a multiply-add as two
operations. The scan term is :func:`~crossmamba.xqssm.xqssm_flops` and the
deformable term its closed form, both taken as stated. Memory estimates
assume 32-bit activations.
"""
from dataclasses import asdict, dataclass, field
import csv
import io
import json
import logging
import math
import typing

from traitlets.traitlets import Float, Int

from .config import Record
from .xqssm import xqssm_flops

if typing.TYPE_CHECKING:
    from typing import Dict, List

LOG = logging.getLogger(__name__)

BYTES_PER_VALUE = 4
CSV_COLUMNS = ("module", "Q", "V", "params", "flops", "est_memory_bytes")

DOT_PRODUCT = "dot_product"
DEFORMABLE = "deformable"
XQSSM = "xqssm"
NAIVE_MAMBA = "naive_mamba"
MODULES = (DOT_PRODUCT, DEFORMABLE, XQSSM, NAIVE_MAMBA)

# (H_bev, W_bev), (img_w, img_h)
SCALE_ROWS = (
    ((50, 50), (800, 450)),
    ((100, 100), (1280, 720)),
    ((200, 200), (1600, 900)),
)
# Reported GFLOPs for the rows above.
REPORTED_GFLOPS = {
    DOT_PRODUCT: (23.9, 228.8, 1432.5),
    XQSSM: (3.7, 14.0, 51.0),
    DEFORMABLE: (3.3, 12.8, 49.5),
}


class ComplexityConfig(Record):
    H_bev = Int(50, min=1)
    W_bev = Int(50, min=1)
    img_w = Int(800, min=1)
    img_h = Int(450, min=1)
    cameras = Int(6, min=1)
    stride = Int(32, min=1)
    pillar_points = Int(4, min=1)
    hit_fraction = Float(1.0, min=0.0)
    model_dim = Int(256, min=1)
    expand = Float(2.0, min=0.0)
    heads = Int(8, min=1)
    state_dim = Int(32, min=1)
    groups = Int(1, min=1)
    conv_width = Int(4, min=1)
    deform_heads = Int(8, min=1)
    points = Int(4, min=1)
    levels = Int(2, min=1)

    @property
    def Q(self) -> "int":
        return self.H_bev * self.W_bev

    @property
    def feature_hw(self):
        return math.ceil(self.img_h / self.stride), math.ceil(self.img_w / self.stride)

    @property
    def V(self) -> "int":
        H_f, W_f = self.feature_hw
        return self.cameras * H_f * W_f

    @property
    def M(self) -> "int":
        """Query copies across all cameras; each pillar point hits about one."""
        return int(round(self.hit_fraction * self.pillar_points * self.Q))

    @property
    def inner(self) -> "int":
        return int(round(self.expand * self.model_dim))


@dataclass(frozen=True)
class ModuleEstimate:
    module: str
    Q: int
    V: int
    params: int
    flops: int
    est_memory_bytes: int


@dataclass
class ComplexityReport:
    config: "Dict[str, object]"
    modules: "List[ModuleEstimate]" = field(default_factory=list)

    def by_module(self) -> "Dict[str, ModuleEstimate]":
        return {m.module: m for m in self.modules}

    def as_dict(self):
        return {"config": self.config, "modules": [asdict(m) for m in self.modules]}


def dot_product_estimate(c: "ComplexityConfig") -> "ModuleEstimate":
    Q, V, D = c.Q, c.V, c.model_dim
    flops = 2 * (2 * Q * D * D + 2 * V * D * D + 2 * Q * V * D)
    memory = Q * V + 2 * Q * D + 2 * V * D
    return ModuleEstimate(
        DOT_PRODUCT, Q, V, 4 * D * D + 4 * D, flops, memory * BYTES_PER_VALUE
    )


def deformable_estimate(c: "ComplexityConfig") -> "ModuleEstimate":
    """2ND² + min(HWD², NPRD²) + 5NPRD + 3N·M_h·PRD with N queries."""
    N, V, D = c.Q, c.V, c.model_dim
    P, R, M_h = c.points, c.levels, c.deform_heads
    flops = (
        2 * N * D * D
        + min(V * D * D, N * P * R * D * D)
        + 5 * N * P * R * D
        + 3 * N * M_h * P * R * D
    )
    samples = M_h * P * R
    params = 2 * D * D + 2 * D + D * samples * 3 + samples * 3
    memory = V * D + 2 * N * D + 3 * N * samples
    return ModuleEstimate(DEFORMABLE, N, V, params, flops, memory * BYTES_PER_VALUE)


def _mamba_projection(c: "ComplexityConfig"):
    """(value flops per token, query flops per query, parameter count)."""
    D, inner, H = c.model_dim, c.inner, c.heads
    ng = c.state_dim * c.groups
    width = 2 * inner + 4 * ng + 2 * H
    xbc = inner + 4 * ng
    per_value = 2 * (D * (xbc + 2 * H) + c.conv_width * xbc)
    per_query = 2 * (D * (inner + xbc) + inner * D)
    params = (D + 1) * width + (c.conv_width + 1) * xbc + inner * D
    params += inner + 2 * D + 6 * H
    return per_value, per_query, params


def xqssm_estimate(c: "ComplexityConfig") -> "ModuleEstimate":
    per_value, per_query, params = _mamba_projection(c)
    ng = c.state_dim * c.groups
    scan = xqssm_flops(c.V, c.M, c.heads, c.state_dim, c.inner).total
    flops = c.V * per_value + c.Q * per_query + scan
    head_dim = c.inner // c.heads
    stream = (c.V + c.M) * (c.inner + 4 * ng + 2 * c.heads)
    memory = stream + 2 * c.heads * head_dim * c.state_dim + c.Q * c.inner
    return ModuleEstimate(XQSSM, c.Q, c.V, params, flops, memory * BYTES_PER_VALUE)


def naive_mamba_estimate(c: "ComplexityConfig") -> "ModuleEstimate":
    """Single final-state readout with one state slot per value token."""
    per_value, per_query, params = _mamba_projection(c)
    N = c.V
    scan = c.V * (c.heads * (N + 1) + c.inner * N) + c.Q * c.inner * N
    flops = c.V * per_value + c.Q * per_query + scan
    memory = c.V * c.model_dim + c.inner * N + c.Q * c.inner
    return ModuleEstimate(
        NAIVE_MAMBA, c.Q, c.V, params, flops, memory * BYTES_PER_VALUE
    )


ESTIMATORS = {
    DOT_PRODUCT: dot_product_estimate,
    DEFORMABLE: deformable_estimate,
    XQSSM: xqssm_estimate,
    NAIVE_MAMBA: naive_mamba_estimate,
}

_GRID_FIELDS = ("H_bev", "W_bev", "img_w", "img_h", "cameras", "model_dim")
# Config fields each estimate strictly grows with, from the default config.
SCALING_FIELDS = {
    DOT_PRODUCT: _GRID_FIELDS,
    DEFORMABLE: _GRID_FIELDS + ("points", "levels", "deform_heads"),
    XQSSM: _GRID_FIELDS
    + ("pillar_points", "hit_fraction", "expand", "heads", "state_dim", "groups")
    + ("conv_width",),
    NAIVE_MAMBA: _GRID_FIELDS + ("expand", "heads", "groups", "conv_width"),
}


def complexity_report(config: "ComplexityConfig") -> "ComplexityReport":
    report = ComplexityReport(
        config=dict(
            config.as_dict(),
            Q=config.Q,
            V=config.V,
            M=config.M,
            D=config.model_dim,
            N=config.state_dim,
            H=config.heads,
            P=config.points,
            R=config.levels,
            M_h=config.deform_heads,
        )
    )
    for module in MODULES:
        report.modules.append(ESTIMATORS[module](config))
    LOG.debug(f"complexity report for Q={config.Q} V={config.V}")
    return report


def doubled(config: "ComplexityConfig", name: "str") -> "ComplexityConfig":
    return ComplexityConfig.from_dict(
        dict(config.as_dict(), **{name: 2 * getattr(config, name)})
    )


def scale_sweep_reports(**overrides) -> "List[ComplexityReport]":
    reports = []
    for (H_bev, W_bev), (img_w, img_h) in SCALE_ROWS:
        config = ComplexityConfig(
            H_bev=H_bev, W_bev=W_bev, img_w=img_w, img_h=img_h, **overrides
        )
        reports.append(complexity_report(config))
    return reports


def scaling_ratios(reports: "List[ComplexityReport]", module: "str"):
    """FLOPs of each report relative to the first."""
    flops = [r.by_module()[module].flops for r in reports]
    return [f / flops[0] for f in flops]


def reference_ratios(module: "str"):
    gflops = REPORTED_GFLOPS[module]
    return [g / gflops[0] for g in gflops]


def to_json(reports: "List[ComplexityReport]") -> "str":
    return json.dumps([r.as_dict() for r in reports], indent=2, sort_keys=True)


def to_csv(reports: "List[ComplexityReport]") -> "str":
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        for estimate in report.modules:
            writer.writerow(asdict(estimate))
    return buffer.getvalue()
