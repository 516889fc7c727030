"""FLOP totals for the masked scan.

Two accounts are kept. ``xqssm_flops`` is the closed form used for
complexity estimates: one unit per multiply-add, no separate decay multiply
and one readout per query after both directions are combined.

``FlopCounter`` charges what the recurrent kernel executes, in FLOPs, where a
multiply-add is 2 and any other elementwise operation is 1:

* per feature token and direction: discretization of every head (bias add,
  softplus, scale by A, exp; 4H), Δ·B (H·N), the decay dA·h (αD·N) and the
  update h += x ⊗ Δ·B (2αD·N);
* per query copy and direction: the readout C·h (2αD·N);
* per query copy: the sum of both directions (αD).

``recurrent_kernel_flops`` is the closed form of that account; the counter
matches it exactly. The kernel account runs at roughly two to three times
the estimate for typical widths, most of it from the doubled multiply-add
unit and the per-direction readouts.
"""
from collections import Counter
from dataclasses import dataclass
import logging

from ..exception import InvalidInputError

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class XQSSMFlops:
    per_query: int
    per_feature: int
    total: int
    unoptimized_per_query: int


def _check_counts(**counts):
    for name, value in counts.items():
        if int(value) != value or value < 0:
            raise InvalidInputError(name=name, reason="must be a nonnegative integer")


def xqssm_flops(V: "int", M: "int", H: "int", N: "int", inner: "int") -> "XQSSMFlops":
    """``inner`` is αD, the expanded channel count."""
    _check_counts(V=V, M=M, H=H, N=N, inner=inner)
    per_query = inner * (N + H + 1)
    per_feature = 2 * H * (N + 1) + 2 * inner * N
    return XQSSMFlops(
        per_query=per_query,
        per_feature=per_feature,
        total=2 * V * (H * (N + 1) + inner * N) + M * per_query,
        unoptimized_per_query=2 * H * (N + 1) + inner * (3 * N + H + 1),
    )


def recurrent_kernel_flops(
    V: "int", M: "int", H: "int", N: "int", inner: "int"
) -> "int":
    """FLOPs the recurrent kernel executes for both directions."""
    _check_counts(V=V, M=M, H=H, N=N, inner=inner)
    return 2 * V * (4 * H + H * N + 3 * inner * N) + M * (4 * inner * N + inner)


class FlopCounter:
    """Tallies charges emitted by the recurrent kernel."""

    def __init__(self, heads: "int", state_dim: "int", inner: "int"):
        self.heads = heads
        self.state_dim = state_dim
        self.inner = inner
        self.events = Counter()

    @classmethod
    def for_dims(cls, dims) -> "FlopCounter":
        return cls(dims.heads, dims.state_dim, dims.inner_dim)

    def value_token(self):
        H, N = self.heads, self.state_dim
        self.events["discretize"] += 4 * H
        self.events["input_scale"] += H * N
        self.events["decay"] += self.inner * N
        self.events["state_update"] += 2 * self.inner * N

    def readout(self):
        self.events["readout"] += 2 * self.inner * self.state_dim

    def combine(self, count: "int"):
        self.events["combine"] += count * self.inner

    @property
    def total(self) -> "int":
        return sum(self.events.values())

    def as_dict(self):
        return dict(sorted(self.events.items()), total=self.total)
