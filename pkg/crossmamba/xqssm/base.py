from dataclasses import dataclass
import logging
import typing

import numpy as np
from traitlets.config import LoggingConfigurable

from ..exception import ShapeError
from ..ssm import SequenceBatch
from ..utils import check_shape

if typing.TYPE_CHECKING:
    from typing import Optional

    from ..config import SSMDims
    from ..ssm import SSMParams
    from .flops import FlopCounter

LOG = logging.getLogger(__name__)

FORWARD = 0
BACKWARD = 1


@dataclass(frozen=True)
class XQSSMInput:
    """Both scan directions of one merged stream.

    Axis 0 is the direction. The backward copy is stored in reversed token
    order; ``s_mask`` is kept in forward order (true marks a feature token).
    """

    x: np.ndarray
    B_in: np.ndarray
    C_in: np.ndarray
    dt: np.ndarray
    s_mask: np.ndarray

    def __post_init__(self):
        s_mask = np.asarray(self.s_mask, dtype=bool)
        if s_mask.ndim != 1:
            raise ShapeError(name="s_mask", expected="(L,)", actual=s_mask.shape)
        object.__setattr__(self, "s_mask", s_mask)
        L = s_mask.shape[0]
        for name in ("x", "B_in", "C_in", "dt"):
            check_shape(getattr(self, name), (2, L, None), name)

    @classmethod
    def from_directions(
        cls,
        forward: "SequenceBatch",
        backward: "SequenceBatch",
        s_mask,
    ) -> "XQSSMInput":
        """Stack two batches given in forward token order."""
        s_mask = np.asarray(s_mask, dtype=bool)
        for batch in (forward, backward):
            if batch.length != s_mask.shape[0]:
                raise ShapeError(
                    name="s_mask", expected=(batch.length,), actual=s_mask.shape
                )
        pair = (forward, backward.reversed())
        return cls(
            x=np.stack([b.x for b in pair]),
            B_in=np.stack([b.B_in for b in pair]),
            C_in=np.stack([b.C_in for b in pair]),
            dt=np.stack([b.dt for b in pair]),
            s_mask=s_mask,
        )

    @classmethod
    def from_stream(cls, seq: "SequenceBatch", s_mask) -> "XQSSMInput":
        return cls.from_directions(seq, seq, s_mask)

    @property
    def length(self) -> "int":
        return self.s_mask.shape[0]

    @property
    def M(self) -> "int":
        return int(self.length - np.count_nonzero(self.s_mask))

    @property
    def V(self) -> "int":
        return int(np.count_nonzero(self.s_mask))

    def direction(self, index: "int") -> "SequenceBatch":
        """Tokens of one direction, in that direction's scan order."""
        return SequenceBatch(
            self.x[index], self.B_in[index], self.C_in[index], self.dt[index]
        )

    def mask(self, index: "int") -> "np.ndarray":
        return self.s_mask if index == FORWARD else self.s_mask[::-1]


class XQSSMBackend(LoggingConfigurable):
    """Computes the summed bidirectional readout at every query token.

    Feature tokens update the state with Δ = softplus(dt + dt_bias); query
    tokens read ``C h`` with Δ = 0, so they never touch the state and carry
    no skip term. Outputs are ordered by query occurrence in the forward
    stream.
    """

    name = "base"

    def scan(
        self,
        inp: "XQSSMInput",
        fwd: "SSMParams",
        bwd: "Optional[SSMParams]",
        dims: "SSMDims",
        counter: "Optional[FlopCounter]" = None,
    ) -> "np.ndarray":
        raise NotImplementedError()

    def __call__(self, inp, fwd, bwd=None, dims=None, counter=None):
        if dims is None:
            raise ShapeError(name="dims", expected="SSMDims", actual=None)
        for index in (FORWARD, BACKWARD):
            inp.direction(index).validate(dims)
        y = self.scan(inp, fwd, bwd if bwd is not None else fwd, dims, counter)
        LOG.debug(f"{self.name}: L={inp.length} V={inp.V} M={inp.M}")
        return y
