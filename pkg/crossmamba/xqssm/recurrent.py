import logging
import typing

from einops import rearrange
import numpy as np

from ..utils import softplus
from .base import BACKWARD, FORWARD, XQSSMBackend

if typing.TYPE_CHECKING:
    from ..config import SSMDims
    from ..ssm import SSMParams

LOG = logging.getLogger(__name__)


def masked_direction_scan(
    seq, s_mask, params: "SSMParams", dims: "SSMDims", counter=None
) -> "np.ndarray":
    """One direction of the masked scan; returns (M, H, P) in scan order.

    Tokens are discretized and group-expanded one at a time, so working
    memory is the (H, P, N) state plus the output rows whatever the length.
    """
    H, P = dims.heads, dims.head_dim
    G, N = dims.groups, dims.state_dim
    A = params.A
    h = np.zeros((H, P, N))
    out = np.empty((int(seq.length - np.count_nonzero(s_mask)), H, P))
    k = 0
    for t in range(seq.length):
        if s_mask[t]:
            delta = softplus(seq.dt[t] + params.dt_bias)
            B_t = seq.B_in[t].reshape(G, N)[dims.head_group]
            x_t = seq.x[t].reshape(H, P)
            h *= np.exp(delta * A)[:, None, None]
            h += x_t[:, :, None] * (delta[:, None] * B_t)[:, None, :]
            if counter is not None:
                counter.value_token()
        else:
            C_t = seq.C_in[t].reshape(G, N)[dims.head_group]
            out[k] = np.einsum("hpn,hn->hp", h, C_t)
            k += 1
            if counter is not None:
                counter.readout()
    return out


class RecurrentXQSSM(XQSSMBackend):
    """Token-by-token scan holding one (H, P, N) state per direction."""

    name = "recurrent"

    def scan(self, inp, fwd, bwd, dims, counter=None):
        y_fwd = masked_direction_scan(
            inp.direction(FORWARD), inp.mask(FORWARD), fwd, dims, counter
        )
        y_bwd = masked_direction_scan(
            inp.direction(BACKWARD), inp.mask(BACKWARD), bwd, dims, counter
        )
        # Backward occurrence k is forward occurrence M-1-k.
        y = y_fwd + y_bwd[::-1]
        if counter is not None:
            counter.combine(inp.M)
        return rearrange(y, "m h p -> m (h p)")
