import logging
import typing

from einops import rearrange
import numpy as np

from ..ssm import discretize, expand_groups
from .base import BACKWARD, FORWARD, XQSSMBackend

if typing.TYPE_CHECKING:
    from ..config import SSMDims
    from ..ssm import SSMParams
    from .base import XQSSMInput

LOG = logging.getLogger(__name__)


def direction_mixer(seq, s_mask, params: "SSMParams", dims: "SSMDims"):
    """(M, V, H) mixer of one direction, rows and columns in scan order.

    Entry [i, j, h] = C_i · B_j Δ_j exp(Σ_{k in (j, k_i)} Δ_k A) for value
    j < k_i, where k_i counts the values ahead of query i.
    """
    values = np.flatnonzero(s_mask)
    queries = np.flatnonzero(~s_mask)
    if values.size == 0 or queries.size == 0:
        return np.zeros((queries.size, values.size, dims.heads))
    delta, _ = discretize(seq.dt[values], params)
    B = expand_groups(seq.B_in[values], dims)
    C = expand_groups(seq.C_in[queries], dims)

    # Number of feature tokens preceding every query.
    ahead = np.cumsum(s_mask)[queries]
    log_decay = np.cumsum(delta * params.A, axis=0)
    last = np.where(ahead > 0, ahead - 1, 0)
    causal = np.arange(values.size)[None, :] < ahead[:, None]
    exponent = np.where(
        causal[..., None], log_decay[last][:, None, :] - log_decay[None, :, :], -np.inf
    )
    CB = np.einsum("ihn,jhn->ijh", C, B)
    return CB * delta[None, :, :] * np.exp(exponent)


class ParallelXQSSM(XQSSMBackend):
    """Materializes the masked (M, V, 2H) mixer of both directions."""

    name = "parallel"

    def materialize(self, inp: "XQSSMInput", fwd, bwd, dims) -> "np.ndarray":
        """Rows in forward query order, columns in forward value order."""
        forward = direction_mixer(inp.direction(FORWARD), inp.mask(FORWARD), fwd, dims)
        backward = direction_mixer(
            inp.direction(BACKWARD), inp.mask(BACKWARD), bwd, dims
        )
        return np.concatenate([forward, backward[::-1, ::-1]], axis=-1)

    def scan(self, inp, fwd, bwd, dims, counter=None):
        mixer = self.materialize(inp, fwd, bwd, dims)
        x_fwd = inp.x[FORWARD][inp.s_mask]
        x_bwd = inp.x[BACKWARD][inp.mask(BACKWARD)][::-1]
        x = np.concatenate(
            [
                rearrange(x_fwd, "v (h p) -> v h p", h=dims.heads),
                rearrange(x_bwd, "v (h p) -> v h p", h=dims.heads),
            ],
            axis=1,
        )
        y = np.einsum("mvk,vkp->mkp", mixer, x)
        y = y[:, : dims.heads] + y[:, dims.heads :]
        LOG.debug(f"parallel mixer shape {mixer.shape}")
        return rearrange(y, "m h p -> m (h p)")
