from traitlets import TraitError
from traitlets.traitlets import HasTraits

from ..exception import ConfigError
from ..traitlets import EntryPointType
from .base import XQSSMBackend, XQSSMInput
from .flops import FlopCounter, XQSSMFlops, recurrent_kernel_flops, xqssm_flops
from .parallel import ParallelXQSSM
from .recurrent import RecurrentXQSSM

ENTRY_POINT_GROUP = "crossmamba.xqssm_backends"

# Resolution when the distribution metadata is unavailable.
BUILTIN_BACKENDS = {
    "recurrent": "crossmamba.xqssm.recurrent.RecurrentXQSSM",
    "parallel": "crossmamba.xqssm.parallel.ParallelXQSSM",
}


def backend_trait(**kwargs) -> "EntryPointType":
    return EntryPointType(
        default_value=RecurrentXQSSM,
        klass=XQSSMBackend,
        entry_point_group=ENTRY_POINT_GROUP,
        aliases=BUILTIN_BACKENDS,
        help="Kernel used for the masked cross scan.",
        **kwargs,
    )


class _BackendChoice(HasTraits):
    backend = backend_trait()


def load_backend(name) -> "XQSSMBackend":
    """Instantiate a backend from its registered name, dotted path or class."""
    try:
        choice = _BackendChoice(backend=name)
    except TraitError as exc:
        raise ConfigError(path="xqssm_backend", reason=str(exc)) from exc
    return choice.backend()


__all__ = [
    "BUILTIN_BACKENDS",
    "FlopCounter",
    "ParallelXQSSM",
    "RecurrentXQSSM",
    "XQSSMBackend",
    "XQSSMFlops",
    "XQSSMInput",
    "backend_trait",
    "load_backend",
    "recurrent_kernel_flops",
    "xqssm_flops",
]
