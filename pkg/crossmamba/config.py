"""Strict, JSON-facing configuration records.

Every record is a :class:`traitlets.HasTraits` subclass. ``from_dict`` refuses
unknown keys and reports failures with a dotted field path so that typos in
ablation sweeps surface as configuration errors rather than silent defaults.
"""
import logging
import typing

import numpy as np
from traitlets import TraitError
from traitlets.traitlets import Float, HasTraits, Int

from .exception import ConfigError

if typing.TYPE_CHECKING:
    from typing import Any, Dict

LOG = logging.getLogger(__name__)


def _join(path, key):
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


class Record(HasTraits):
    # Field name -> Record subclass for nested objects / lists of objects.
    _nested: "Dict[str, type]" = {}
    _nested_lists: "Dict[str, type]" = {}

    def __init__(self, **kwargs):
        known = set(self.class_trait_names())
        for key in kwargs:
            if key not in known:
                raise ConfigError(path=key, reason="unknown field")
        super().__init__()
        for key, value in kwargs.items():
            try:
                setattr(self, key, value)
            except TraitError as exc:
                raise ConfigError(path=key, reason=str(exc)) from exc
        self.validate_record()

    def validate_record(self, path: "str" = ""):
        """Cross-field checks; raise ConfigError with ``path``."""

    @classmethod
    def from_dict(cls, data: "Any", path: "str" = ""):
        if not isinstance(data, dict):
            raise ConfigError(path=path or "<root>", reason="expected an object")
        known = set(cls.class_trait_names())
        for key in data:
            if key not in known:
                raise ConfigError(path=_join(path, key), reason="unknown field")

        obj = cls.__new__(cls)
        HasTraits.__init__(obj)
        for key, value in data.items():
            sub = _join(path, key)
            if key in cls._nested:
                value = cls._nested[key].from_dict(value, sub)
            elif key in cls._nested_lists:
                if not isinstance(value, list):
                    raise ConfigError(path=sub, reason="expected a list")
                value = [
                    cls._nested_lists[key].from_dict(item, _join(sub, i))
                    for i, item in enumerate(value)
                ]
            try:
                setattr(obj, key, value)
            except TraitError as exc:
                raise ConfigError(path=sub, reason=str(exc)) from exc
        obj.validate_record(path)
        return obj

    def as_dict(self) -> "Dict[str, Any]":
        out = {}
        for name in sorted(self.trait_names()):
            value = getattr(self, name)
            if isinstance(value, Record):
                value = value.as_dict()
            elif isinstance(value, (list, tuple)):
                value = [v.as_dict() if isinstance(v, Record) else v for v in value]
            elif isinstance(value, type):
                value = getattr(value, "name", value.__name__)
            out[name] = value
        return out

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __repr__(self):
        fields = ", ".join(f"{k}={v!r}" for k, v in self.as_dict().items())
        return f"{type(self).__name__}({fields})"


class NumericsConfig(Record):
    homogeneous_eps = Float(1e-5, min=0.0)
    rms_eps = Float(1e-6, min=0.0)
    norm_eps = Float(1e-5, min=0.0)
    log_space_min_length = Int(64, min=0)
    weights_sum_tol = Float(1e-6, min=0.0)
    flop_tolerance = Float(0.05, min=0.0)
    scaling_tolerance = Float(0.30, min=0.0)


NUMERICS = NumericsConfig()


class SSMDims(Record):
    """Head, state and group geometry shared by every scan."""

    model_dim = Int(32, min=1)
    expand = Float(4.0, min=0.0)
    heads = Int(8, min=1)
    head_dim = Int(16, min=1)
    state_dim = Int(32, min=1)
    groups = Int(1, min=1)

    def validate_record(self, path=""):
        if self.expand <= 0:
            raise ConfigError(path=_join(path, "expand"), reason="must be positive")
        inner = self.expand * self.model_dim
        if abs(inner - self.heads * self.head_dim) > 1e-9:
            raise ConfigError(
                path=_join(path, "expand"),
                reason=(
                    f"expand*model_dim={inner} must equal "
                    f"heads*head_dim={self.heads * self.head_dim}"
                ),
            )
        if self.heads % self.groups:
            raise ConfigError(
                path=_join(path, "groups"),
                reason=f"heads={self.heads} not divisible by groups={self.groups}",
            )

    @property
    def inner_dim(self) -> "int":
        return self.heads * self.head_dim

    @property
    def bc_dim(self) -> "int":
        return self.state_dim * self.groups

    @property
    def head_group(self):
        """Group index of every head."""
        return np.arange(self.heads) // (self.heads // self.groups)
