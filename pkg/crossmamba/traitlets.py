import typing

import entrypoints
from traitlets import TraitError
from traitlets.traitlets import Type

if typing.TYPE_CHECKING:
    from typing import Dict


# Adapted from JupyterHub: jupyterhub/traitlets.py
class EntryPointType(Type):
    """A class trait resolved through an entry point group.

    Accepts a class, a dotted ``package.module.Class`` path or a registered
    name. Names are matched case-insensitively against the installed entry
    points first and ``aliases`` second; the aliases cover source checkouts
    where no distribution metadata is present.
    """

    _original_help = ""

    def __init__(self, *args, entry_point_group, aliases=None, **kwargs):
        self.entry_point_group = entry_point_group
        self.aliases = {key.lower(): path for key, path in (aliases or {}).items()}
        super().__init__(*args, **kwargs)

    @property
    def help(self):
        names = ", ".join(self.registered_names()) or "(none)"
        return f"{self._original_help}\nRegistered: {names}"

    @help.setter
    def help(self, value):
        self._original_help = value

    def load_entry_points(self) -> "Dict[str, entrypoints.EntryPoint]":
        group = entrypoints.get_group_named(self.entry_point_group)
        return {key.lower(): value for key, value in group.items()}

    def choices(self) -> "Dict[str, str]":
        """Registered name -> dotted target; entry points shadow aliases."""
        out = dict(self.aliases)
        for key, entry_point in self.load_entry_points().items():
            out[key] = f"{entry_point.module_name}.{entry_point.object_name}"
        return out

    def registered_names(self):
        return sorted(self.choices())

    def validate(self, obj, value):
        if isinstance(value, str):
            key = value.lower()
            registry = self.load_entry_points()
            if key in registry:
                value = registry[key].load()
            elif key in self.aliases:
                value = self.aliases[key]
            elif "." not in value:
                raise TraitError(
                    f"unknown {self.entry_point_group} entry '{value}'; "
                    f"choose one of {', '.join(self.registered_names())}"
                )
        return super().validate(obj, value)
