import logging
import os

from ._version import __version__

DEBUG = os.environ.get("CROSSMAMBA_DEBUG", "0") == "1"

logging.basicConfig(level=logging.DEBUG if DEBUG else logging.INFO)

__all__ = ["__version__"]
