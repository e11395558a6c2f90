"""Reference servers for the pekit vision tool wire protocol."""

from .app import create_app
from .config import BACKENDS, ServerConfig

__all__ = ["BACKENDS", "ServerConfig", "create_app"]
__version__ = "0.1.0"
