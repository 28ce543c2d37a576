"""bakrylab - numerical checks of gradient estimates on smooth metric measure spaces."""

from .constants import APP_VERSION

__version__ = APP_VERSION

from .cli import main

__all__ = ["main", "__version__"]
