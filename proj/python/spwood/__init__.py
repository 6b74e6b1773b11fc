"""Python access to the spwood C++ core."""

from ._spwood import *  # noqa: F401,F403
from ._spwood import __doc__  # noqa: F401

__version__ = "0.1.0"
