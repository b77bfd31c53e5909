"""Least-squares moment matching for linear and polynomial systems."""

from .errors import *  # noqa: F401,F403
from .linalg import *  # noqa: F401,F403
from .generator import *  # noqa: F401,F403
from .linear import *  # noqa: F401,F403
from .poly import *  # noqa: F401,F403
from .series import *  # noqa: F401,F403
from .simulate import *  # noqa: F401,F403
from .benchmarks import *  # noqa: F401,F403

__version__ = "0.1.0"
