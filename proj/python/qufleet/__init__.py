"""Statevector simulation, variational swap-test circuits, and the fleet
scheduling core, exposed from the C++ library."""

from ._qufleet import *  # noqa: F401,F403
from ._qufleet import __doc__ as _core_doc  # noqa: F401

__all__ = [name for name in dir() if not name.startswith("_")]
