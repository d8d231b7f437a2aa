"""Python bindings for the flsim simulation core."""

try:
    from ._flsim import *  # noqa: F401,F403  (installed package layout)
except ImportError:
    from _flsim import *  # noqa: F401,F403  (build-tree layout)
