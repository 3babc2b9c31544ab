"""Composite mirror prox saddle-point solver bindings."""

try:
    from comprox._comprox import *  # noqa: F401,F403  (installed layout)
    from comprox._comprox import __version__  # noqa: F401
except ImportError:
    from _comprox import *  # noqa: F401,F403  (build-tree layout)
    from _comprox import __version__  # noqa: F401
