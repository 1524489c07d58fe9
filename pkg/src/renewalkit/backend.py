"""Selection of the compiled or pure numpy inner loops.

The compiled extension ``renewalkit._core`` is used when importable, unless
the environment variable ``RENEWALKIT_PURE_PYTHON`` is set to a non-empty
value other than ``0``.
"""
import os

from . import _fallback


def _load():
    if os.environ.get("RENEWALKIT_PURE_PYTHON", "0") not in ("", "0"):
        return _fallback
    try:
        from . import _core
    except ImportError:
        return _fallback
    return _core


impl = _load()
BACKEND = impl.BACKEND


def get(name=None):
    """Return the module for ``name`` ('cython' or 'python'), default the active one."""
    if name is None:
        return impl
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
