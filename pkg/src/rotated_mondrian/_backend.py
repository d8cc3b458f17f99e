"""Pick the compiled kernels when available, else the pure-Python fallback.

Set ``ROTATED_MONDRIAN_BACKEND=python`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("ROTATED_MONDRIAN_BACKEND", "").lower() == "python":
    kernels = _fallback
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        kernels = _fallback

BACKEND = kernels.NAME


def get(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
