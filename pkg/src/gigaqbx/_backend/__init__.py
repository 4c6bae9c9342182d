"""Backend selection: compiled extension if importable, NumPy fallback otherwise.

Set GIGAQBX_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the cross-backend tests).
"""

import os

from . import _ref

if os.environ.get("GIGAQBX_PURE_PYTHON", "0") not in ("0", ""):
    impl = _ref
else:
    try:
        from . import compiled as impl  # noqa: F401
    except ImportError:
        impl = _ref

BACKEND_NAME = impl.BACKEND_NAME


def get_backend(name=None):
    """Return a backend module by name ('python' or 'compiled')."""
    if name in (None, BACKEND_NAME):
        return impl
    if name == "python":
        return _ref
    if name == "compiled":
        from . import compiled
        return compiled
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        from . import compiled  # noqa: F401
        names.append("compiled")
    except ImportError:
        pass
    return names
