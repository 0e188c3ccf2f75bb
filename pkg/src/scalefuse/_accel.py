"""Backend selection for the hot kernels.

Kernels come in two flavours: an explicit-loop version compiled with numba's
``njit`` and a vectorised pure-numpy version. ``SCALEFUSE_BACKEND`` picks the
default (``numba`` or ``numpy``); ``SCALEFUSE_DISABLE_NUMBA=1`` forces numpy.
When numba is not importable the numpy path is used regardless.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")


def default_backend():
    if os.environ.get("SCALEFUSE_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return "numpy"
    name = os.environ.get("SCALEFUSE_BACKEND", "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"SCALEFUSE_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


def resolve_backend(backend=None):
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)
