"""Backend dispatch for the hot numeric loops.

The numba backend is used when numba imports cleanly and the environment
variable ``MECHLAB_DISABLE_JIT`` is unset (or ``0``).  Setting it to ``1``
selects the pure-numpy fallback, which produces the same results to
floating-point rounding.
"""
import os
from types import SimpleNamespace

from . import _kernels_numpy

_NAMES = ("conv2d", "factor_sgd_run", "ctgd_rk4", "fourier_sgd_chunk")
OK, NONPOSITIVE, NONFINITE = 0, 1, 2


def _namespace(module, name):
    return SimpleNamespace(name=name, **{k: getattr(module, k) for k in _NAMES})


numpy_backend = _namespace(_kernels_numpy, "numpy")

try:
    from . import _kernels_numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_backend = None
else:
    numba_backend = _namespace(_kernels_numba, "numba")


def jit_disabled():
    return os.environ.get("MECHLAB_DISABLE_JIT", "0").strip().lower() not in ("", "0", "false", "no")


def get_backend(name=None):
    """Return the kernel namespace for ``name`` ('numba', 'numpy' or None=auto)."""
    if name is None:
        name = "numpy" if (jit_disabled() or numba_backend is None) else "numba"
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        if numba_backend is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return numba_backend
    raise ValueError(f"unknown backend {name!r}")


def active():
    return get_backend()
