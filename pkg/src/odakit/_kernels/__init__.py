"""Kernel backend selection.

The compiled extension (`_core`, Cython) and the numpy fallback (`_pure`)
implement identical contracts. The compiled build is preferred when
importable; set ODA_KERNELS=pure or ODA_KERNELS=compiled to force one.
"""

import os

from . import _pure

try:
    from . import _core
except ImportError:
    _core = None

_choice = os.environ.get("ODA_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "compiled", "pure"):
    raise ImportError(
        f"ODA_KERNELS must be one of auto/compiled/pure, got {_choice!r}"
    )
if _choice == "compiled" and _core is None:
    raise ImportError(
        "ODA_KERNELS=compiled but odakit._kernels._core is not built"
    )

if _choice == "pure" or _core is None:
    _active = _pure
    BACKEND = "pure"
else:
    _active = _core
    BACKEND = "compiled"

softmax_rows = _active.softmax_rows
log_softmax_rows = _active.log_softmax_rows
entropy_rows = _active.entropy_rows
entropy_grad_rows = _active.entropy_grad_rows
soft_ce_rows = _active.soft_ce_rows


def available_backends():
    names = ["pure"]
    if _core is not None:
        names.insert(0, "compiled")
    return names


def get_backend(name):
    """Return the named kernel module ("compiled" or "pure").

    Used by the parity tests and the benchmark; library code goes through
    the module-level functions bound above.
    """
    if name == "pure":
        return _pure
    if name == "compiled":
        if _core is None:
            raise ImportError("compiled kernel extension is not built")
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
