"""Kernel backend selection.

The compiled Cython module is preferred when it imports cleanly; otherwise the
NumPy implementation in :mod:`shellab.backend.pykern` is used.  Set
``SHELLAB_KERNELS=python`` (or ``cython``) to force a choice; forcing
``cython`` raises if the extension is unavailable.

Both backends implement the same two entry points:

``bilinear(variant, a, b, kk, u, v)``
    B(u, v) for a (batch, m) pair of complex state arrays.
``bilinear_first_adjoint(variant, a, b, kk, u, w)``
    transpose of v -> B(v, u) in the real inner product.
"""

import os

from . import pykern

GOY = pykern.GOY
SABRA = pykern.SABRA

_choice = os.environ.get("SHELLAB_KERNELS", "").strip().lower()

_ext = None
if _choice != "python":
    try:
        from . import _kernels as _ext
    except ImportError:
        _ext = None
        if _choice == "cython":
            raise ImportError(
                "SHELLAB_KERNELS=cython but the compiled kernels are not "
                "built; run `python setup.py build_ext --inplace`"
            )

if _ext is not None:
    KERNEL_BACKEND = "cython"
    bilinear = _ext.bilinear
    bilinear_first_adjoint = _ext.bilinear_first_adjoint
else:
    KERNEL_BACKEND = "python"
    bilinear = pykern.bilinear
    bilinear_first_adjoint = pykern.bilinear_first_adjoint


def implementations():
    """Return the available kernel implementations keyed by name."""
    impls = {"python": pykern}
    if _ext is not None:
        impls["cython"] = _ext
    return impls
