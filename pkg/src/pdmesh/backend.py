"""Kernel backend selection: compiled extension with numpy fallback.

The compiled kernels (``pdmesh._kernels``) are optional.  When the
extension is missing, numpy implementations of the same two operations
are used instead; both are deterministic, but their floating-point
reduction orders differ, so results agree only to rounding error.

The active backend is chosen at import time and can be overridden with
:func:`use` or the ``PDMESH_BACKEND`` environment variable
(``compiled``, ``python``, or ``auto``).
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _kernels
except ImportError:
    _kernels = None

COMPILED_AVAILABLE = _kernels is not None


def _csr_matmat_python(indptr, indices, data, dense):
    # per-entry products, then per-row segment sums via prefix differences
    prod = data[:, None] * dense[indices]
    csum = np.empty((prod.shape[0] + 1, prod.shape[1]))
    csum[0] = 0.0
    np.cumsum(prod, axis=0, out=csum[1:])
    return csum[indptr[1:]] - csum[indptr[:-1]]


def _scatter_add_rows_python(out, idx, src):
    np.add.at(out, idx, src)


_IMPLS = {
    "python": (_csr_matmat_python, _scatter_add_rows_python),
}
if COMPILED_AVAILABLE:
    _IMPLS["compiled"] = (_kernels.csr_matmat, _kernels.scatter_add_rows)

_active = "unset"
csr_matmat = None
scatter_add_rows = None


def use(name: str) -> str:
    """Select the backend; returns the name actually activated."""
    global _active, csr_matmat, scatter_add_rows
    if name == "auto":
        name = "compiled" if COMPILED_AVAILABLE else "python"
    if name not in _IMPLS:
        raise ValueError(
            f"backend {name!r} not available (have: {sorted(_IMPLS)})")
    csr_matmat, scatter_add_rows = _IMPLS[name]
    _active = name
    return name


def active() -> str:
    return _active


use(os.environ.get("PDMESH_BACKEND", "auto"))
