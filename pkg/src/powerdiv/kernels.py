"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. ``POWERDIV_BACKEND=python`` forces the fallback and
``POWERDIV_BACKEND=cython`` makes a missing extension an error.
"""
from __future__ import annotations

import os

from . import _pykernels

_choice = os.environ.get("POWERDIV_BACKEND", "").strip().lower()

if _choice == "python":
    backend = _pykernels
else:
    try:
        from . import _ckernels as backend  # type: ignore[no-redef]
    except ImportError:
        if _choice == "cython":
            raise
        backend = _pykernels

BACKEND = backend.NAME

build_alias = backend.build_alias
compensated_sum = backend.compensated_sum
draw_cells = backend.draw_cells
simulate_block = backend.simulate_block
uniforms = backend.uniforms


def available_backends():
    """Mapping of backend name to module for every importable backend."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
