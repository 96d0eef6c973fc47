"""Selects the cone projection kernel at import time.

Prefers the compiled extension, falls back to the pure NumPy twin.  Both
expose ``binding_counts(w, z)`` with identical semantics; ``IMPLEMENTATION``
records which one is active.
"""

from __future__ import annotations

from . import _projection_py

try:
    from . import _projection as _active
except ImportError:
    _active = _projection_py

IMPLEMENTATION: str = _active.IMPLEMENTATION
binding_counts = _active.binding_counts


def available_implementations() -> dict:
    """Map implementation name to its binding_counts callable."""
    impls = {_projection_py.IMPLEMENTATION: _projection_py.binding_counts}
    impls[_active.IMPLEMENTATION] = _active.binding_counts
    return impls
