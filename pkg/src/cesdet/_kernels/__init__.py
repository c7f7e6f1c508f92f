"""Detector-statistic kernels with a compiled core and a numpy fallback.

The native Cython extension is preferred when it is importable; setting
``CESDET_FORCE_FALLBACK=1`` in the environment pins the numpy backend.
Both backends implement the same ``detector_stats`` contract and agree to
floating-point roundoff (enforced by the test suite).
"""

from __future__ import annotations

import os

from . import fallback

_FORCE_FALLBACK = os.environ.get("CESDET_FORCE_FALLBACK", "") not in ("", "0")

try:
    if _FORCE_FALLBACK:
        raise ImportError("fallback forced by CESDET_FORCE_FALLBACK")
    from . import _native  # type: ignore[attr-defined]

    BACKEND = "native"
    _impl = _native
except ImportError:
    BACKEND = "fallback"
    _impl = fallback

detector_stats = _impl.detector_stats


def available_backends() -> list[str]:
    """Names of the importable backends ('fallback' is always present)."""
    names = ["fallback"]
    try:
        from . import _native  # noqa: F401

        names.insert(0, "native")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return the kernel module for ``name`` ('native' or 'fallback')."""
    if name == "fallback":
        return fallback
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown backend {name!r}")
