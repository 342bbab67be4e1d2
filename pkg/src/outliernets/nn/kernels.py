"""Kernel backend registry.

Two interchangeable implementations of the convolution kernels exist:

- ``native``: Cython-compiled loops (preferred; built at install time), and
- ``python``: pure numpy (always available).

The best available backend is selected at import time; :func:`set_backend`
overrides the choice process-wide. Layers look the active backend up at call
time, so switching takes effect immediately. The backends agree to float
tolerance but not bit for bit (different accumulation orders), so artifacts
record which backend produced them.
"""

from __future__ import annotations

from . import _kernels_py

_BACKENDS = {"python": _kernels_py}

try:  # the compiled extension is optional
    from . import _kernels_cy

    _BACKENDS["native"] = _kernels_cy
except ImportError:  # pragma: no cover - depends on build environment
    _kernels_cy = None

_active = "native" if "native" in _BACKENDS else "python"


def available_backends() -> tuple[str, ...]:
    """Names of importable backends, preferred first."""
    return tuple(name for name in ("native", "python") if name in _BACKENDS)


def active_backend() -> str:
    """Name of the backend layers currently dispatch to."""
    return _active


def set_backend(name: str) -> None:
    """Select the kernel backend by name ("native" or "python").

    Raises:
        ValueError: unknown or unavailable backend name.
    """
    global _active
    if name not in _BACKENDS:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(available_backends())}"
        )
    _active = name


def get(name: str | None = None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        name = _active
    if name not in _BACKENDS:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(available_backends())}"
        )
    return _BACKENDS[name]
