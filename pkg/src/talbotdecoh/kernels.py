"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the pure-Python
reference implementation is used.  :func:`use_backend` switches explicitly,
which the tests and the benchmark rely on.
"""

from __future__ import annotations

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = _ckernels if _ckernels is not None else _pykernels


def available_backends():
    return tuple(_BACKENDS)


def active_backend() -> str:
    return _active.BACKEND


def use_backend(name: str) -> None:
    global _active
    try:
        _active = _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"backend {name!r} not available; choose from {available_backends()}"
        ) from None


def get_backend(name: str | None = None):
    return _active if name is None else _BACKENDS[name]


def coherence_sum(*args, backend=None, **kwargs):
    return get_backend(backend).coherence_sum(*args, **kwargs)


def trace_batch(*args, backend=None, **kwargs):
    return get_backend(backend).trace_batch(*args, **kwargs)
