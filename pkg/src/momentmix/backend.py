"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the NumPy
fallback keeps everything working (slower) without a compiler.  Callers that
need a specific backend (the kernel benchmark does) request it by name.
"""

from __future__ import annotations

from momentmix import _kernel_py

try:
    from momentmix import _kernel
except ImportError:  # extension not built
    _kernel = None

DEFAULT_BACKEND = _kernel if _kernel is not None else _kernel_py
HAVE_COMPILED = _kernel is not None


def get_backend(name: str | None = None):
    """Resolve a backend module by name: None/'auto', 'compiled', 'python'."""
    if name is None or name == "auto":
        return DEFAULT_BACKEND
    if name == "python":
        return _kernel_py
    if name == "compiled":
        if _kernel is None:
            raise RuntimeError("compiled kernel requested but the extension is not built")
        return _kernel
    raise ValueError(f"unknown backend {name!r}")


def backend_name(module=None) -> str:
    return (module or DEFAULT_BACKEND).BACKEND_NAME
