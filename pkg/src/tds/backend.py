"""Backend selection for the hot kernel loops.

``TDS_BACKEND`` environment variable:

* ``auto`` (default) — compiled extension if importable, else numpy;
* ``compiled`` — require the extension, raise if missing;
* ``python`` — force the numpy fallback.

Selection happens once at import so a given environment always runs the same
code path (reports stay reproducible).
"""

from __future__ import annotations

import os

from . import _kernel_py


def _select():
    choice = os.environ.get("TDS_BACKEND", "auto").lower()
    if choice not in ("auto", "compiled", "python"):
        raise ValueError(f"TDS_BACKEND must be auto|compiled|python, got {choice!r}")
    if choice == "python":
        return _kernel_py
    try:
        from . import _kernel_c
        return _kernel_c
    except ImportError:
        if choice == "compiled":
            raise ImportError(
                "TDS_BACKEND=compiled but tds._kernel_c is not built; "
                "reinstall with a C toolchain or use TDS_BACKEND=python")
        return _kernel_py


_impl = _select()

NAME: str = _impl.NAME
cmk_from_dots = _impl.cmk_from_dots
cmk_matrix = _impl.cmk_matrix
cmk_gram = _impl.cmk_gram
monomial_matrix = _impl.monomial_matrix
