"""Select the batch codec kernels at import time.

The compiled ``_ckernels`` extension is used when it was built; set
``DFIBRIDGE_PURE_PYTHON=1`` to force the pure-Python fallback.
"""
import os

from . import _kernels_py

_impl = _kernels_py
BACKEND = "python"

if not os.environ.get("DFIBRIDGE_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

first_invalid = _impl.first_invalid
encode_fields = _impl.encode_fields
decode_words = _impl.decode_words
word_status = _impl.word_status
OK, RESERVED_NONZERO, RESERVED_KIND = _impl.OK, _impl.RESERVED_NONZERO, _impl.RESERVED_KIND


def available_backends():
    """Map backend name to kernel module for every importable backend."""
    found = {"python": _kernels_py}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
