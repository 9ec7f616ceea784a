"""Pure-Python batch codec kernels.

Reference implementation of the API in ``_ckernels.pyx``; selected by
``dfibridge._kernels`` when the compiled module is unavailable.
"""
import numpy as np

_RESERVED = 0xFFFFFF0000000000
_KIND_RESERVED = 3

OK = 0
RESERVED_NONZERO = 1
RESERVED_KIND = 2


def word_status(word):
    if word & _RESERVED:
        return RESERVED_NONZERO
    if (word >> 14) & 3 == _KIND_RESERVED:
        return RESERVED_KIND
    return OK


def first_invalid(words):
    """Index of the first word that fails decoding, or None."""
    for i, w in enumerate(words):
        if w & _RESERVED or (w >> 14) & 3 == _KIND_RESERVED:
            return i
    return None


def encode_fields(cs0, ca0, cs1, ca1, kind, slot, hold):
    """Vectorised encode; every argument is an equal-length integer sequence."""
    out = np.empty(len(cs0), dtype=np.uint64)
    for i in range(len(cs0)):
        out[i] = (
            int(ca0[i])
            | int(cs0[i]) << 6
            | int(ca1[i]) << 7
            | int(cs1[i]) << 13
            | int(kind[i]) << 14
            | int(slot[i]) << 16
            | int(hold[i]) << 24
        )
    return out


def decode_words(words):
    """Split words into an (n, 7) field table and a per-word status vector.

    Columns are cs0, ca0, cs1, ca1, kind, slot, hold. Rows whose status is not
    OK hold zeros.
    """
    n = len(words)
    fields = np.zeros((n, 7), dtype=np.int64)
    status = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        w = int(words[i])
        s = word_status(w)
        status[i] = s
        if s:
            continue
        fields[i, 0] = (w >> 6) & 1
        fields[i, 1] = w & 0x3F
        fields[i, 2] = (w >> 13) & 1
        fields[i, 3] = (w >> 7) & 0x3F
        fields[i, 4] = (w >> 14) & 3
        fields[i, 5] = (w >> 16) & 0xFF
        fields[i, 6] = (w >> 24) & 0xFFFF
    return fields, status
