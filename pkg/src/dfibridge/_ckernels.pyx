# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch codec kernels; same API as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, uint8_t

cnp.import_array()

cdef uint64_t _RESERVED = 0xFFFFFF0000000000ULL

OK = 0
RESERVED_NONZERO = 1
RESERVED_KIND = 2


cdef inline uint8_t _status(uint64_t w) nogil:
    if w & _RESERVED:
        return 1
    if ((w >> 14) & 3) == 3:
        return 2
    return 0


def word_status(word):
    return _status(<uint64_t>word)


def first_invalid(words):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] arr = np.asarray(words, dtype=np.uint64)
    cdef Py_ssize_t i, n = arr.shape[0]
    cdef uint64_t[:] view = arr
    with nogil:
        for i in range(n):
            if _status(view[i]):
                break
        else:
            i = -1
    return None if i < 0 else i


def encode_fields(cs0, ca0, cs1, ca1, kind, slot, hold):
    cdef int64_t[:] a0 = np.asarray(cs0, dtype=np.int64)
    cdef int64_t[:] a1 = np.asarray(ca0, dtype=np.int64)
    cdef int64_t[:] a2 = np.asarray(cs1, dtype=np.int64)
    cdef int64_t[:] a3 = np.asarray(ca1, dtype=np.int64)
    cdef int64_t[:] a4 = np.asarray(kind, dtype=np.int64)
    cdef int64_t[:] a5 = np.asarray(slot, dtype=np.int64)
    cdef int64_t[:] a6 = np.asarray(hold, dtype=np.int64)
    cdef Py_ssize_t i, n = a0.shape[0]
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[:] o = out
    with nogil:
        for i in range(n):
            o[i] = (<uint64_t>a1[i]
                    | (<uint64_t>a0[i] << 6)
                    | (<uint64_t>a3[i] << 7)
                    | (<uint64_t>a2[i] << 13)
                    | (<uint64_t>a4[i] << 14)
                    | (<uint64_t>a5[i] << 16)
                    | (<uint64_t>a6[i] << 24))
    return out


def decode_words(words):
    cdef uint64_t[:] w = np.asarray(words, dtype=np.uint64)
    cdef Py_ssize_t i, n = w.shape[0]
    fields = np.zeros((n, 7), dtype=np.int64)
    status = np.zeros(n, dtype=np.uint8)
    cdef int64_t[:, :] f = fields
    cdef uint8_t[:] s = status
    cdef uint64_t x
    cdef uint8_t st
    with nogil:
        for i in range(n):
            x = w[i]
            st = _status(x)
            s[i] = st
            if st:
                continue
            f[i, 0] = (x >> 6) & 1
            f[i, 1] = x & 0x3F
            f[i, 2] = (x >> 13) & 1
            f[i, 3] = (x >> 7) & 0x3F
            f[i, 4] = (x >> 14) & 3
            f[i, 5] = (x >> 16) & 0xFF
            f[i, 6] = (x >> 24) & 0xFFFF
    return fields, status
