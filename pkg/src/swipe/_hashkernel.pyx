# cython: language_level=3, boundscheck=False, wraparound=False
"""Cython n-gram hashing kernel.

Hot loop of the hashed n-gram encoder: token bytes -> seeded 64-bit FNV-1a
-> bucket id. Must stay bit-identical to `swipe._hashkernel_py`; the pure
module's docstring is the normative description of the hash.
"""

from libc.stdint cimport uint8_t, uint64_t

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL
cdef uint8_t SEP = 0x1F


cdef inline uint64_t _absorb(uint64_t h, const uint8_t* data, Py_ssize_t n) noexcept:
    cdef Py_ssize_t i
    for i in range(n):
        h = (h ^ data[i]) * FNV_PRIME
    return h


cdef inline uint64_t _seed_state(uint64_t seed) noexcept:
    cdef uint64_t h = FNV_OFFSET
    cdef int i
    for i in range(8):
        h = (h ^ ((seed >> (8 * i)) & 0xFF)) * FNV_PRIME
    return h


def hash64(bytes data, seed=0):
    """Seeded 64-bit FNV-1a over a byte string."""
    cdef uint64_t h = _seed_state(<uint64_t> (seed & 0xFFFFFFFFFFFFFFFF))
    h = _absorb(h, <const uint8_t*> data, len(data))
    return h


def ngram_bucket_ids(tokens, orders, n_buckets, seed):
    """Bucket ids of all n-grams of `tokens`, orders ascending then position."""
    cdef uint64_t state0 = _seed_state(<uint64_t> (seed & 0xFFFFFFFFFFFFFFFF))
    cdef uint64_t buckets = <uint64_t> n_buckets
    cdef uint64_t h
    cdef Py_ssize_t n = len(tokens), start, j, order
    cdef list encoded = [t.encode("utf-8") for t in tokens]
    cdef list out = []
    cdef bytes tok
    for order in sorted(orders):
        if order < 1:
            raise ValueError(f"n-gram order must be >= 1, got {order}")
        for start in range(n - order + 1):
            h = state0
            for j in range(start, start + order):
                if j > start:
                    h = (h ^ SEP) * FNV_PRIME
                tok = <bytes> encoded[j]
                h = _absorb(h, <const uint8_t*> tok, len(tok))
            out.append(h % buckets)
    return out
