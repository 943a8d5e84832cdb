"""Pure-Python n-gram hashing kernel.

Reference implementation of the bucket-id kernel. `swipe._hashkernel` is the
Cython twin; both must produce bit-identical output (enforced by tests).

Hash definition (stable across platforms and Python versions):

* FNV-1a, 64-bit: ``h = offset_basis``; per byte ``h ^= byte; h *= prime``
  (mod 2**64).
* The 8 bytes of the seed (little-endian, unsigned) are absorbed first.
* An n-gram is hashed by absorbing each token's UTF-8 bytes in order, with a
  single 0x1F separator byte between consecutive tokens.
* Bucket id = hash mod n_buckets.
"""

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF
_SEP = b"\x1f"


def hash64(data: bytes, seed: int = 0) -> int:
    """Seeded 64-bit FNV-1a over a byte string."""
    h = _FNV_OFFSET
    for b in (seed & _MASK).to_bytes(8, "little"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


def ngram_bucket_ids(tokens, orders, n_buckets, seed):
    """Bucket ids of all n-grams of `tokens`, orders ascending then position.

    Returns a plain list of ints; the facade converts to an array.
    """
    encoded = [t.encode("utf-8") for t in tokens]
    out = []
    for order in sorted(orders):
        if order < 1:
            raise ValueError(f"n-gram order must be >= 1, got {order}")
        for start in range(len(encoded) - order + 1):
            h = hash64(_SEP.join(encoded[start:start + order]), seed)
            out.append(h % n_buckets)
    return out
