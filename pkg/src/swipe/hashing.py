"""Deterministic n-gram hashing (the hashing trick).

Selects the compiled kernel (`swipe._hashkernel`, built with Cython) when it
is importable and falls back to the pure-Python twin otherwise. Both kernels
implement the identical seeded 64-bit FNV-1a scheme documented in
`swipe._hashkernel_py`, so model outputs do not depend on which one is active.
`benchmarks/bench_hashing.py` compares their throughput.
"""

from __future__ import annotations

import numpy as np

from swipe import _hashkernel_py

try:
    from swipe import _hashkernel as _kernel

    HAVE_NATIVE_KERNEL = True
except ImportError:
    _kernel = _hashkernel_py
    HAVE_NATIVE_KERNEL = False


def hash64(data: bytes, seed: int = 0) -> int:
    """Seeded 64-bit FNV-1a of a byte string (platform independent)."""
    return _kernel.hash64(data, seed)


def ngram_bucket_ids(
    tokens: list[str],
    n_buckets: int,
    orders: tuple[int, ...] = (1, 2),
    seed: int = 0,
) -> np.ndarray:
    """Hash every n-gram of `tokens` into `[0, n_buckets)`.

    Ids are emitted for each order in ascending order, positions left to
    right, so the output is a deterministic function of the inputs. Orders
    longer than the token list contribute nothing; an empty token list yields
    an empty array.
    """
    if n_buckets < 1:
        raise ValueError(f"n_buckets must be >= 1, got {n_buckets}")
    ids = _kernel.ngram_bucket_ids(tokens, tuple(orders), n_buckets, seed)
    return np.asarray(ids, dtype=np.int64)


def derive_seed(name: str, seed: int) -> int:
    """Fan a base seed out into a named sub-seed (stable across runs)."""
    return hash64(name.encode("utf-8"), seed) % (2**32)
