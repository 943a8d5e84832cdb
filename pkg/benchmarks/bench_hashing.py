#!/usr/bin/env python3
"""Throughput of the compiled n-gram hashing kernel vs the pure-Python twin.

The hashing trick is the tokenizer-side hot loop: every token of every
document passes through it once at featurization time. Usage:

    python3 benchmarks/bench_hashing.py [--tokens 200000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from swipe import _hashkernel_py
from swipe import hashing


def make_tokens(n_tokens: int, seed: int = 0) -> list[str]:
    rng = np.random.default_rng(seed)
    vocab = [f"word{i}" for i in range(5000)]
    return [vocab[int(i)] for i in rng.integers(0, len(vocab), size=n_tokens)]


def bench(kernel, tokens, n_buckets, repeats):
    # segment-sized chunks, matching how the encoder calls the kernel
    chunks = [tokens[i:i + 64] for i in range(0, len(tokens), 64)]
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for chunk in chunks:
            kernel.ngram_bucket_ids(chunk, (1, 2), n_buckets, 0)
        best = min(best, time.perf_counter() - start)
    return len(tokens) / best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tokens", type=int, default=200_000)
    parser.add_argument("--buckets", type=int, default=4096)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    tokens = make_tokens(args.tokens)
    sample = tokens[:64]
    assert list(_hashkernel_py.ngram_bucket_ids(sample, (1, 2), args.buckets, 0)) == list(
        hashing.ngram_bucket_ids(sample, args.buckets, (1, 2), 0)
    ), "kernels disagree; benchmark aborted"

    pure = bench(_hashkernel_py, tokens, args.buckets, args.repeats)
    print(f"pure python : {pure:12.0f} tokens/s")
    if hashing.HAVE_NATIVE_KERNEL:
        from swipe import _hashkernel

        native = bench(_hashkernel, tokens, args.buckets, args.repeats)
        print(f"cython      : {native:12.0f} tokens/s")
        print(f"speedup     : {native / pure:12.1f}x")
    else:
        print("cython      : not built (run `python setup.py build_ext --inplace`)")


if __name__ == "__main__":
    main()
