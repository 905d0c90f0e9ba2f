#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the pure-Python fallback.

Covers the hot paths: edit-distance DP (corpus-scale CER/WER scoring), the
seeded hash primitive, and end-to-end thinker compilation throughput (which
is dominated by Python object work, so backends should be close there).

    python3 benchmarks/bench_kernels.py [--pairs 2000] [--dialogues 20000]
"""
import argparse
import random
import time

from seqforge import _pykernels

try:
    from seqforge import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, *args):
    start = time.perf_counter()
    result = fn(*args)
    return time.perf_counter() - start, result


def bench_edit_ops(backend, pairs):
    def run():
        acc = 0
        for a, b in pairs:
            s, i, d = backend.edit_ops(a, b)
            acc += s + i + d
        return acc

    return timeit(run)


def bench_hash(backend, blobs):
    def run():
        acc = 0
        for blob in blobs:
            acc ^= backend.hash_bytes64(blob, 7)
        return acc

    return timeit(run)


def bench_thinker_compile(n_dialogues):
    from seqforge import synthetic, thinker

    corpus = synthetic.synth_corpus(n_dialogues, 1, n_turns=2, segments_per_assistant=3)
    policy = thinker.InterleavePolicy(0.5, 0.5)

    def run():
        total = 0
        for d in corpus:
            total += len(thinker.interleave_dialogue(d, policy, 42).elements)
        return total

    elapsed, total = timeit(run)
    return elapsed, n_dialogues / elapsed, total


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=2000)
    parser.add_argument("--length", type=int, default=80)
    parser.add_argument("--dialogues", type=int, default=20000)
    args = parser.parse_args()

    rng = random.Random(0)
    pairs = [([rng.randrange(30) for _ in range(args.length)],
              [rng.randrange(30) for _ in range(args.length)])
             for _ in range(args.pairs)]
    blobs = [bytes(rng.getrandbits(8) for _ in range(32)) for _ in range(200_000)]

    backends = [("python", _pykernels)]
    if _ckernels is not None:
        backends.append(("c", _ckernels))
    else:
        print("note: compiled extension not built; run "
              "`python3 setup.py build_ext --inplace` to compare backends\n")

    print(f"edit_ops: {args.pairs} pairs of length {args.length}")
    results = {}
    for name, backend in backends:
        elapsed, checksum = bench_edit_ops(backend, pairs)
        results[name] = (elapsed, checksum)
        cells = args.pairs * args.length * args.length
        print(f"  {name:7s} {elapsed:8.3f}s  "
              f"{args.pairs / elapsed:10.0f} pairs/s  {cells / elapsed / 1e6:8.1f} Mcell/s")
    if len(results) == 2:
        assert results["python"][1] == results["c"][1], "backend results diverge!"
        print(f"  speedup {results['python'][0] / results['c'][0]:.1f}x")

    print(f"\nhash_bytes64: {len(blobs)} 32-byte blobs")
    results = {}
    for name, backend in backends:
        elapsed, checksum = bench_hash(backend, blobs)
        results[name] = (elapsed, checksum)
        print(f"  {name:7s} {elapsed:8.3f}s  {len(blobs) / elapsed / 1e6:6.2f} Mhash/s")
    if len(results) == 2:
        assert results["python"][1] == results["c"][1], "backend results diverge!"
        print(f"  speedup {results['python'][0] / results['c'][0]:.1f}x")

    print(f"\nthinker compile: {args.dialogues} synthetic dialogues "
          f"(selected backend via seqforge.kernels)")
    elapsed, rate, total = bench_thinker_compile(args.dialogues)
    print(f"  {elapsed:8.3f}s  {rate:10.0f} dialogues/s  ({total} elements)")


if __name__ == "__main__":
    main()
