#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the two hot kernels (LSTM sequence pass and same-padded 1-D
convolution), forward and backward, at shapes the model actually uses,
then a full training epoch on a synthetic batch. Usage:

    python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

from emplite import _kernels as kernels


def _time(fn, repeats):
    fn()  # warm up
    started = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - started) / repeats


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    # word-encoder convolution: one sentence of 10 words x 16 chars x 50 dims
    x = rng.standard_normal((10, 16, 50)).astype(np.float32)
    w = rng.standard_normal((5, 50, 16)).astype(np.float32)
    b = rng.standard_normal(16).astype(np.float32)
    gy = rng.standard_normal((10, 16, 16)).astype(np.float32)

    # sequence pass: 10 timesteps x 82 features, 16 units
    xs = rng.standard_normal((10, 82)).astype(np.float32)
    wx = rng.standard_normal((82, 64)).astype(np.float32)
    wh = rng.standard_normal((16, 64)).astype(np.float32)
    bb = rng.standard_normal(64).astype(np.float32)
    gout = rng.standard_normal((10, 16)).astype(np.float32)

    rows = {}
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        timings = {}
        timings["conv1d fwd"] = _time(lambda: kernels.conv1d_fwd(x, w, b), repeats)
        timings["conv1d bwd"] = _time(lambda: kernels.conv1d_bwd(x, w, gy), repeats)
        _, states, cells, gates = kernels.lstm_fwd(xs, wx, wh, bb)
        timings["lstm fwd"] = _time(lambda: kernels.lstm_fwd(xs, wx, wh, bb), repeats)
        timings["lstm bwd"] = _time(
            lambda: kernels.lstm_bwd(xs, wx, wh, None, None, states, cells, gates, gout),
            repeats,
        )
        rows[backend] = timings
    return rows


def bench_epoch():
    import synthdata
    from emplite.corpus import build_vocab, subset_glove
    from emplite.model import ModelConfig, train

    train_s, dev_s, _ = synthdata.gen_corpus(seed=3, n_train=120, n_dev=16, n_test=1)
    import tempfile

    fd, gpath = tempfile.mkstemp(suffix=".txt")
    os.close(fd)
    try:
        synthdata.write_glove(gpath, synthdata.corpus_words(train_s, dev_s), seed=3)
        vocab = build_vocab(train_s)
        glove = subset_glove(gpath, vocab, dim=50, seed=3)
        rows = {}
        for backend in kernels.available_backends():
            kernels.use_backend(backend)
            config = ModelConfig(variant="emplite_full", seed=3)
            started = time.perf_counter()
            train(config, vocab, train_s, dev_s, glove=glove, max_epochs=3, patience=3)
            rows[backend] = (time.perf_counter() - started) / 3
        return rows
    finally:
        os.unlink(gpath)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--skip-epoch", action="store_true", help="kernel microbenchmarks only")
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}\n")

    rows = bench_kernels(args.repeats)
    names = list(next(iter(rows.values())))
    width = max(len(n) for n in names)
    header = f"{'kernel':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in names:
        line = f"{name:<{width}}  "
        for b in backends:
            line += f"{rows[b][name] * 1e6:>10.1f}us"
        if len(backends) == 2:
            line += f"{rows['python'][name] / rows['cython'][name]:>9.1f}x"
        print(line)

    if not args.skip_epoch:
        print("\ntraining epoch (120 sentences, full variant):")
        epoch = bench_epoch()
        for b in backends:
            print(f"  {b:>8}: {epoch[b]:.2f}s/epoch")
        if len(backends) == 2:
            print(f"  speedup: {epoch['python'] / epoch['cython']:.1f}x")


if __name__ == "__main__":
    main()
